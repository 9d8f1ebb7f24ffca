//! Cotangent Laplacian, its generalized eigenbasis, and the maps between
//! vertex functions and spectral coefficients.
//!
//! The basis `Φ` is mass-orthonormal (`Φᵀ M Φ = I`), so projection is
//! `a = Φᵀ M f` and synthesis is `f = Φ a`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{cross, dot, norm, sub, Mesh};
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Number of eigenfunctions used when none is given.
pub const DEFAULT_BASIS_SIZE: usize = 20;

/// Meshes up to this size are solved with a dense eigendecomposition.
const DENSE_LIMIT: usize = 600;

pub type CoefficientVector = DVector<f64>;

/// Stiffness (cotangent) matrix and lumped mass diagonal.
#[derive(Debug, Clone)]
pub struct Laplacian {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
}

pub fn cotangent_laplacian(mesh: &Mesh) -> Result<Laplacian> {
    let m = mesh.num_vertices();
    let p = mesh.vertices();
    let mut trip = Vec::with_capacity(mesh.num_triangles() * 12);
    for (f, t) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let (i, j, o) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let e1 = sub(p[i], p[o]);
            let e2 = sub(p[j], p[o]);
            let cot = dot(e1, e2) / norm(cross(e1, e2));
            if !cot.is_finite() {
                return Err(Error::DegenerateTriangle(f));
            }
            let w = 0.5 * cot;
            trip.push((i, j, -w));
            trip.push((j, i, -w));
            trip.push((i, i, w));
            trip.push((j, j, w));
        }
    }
    Ok(Laplacian {
        stiffness: CsrMatrix::from_triplets(m, &trip),
        mass: mesh.vertex_areas().to_vec(),
    })
}

/// Truncated Laplace–Beltrami eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    phi: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    masses: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(phi: DMatrix<f64>, eigenvalues: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if phi.nrows() != masses.len() || phi.ncols() != eigenvalues.len() {
            return Err(Error::dims(
                format!("{}x{}", masses.len(), eigenvalues.len()),
                format!("{}x{}", phi.nrows(), phi.ncols()),
            ));
        }
        Ok(SpectralBasis {
            phi,
            eigenvalues,
            masses,
        })
    }

    /// `m × n` matrix whose columns are eigenfunctions.
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn num_vertices(&self) -> usize {
        self.phi.nrows()
    }

    pub fn size(&self) -> usize {
        self.phi.ncols()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.phi.column(k).iter().copied().collect()
    }

    /// The first `n` eigenpairs.
    pub fn truncated(&self, n: usize) -> Result<SpectralBasis> {
        if n == 0 || n > self.size() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a basis of size {} to {n}",
                self.size()
            )));
        }
        SpectralBasis::new(
            self.phi.columns(0, n).into_owned(),
            self.eigenvalues[..n].to_vec(),
            self.masses.clone(),
        )
    }

    /// `a = Φᵀ M f`.
    pub fn project(&self, f: &[f64]) -> Result<CoefficientVector> {
        if f.len() != self.num_vertices() {
            return Err(Error::dims(self.num_vertices(), f.len()));
        }
        let mf = DVector::from_iterator(f.len(), f.iter().zip(&self.masses).map(|(a, b)| a * b));
        Ok(self.phi.tr_mul(&mf))
    }

    /// `f = Φ a`.
    pub fn synthesize(&self, a: &CoefficientVector) -> Result<Vec<f64>> {
        if a.len() != self.size() {
            return Err(Error::dims(self.size(), a.len()));
        }
        Ok((&self.phi * a).iter().copied().collect())
    }

    /// Largest entry of `|Φᵀ M Φ − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mphi = DMatrix::from_fn(self.phi.nrows(), self.phi.ncols(), |i, j| {
            self.masses[i] * self.phi[(i, j)]
        });
        let g = self.phi.tr_mul(&mphi);
        (g - DMatrix::identity(self.size(), self.size())).amax()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (m, n) = self.phi.shape();
        let mut buf = Vec::with_capacity(24 + 8 * (m + n + m * n));
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(m as u64).to_le_bytes());
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        for v in &self.masses {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.eigenvalues {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for i in 0..m {
            for j in 0..n {
                buf.extend_from_slice(&self.phi[(i, j)].to_le_bytes());
            }
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SpectralBasis> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 24 || &bytes[..8] != CACHE_MAGIC {
            return Err(Error::Format(format!("{} is not a basis cache", path.display())));
        }
        let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
        let (m, n) = (word(1) as usize, word(2) as usize);
        let expected = 8usize
            .checked_mul(3 + m + n + m.saturating_mul(n))
            .ok_or_else(|| Error::Format("basis cache header overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "basis cache has {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let float = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
        let masses = (0..m).map(|i| float(3 + i)).collect();
        let eigenvalues = (0..n).map(|i| float(3 + m + i)).collect();
        let phi = DMatrix::from_fn(m, n, |i, j| float(3 + m + n + i * n + j));
        SpectralBasis::new(phi, eigenvalues, masses)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"FMBASIS1";

/// Computes the eigenbasis of a mesh: Laplacian assembly plus eigensolve.
pub fn mesh_eigenbasis(mesh: &Mesh, n: usize) -> Result<SpectralBasis> {
    let lap = cotangent_laplacian(mesh)?;
    eigenbasis(&lap.stiffness, &lap.mass, n)
}

/// The `n` smallest generalized eigenpairs of `S φ = λ M φ`, sign-normalized
/// so that each column's largest-magnitude entry is positive.
pub fn eigenbasis(stiffness: &CsrMatrix, mass: &[f64], n: usize) -> Result<SpectralBasis> {
    let m = stiffness.dim();
    if mass.len() != m {
        return Err(Error::dims(m, mass.len()));
    }
    if n == 0 || n > m {
        return Err(Error::InvalidArgument(format!(
            "basis size {n} must be in 1..={m}"
        )));
    }
    if mass.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument("masses must be positive".into()));
    }
    let block = subspace_block_size(n, m);
    let (mut phi, mut values) = if m <= DENSE_LIMIT || 2 * block >= m {
        dense_eigen(stiffness, mass, n)?
    } else {
        subspace_eigen(stiffness, mass, n, block)?
    };
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    normalize_signs(&mut phi);
    values.truncate(n);
    SpectralBasis::new(phi, values, mass.to_vec())
}

fn subspace_block_size(n: usize, m: usize) -> usize {
    (2 * n).max(n + 8).min(m)
}

fn normalize_signs(phi: &mut DMatrix<f64>) {
    for mut col in phi.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn sorted_eigen(h: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    });
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    (vecs, vals)
}

fn dense_eigen(stiffness: &CsrMatrix, mass: &[f64], n: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let m = stiffness.dim();
    let inv_sqrt: Vec<f64> = mass.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut h = stiffness.to_dense();
    for i in 0..m {
        for j in 0..m {
            h[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    // exact symmetry for the solver
    let h = (&h + h.transpose()) * 0.5;
    let (vecs, vals) = sorted_eigen(h);
    let phi = DMatrix::from_fn(m, n, |i, j| vecs[(i, j)] * inv_sqrt[i]);
    Ok((phi, vals[..n].to_vec()))
}

fn m_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    mass.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// M-orthonormalizes columns in place (two passes of modified Gram–Schmidt).
fn m_orthonormalize(cols: &mut [Vec<f64>], mass: &[f64], rng: &mut ChaCha8Rng) {
    for k in 0..cols.len() {
        for _pass in 0..2 {
            for j in 0..k {
                let (done, rest) = cols.split_at_mut(k);
                let c = m_dot(mass, &rest[0], &done[j]);
                for (x, y) in rest[0].iter_mut().zip(&done[j]) {
                    *x -= c * y;
                }
            }
        }
        let mut nrm = m_dot(mass, &cols[k], &cols[k]).sqrt();
        if !(nrm > 1e-300) {
            // collapsed direction: restart it from noise
            for x in cols[k].iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
            for j in 0..k {
                let (done, rest) = cols.split_at_mut(k);
                let c = m_dot(mass, &rest[0], &done[j]);
                for (x, y) in rest[0].iter_mut().zip(&done[j]) {
                    *x -= c * y;
                }
            }
            nrm = m_dot(mass, &cols[k], &cols[k]).sqrt();
        }
        for x in cols[k].iter_mut() {
            *x /= nrm;
        }
    }
}

/// Shift-invert block subspace iteration with Rayleigh–Ritz projection.
fn subspace_eigen(
    stiffness: &CsrMatrix,
    mass: &[f64],
    n: usize,
    block: usize,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    const MAX_ITERS: usize = 1000;
    const REL_TOL: f64 = 1e-10;

    let m = stiffness.dim();
    let trace_s: f64 = (0..m).map(|i| stiffness.get(i, i)).sum();
    let trace_m: f64 = mass.iter().sum();
    let sigma = 1e-6 * trace_s / trace_m;
    let mut shifted = Vec::with_capacity(stiffness.nnz());
    for i in 0..m {
        for (j, v) in stiffness.row(i) {
            shifted.push((i, j, v));
        }
        shifted.push((i, i, sigma * mass[i]));
    }
    let chol = EnvelopeCholesky::factor(&CsrMatrix::from_triplets(m, &shifted))?;
    let s_norm = stiffness.norm_inf();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    m_orthonormalize(&mut x, mass, &mut rng);

    for _iter in 0..MAX_ITERS {
        let mut y: Vec<Vec<f64>> = x
            .par_iter()
            .map(|col| {
                let mx: Vec<f64> = col.iter().zip(mass).map(|(a, b)| a * b).collect();
                chol.solve(&mx)
            })
            .collect();
        m_orthonormalize(&mut y, mass, &mut rng);

        let sy: Vec<Vec<f64>> = y.par_iter().map(|c| stiffness.mul_vec(c)).collect();
        let h = DMatrix::from_fn(block, block, |i, j| {
            let a: f64 = y[i].iter().zip(&sy[j]).map(|(p, q)| p * q).sum();
            let b: f64 = y[j].iter().zip(&sy[i]).map(|(p, q)| p * q).sum();
            0.5 * (a + b)
        });
        let (q, theta) = sorted_eigen(h);

        x = (0..block)
            .into_par_iter()
            .map(|k| {
                let mut col = vec![0.0; m];
                for (j, yj) in y.iter().enumerate() {
                    let c = q[(j, k)];
                    for (out, v) in col.iter_mut().zip(yj) {
                        *out += c * v;
                    }
                }
                col
            })
            .collect();

        let converged = (0..n).into_par_iter().all(|k| {
            let sx = stiffness.mul_vec(&x[k]);
            let mut res = 0.0;
            let mut snorm = 0.0;
            let mut xnorm = 0.0;
            for i in 0..m {
                let r = sx[i] - theta[k] * mass[i] * x[k][i];
                res += r * r;
                snorm += sx[i] * sx[i];
                xnorm += x[k][i] * x[k][i];
            }
            res.sqrt() <= REL_TOL * snorm.sqrt() + 1e-13 * s_norm * xnorm.sqrt()
        });
        if converged {
            let phi = DMatrix::from_fn(m, n, |i, j| x[j][i]);
            return Ok((phi, theta[..n].to_vec()));
        }
    }
    Err(Error::Eigen(format!(
        "subspace iteration did not converge in {MAX_ITERS} iterations"
    )))
}
