//! Point-to-point maps from functional maps by ICP in the spectral domain.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kdtree::nearest_rows;
use crate::spectral::SpectralBasis;

/// Vertex correspondence X → Y: `targets[i]` is the Y vertex matched to X
/// vertex `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    targets: Vec<usize>,
    num_targets: usize,
    /// Optional per-vertex error (e.g. normalized geodesic error).
    pub errors: Option<Vec<f64>>,
}

impl PointMap {
    pub fn new(targets: Vec<usize>, num_targets: usize) -> Result<Self> {
        if let Some(&t) = targets.iter().find(|&&t| t >= num_targets) {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: num_targets,
            });
        }
        Ok(PointMap {
            targets,
            num_targets,
            errors: None,
        })
    }

    pub fn identity(m: usize) -> Self {
        PointMap {
            targets: (0..m).collect(),
            num_targets: m,
            errors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn num_targets(&self) -> usize {
        self.num_targets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn get(&self, i: usize) -> usize {
        self.targets[i]
    }

    /// Fraction of vertices mapped to the same index.
    pub fn identity_fraction(&self) -> f64 {
        if self.targets.is_empty() {
            return 1.0;
        }
        let hits = self.targets.iter().enumerate().filter(|(i, &t)| *i == t).count();
        hits as f64 / self.targets.len() as f64
    }

    /// One target index per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::with_capacity(self.targets.len() * 6);
        for t in &self.targets {
            let _ = writeln!(s, "{t}");
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Reads a map written by [`PointMap::save`], checking indices against
    /// the target vertex count.
    pub fn load(path: impl AsRef<Path>, num_targets: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut targets = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let t = line.parse::<usize>().map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: format!("bad vertex index {line:?}: {e}"),
            })?;
            targets.push(t);
        }
        PointMap::new(targets, num_targets)
    }
}

/// Orthonormal `C` minimizing `‖X − Y Cᵀ‖_F`: `C = U Vᵀ` for the SVD
/// `XᵀY = U Σ Vᵀ`.
pub fn orthogonal_procrustes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != y.shape() {
        return Err(Error::dims(
            format!("{}x{}", x.nrows(), x.ncols()),
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("procrustes input is not finite".into()));
    }
    let svd = x.tr_mul(y).try_svd(true, true, f64::EPSILON, 10_000).ok_or(Error::Svd)?;
    let (u, v_t) = (svd.u.ok_or(Error::Svd)?, svd.v_t.ok_or(Error::Svd)?);
    Ok(u * v_t)
}

/// `Σ_i ‖Φ_{j_i} − (ΨCᵀ)_i‖²` for the current matches `j`.
fn icp_objective(phi: &DMatrix<f64>, embedded: &DMatrix<f64>, matches: &[usize]) -> f64 {
    matches
        .iter()
        .enumerate()
        .map(|(i, &j)| (phi.row(j) - embedded.row(i)).norm_squared())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Orthonormal functional map.
    pub c: DMatrix<f64>,
    pub map: PointMap,
    /// Number of orthonormal re-fits performed.
    pub iterations: usize,
    /// ICP objective at the start of each round, then at the final matches.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Spectral ICP started from `c0`: match each row of `ΨCᵀ` to its nearest
/// row of `Φ`, re-fit an orthonormal `C`, and repeat until the matches stop
/// changing or `max_iters` re-fits. The returned map sends each X vertex to
/// the Y vertex whose row of `ΨCᵀ` is nearest to its row of `Φ`.
pub fn refine_icp(
    basis_x: &SpectralBasis,
    basis_y: &SpectralBasis,
    c0: &DMatrix<f64>,
    max_iters: usize,
) -> Result<IcpResult> {
    let n = basis_x.size();
    if basis_y.size() != n {
        return Err(Error::dims(format!("basis of size {n}"), basis_y.size()));
    }
    if c0.shape() != (n, n) {
        return Err(Error::dims(format!("C {n}x{n}"), format!("{}x{}", c0.nrows(), c0.ncols())));
    }
    let (phi, psi) = (basis_x.phi(), basis_y.phi());
    let mut c = c0.clone();
    let mut embedded = psi * c.transpose();
    let mut matches = nearest_rows(phi, &embedded)?;
    let mut trace = vec![icp_objective(phi, &embedded, &matches)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let x = DMatrix::from_fn(matches.len(), n, |i, k| phi[(matches[i], k)]);
        c = orthogonal_procrustes(&x, psi)?;
        embedded = psi * c.transpose();
        let next = nearest_rows(phi, &embedded)?;
        trace.push(icp_objective(phi, &embedded, &next));
        let unchanged = next == matches;
        matches = next;
        if unchanged {
            converged = true;
            break;
        }
    }
    let forward = nearest_rows(&embedded, phi)?;
    Ok(IcpResult {
        c,
        map: PointMap::new(forward, basis_y.num_vertices())?,
        iterations,
        trace,
        converged,
    })
}
