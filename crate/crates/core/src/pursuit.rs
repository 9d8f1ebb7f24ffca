//! Robust sparse coding of a functional map for a fixed region permutation:
//!
//! ```text
//! min_{C,O} ½‖B′ − A C − O‖²_F + λ‖W ⊙ C‖₁ + μ‖O‖₂,₁
//! ```
//!
//! solved by forward–backward splitting with closed-form proximal steps,
//! optionally with FISTA momentum.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Entrywise nonnegative penalty weights on `C`.
pub type WeightMatrix = DMatrix<f64>;

/// `w_ij = (1 + |i − j|)^p`: cheap near the diagonal, growing away from it.
pub fn default_weights(n: usize, p: f64) -> WeightMatrix {
    DMatrix::from_fn(n, n, |i, j| (1.0 + i.abs_diff(j) as f64).powf(p))
}

fn check_shape(what: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::dims(
            format!("{what} {rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Weighted soft threshold: `sign(c)·max(|c| − t·w, 0)` entrywise.
pub fn prox_weighted_l1(c: &DMatrix<f64>, w: &WeightMatrix, t: f64) -> Result<DMatrix<f64>> {
    check_shape("weights", w, c.nrows(), c.ncols())?;
    Ok(c.zip_map(w, |x, wi| soft_threshold(x, t * wi)))
}

pub(crate) fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Row shrinkage: each row `o` becomes `max(‖o‖₂ − t, 0)·o/‖o‖₂`.
pub fn prox_l21_rows(o: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let mut out = o.clone();
    for mut row in out.row_iter_mut() {
        let nrm = row.norm();
        if nrm <= t {
            row.fill(0.0);
        } else {
            row *= (nrm - t) / nrm;
        }
    }
    out
}

/// `Σ_i ‖o_i‖₂` over rows.
pub fn l21_norm(o: &DMatrix<f64>) -> f64 {
    o.row_iter().map(|r| r.norm()).sum()
}

/// Lipschitz constant of the joint gradient in `(C, O)`: the largest
/// eigenvalue of `[[AᵀA, Aᵀ], [A, I]]`, by power iteration. Always `>= 1`.
pub fn step_size(a: &DMatrix<f64>) -> f64 {
    let (q, n) = a.shape();
    // stacked vector (x ∈ ℝⁿˣ¹, y ∈ ℝ^q) acted on by the block operator
    let apply = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
        let s = a * x + y;
        (a.tr_mul(&s), s)
    };
    let mut x = DMatrix::<f64>::from_element(n, 1, 1.0);
    let mut y = DMatrix::<f64>::from_element(q, 1, 1.0);
    let mut estimate = 0.0;
    let mut residual = 0.0;
    for _ in 0..10_000 {
        let nrm: f64 = (x.norm_squared() + y.norm_squared()).sqrt();
        x /= nrm;
        y /= nrm;
        let (kx, ky) = apply(&x, &y);
        let rayleigh = x.dot(&kx) + y.dot(&ky);
        residual = ((&kx - &x * rayleigh).norm_squared() + (&ky - &y * rayleigh).norm_squared())
            .sqrt();
        let converged = (rayleigh - estimate).abs() <= 1e-12 * rayleigh.abs();
        estimate = rayleigh;
        x = kx;
        y = ky;
        if converged {
            break;
        }
    }
    // some eigenvalue lies within the residual of the Rayleigh quotient
    (estimate + residual).max(1.0)
}

/// `½‖B′ − AC − O‖²_F + λ‖W ⊙ C‖₁ + μ‖O‖₂,₁`.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    a: &DMatrix<f64>,
    bp: &DMatrix<f64>,
    c: &DMatrix<f64>,
    o: &DMatrix<f64>,
    w: &WeightMatrix,
    lambda: f64,
    mu: f64,
) -> Result<f64> {
    let (q, n) = a.shape();
    check_shape("B'", bp, q, n)?;
    check_shape("C", c, n, n)?;
    check_shape("O", o, q, n)?;
    check_shape("W", w, n, n)?;
    Ok(objective_unchecked(a, bp, c, o, w, lambda, mu))
}

fn objective_unchecked(
    a: &DMatrix<f64>,
    bp: &DMatrix<f64>,
    c: &DMatrix<f64>,
    o: &DMatrix<f64>,
    w: &WeightMatrix,
    lambda: f64,
    mu: f64,
) -> f64 {
    let resid = bp - a * c - o;
    let l1: f64 = c.zip_map(w, |x, wi| (x * wi).abs()).sum();
    0.5 * resid.norm_squared() + lambda * l1 + mu * l21_norm(o)
}

/// Default ratio of `λ` to `max|AᵀB′|`.
pub const DEFAULT_LAMBDA_SCALE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Sparsity weight; `None` means `lambda_scale·max|AᵀB′|`.
    pub lambda: Option<f64>,
    /// Outlier weight; `None` means `mu_scale·max_i ‖row_i(B′)‖₂`.
    pub mu: Option<f64>,
    pub lambda_scale: f64,
    pub mu_scale: f64,
    pub max_iter: usize,
    /// Stop when the relative objective change falls below this.
    pub tol: f64,
    pub accelerate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lambda: None,
            mu: None,
            lambda_scale: DEFAULT_LAMBDA_SCALE,
            mu_scale: 0.1,
            max_iter: 2000,
            tol: 1e-8,
            accelerate: true,
        }
    }
}

impl SolverOptions {
    /// Concrete `(λ, μ)` for the given data.
    pub fn resolve(&self, a: &DMatrix<f64>, bp: &DMatrix<f64>) -> (f64, f64) {
        let lambda = self
            .lambda
            .unwrap_or_else(|| self.lambda_scale * a.tr_mul(bp).amax());
        let mu = self.mu.unwrap_or_else(|| {
            self.mu_scale * bp.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
        });
        (lambda, mu)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "solver needs tol > 0 and max_iter >= 1".into(),
            ));
        }
        for v in [self.lambda, self.mu]
            .into_iter()
            .flatten()
            .chain([self.lambda_scale, self.mu_scale])
        {
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument("λ and μ must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Result of one sparse-coding solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub c: DMatrix<f64>,
    pub o: DMatrix<f64>,
    /// Objective at the initial point followed by one value per iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
    pub mu: f64,
}

impl SparseCode {
    pub fn objective(&self) -> f64 {
        *self.trace.last().unwrap()
    }
}

/// Solves from the standard start `C⁰ = 0`, `O⁰ = B′`.
pub fn solve_robust_sparse_coding(
    a: &DMatrix<f64>,
    bp: &DMatrix<f64>,
    w: &WeightMatrix,
    opts: &SolverOptions,
) -> Result<SparseCode> {
    let n = a.ncols();
    solve_robust_sparse_coding_from(a, bp, w, opts, DMatrix::zeros(n, n), bp.clone())
}

/// Solves from a caller-supplied starting point (warm start).
pub fn solve_robust_sparse_coding_from(
    a: &DMatrix<f64>,
    bp: &DMatrix<f64>,
    w: &WeightMatrix,
    opts: &SolverOptions,
    c0: DMatrix<f64>,
    o0: DMatrix<f64>,
) -> Result<SparseCode> {
    opts.validate()?;
    let (q, n) = a.shape();
    check_shape("B'", bp, q, n)?;
    check_shape("W", w, n, n)?;
    check_shape("C0", &c0, n, n)?;
    check_shape("O0", &o0, q, n)?;
    let (lambda, mu) = opts.resolve(a, bp);
    let alpha = step_size(a);
    let ata = a.tr_mul(a);
    let atb = a.tr_mul(bp);

    // one forward-backward step from (c, o)
    let step = |c: &DMatrix<f64>, o: &DMatrix<f64>| {
        let grad_c = &ata * c + a.tr_mul(o) - &atb;
        let grad_o = a * c + o - bp;
        let c_next = (c - grad_c / alpha).zip_map(w, |x, wi| soft_threshold(x, lambda * wi / alpha));
        let o_next = prox_l21_rows(&(o - grad_o / alpha), mu / alpha);
        (c_next, o_next)
    };

    let mut c = c0;
    let mut o = o0;
    let mut f = objective_unchecked(a, bp, &c, &o, w, lambda, mu);
    if !f.is_finite() {
        return Err(Error::Diverged(f));
    }
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    // momentum state
    let mut yc = c.clone();
    let mut yo = o.clone();
    let mut t = 1.0f64;

    for _ in 0..opts.max_iter {
        iterations += 1;
        let (c_next, o_next) = if opts.accelerate { step(&yc, &yo) } else { step(&c, &o) };
        let f_next = objective_unchecked(a, bp, &c_next, &o_next, w, lambda, mu);
        if !f_next.is_finite() {
            return Err(Error::Diverged(f_next));
        }
        if opts.accelerate {
            if f_next > f {
                // function-value restart
                t = 1.0;
                yc = c_next.clone();
                yo = o_next.clone();
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / t_next;
                yc = &c_next + (&c_next - &c) * beta;
                yo = &o_next + (&o_next - &o) * beta;
                t = t_next;
            }
        }
        let change = (f - f_next).abs();
        c = c_next;
        o = o_next;
        trace.push(f_next);
        let done = change <= opts.tol * f.abs() || f == 0.0;
        f = f_next;
        if done {
            converged = true;
            break;
        }
    }

    Ok(SparseCode {
        c,
        o,
        trace,
        iterations,
        converged,
        lambda,
        mu,
    })
}
