//! Alternating minimization over the region permutation `Π` and the pair
//! `(C, O)`: robust permuted sparse coding.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::assignment::{build_profit, prune, solve_assignment, Assignment, FeasibilityMask};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::pursuit::{
    default_weights, objective, solve_robust_sparse_coding, solve_robust_sparse_coding_from,
    SolverOptions, WeightMatrix,
};
use crate::regions::{CoefficientMatrix, RegionSet};

/// `B′ = ΠB` for a dense or binary `q×r` matrix `Π`.
pub fn apply_permutation(pi: &DMatrix<f64>, b: &CoefficientMatrix) -> Result<CoefficientMatrix> {
    if pi.ncols() != b.nrows() {
        return Err(Error::dims(
            format!("Π with {} columns", b.nrows()),
            pi.ncols(),
        ));
    }
    Ok(pi * b)
}

/// The uninformative start `Π⁰ = (1/q)·11ᵀ`.
pub fn initial_permutation(q: usize, r: usize) -> DMatrix<f64> {
    DMatrix::from_element(q, r, 1.0 / q.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOptions {
    pub solver: SolverOptions,
    /// Exponent of the default weights `(1 + |i − j|)^p`.
    pub weight_p: f64,
    /// Region pairs whose area fractions differ by more than this factor are
    /// never matched.
    pub max_ratio: f64,
    pub max_outer: usize,
    /// Relative change of the outer objective treated as convergence.
    pub outer_tol: f64,
    /// Also alternate from `C = I`, `O = 0` and keep the run with the lower
    /// final objective.
    pub identity_start: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            solver: SolverOptions::default(),
            weight_p: 1.0,
            max_ratio: 3.0,
            max_outer: 10,
            outer_tol: 1e-6,
            identity_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Functional map with `A C ≈ ΠB` in the caller's orientation.
    pub c: DMatrix<f64>,
    /// Assignment of the shorter side (rows) into the longer side.
    pub assignment: Assignment,
    /// Outlier rows, one per row of the shorter side.
    pub o: DMatrix<f64>,
    /// Objective after each outer iteration (binary `Π`).
    pub trace: Vec<f64>,
    /// Objective of the first solve under the dense `Π⁰`.
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True when X had more regions than Y and the problem was transposed.
    pub swapped: bool,
    pub lambda: f64,
    pub mu: f64,
}

impl MatchResult {
    /// Matched `(region on X, region on Y)` pairs, sorted by X index.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut p: Vec<(usize, usize)> = self
            .assignment
            .cols()
            .iter()
            .enumerate()
            .map(|(i, &j)| if self.swapped { (j, i) } else { (i, j) })
            .collect();
        p.sort_unstable();
        p
    }

    /// `Π` as a `q×r` matrix in the caller's orientation.
    pub fn permutation_matrix(&self) -> DMatrix<f64> {
        let p = self.assignment.matrix();
        if self.swapped {
            p.transpose()
        } else {
            p
        }
    }

    pub fn objective(&self) -> f64 {
        self.trace.last().copied().unwrap_or(self.initial_objective)
    }

    pub fn outlier_row_norms(&self) -> Vec<f64> {
        self.o.row_iter().map(|r| r.norm()).collect()
    }

    pub fn report(&self) -> String {
        let (q, r) = if self.swapped {
            (self.assignment.num_cols(), self.assignment.num_rows())
        } else {
            (self.assignment.num_rows(), self.assignment.num_cols())
        };
        let join = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let _ = writeln!(s, "q = {q}");
        let _ = writeln!(s, "r = {r}");
        let _ = writeln!(s, "swapped = {}", self.swapped);
        let _ = writeln!(s, "outer_iterations = {}", self.iterations);
        let _ = writeln!(s, "converged = {}", self.converged);
        let _ = writeln!(s, "lambda = {}", fmt_f64(self.lambda));
        let _ = writeln!(s, "mu = {}", fmt_f64(self.mu));
        let _ = writeln!(s, "initial_objective = {}", fmt_f64(self.initial_objective));
        let _ = writeln!(s, "objective_trace = {}", join(&self.trace));
        let pairs: Vec<String> = self.pairs().iter().map(|(i, j)| format!("{i}:{j}")).collect();
        let _ = writeln!(s, "pairs = {}", pairs.join(" "));
        let _ = writeln!(s, "outlier_row_norms = {}", join(&self.outlier_row_norms()));
        s
    }

    pub fn save_report(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.report()).map_err(|e| Error::io(path, e))
    }
}

/// Matches region sets with area-ratio pruning and the default weights.
pub fn match_regions(
    a: &CoefficientMatrix,
    b: &CoefficientMatrix,
    regions_x: &RegionSet,
    regions_y: &RegionSet,
    opts: &MatchOptions,
) -> Result<MatchResult> {
    if a.nrows() != regions_x.len() || b.nrows() != regions_y.len() {
        return Err(Error::dims(
            format!("{}+{} coefficient rows", regions_x.len(), regions_y.len()),
            format!("{}+{}", a.nrows(), b.nrows()),
        ));
    }
    let mask = prune(regions_x, regions_y, opts.max_ratio)?;
    let w = default_weights(a.ncols(), opts.weight_p);
    match_coefficients(a, b, Some(&mask), &w, opts)
}

/// Alternates pursuit and assignment from `Π⁰ = (1/q)11ᵀ`, `C⁰ = 0`.
///
/// When `A` has more rows than `B` the roles are exchanged and the result is
/// transposed back (`C` becomes `Cᵀ`, `O` then refers to the rows of `B`).
pub fn match_coefficients(
    a: &CoefficientMatrix,
    b: &CoefficientMatrix,
    mask: Option<&FeasibilityMask>,
    w: &WeightMatrix,
    opts: &MatchOptions,
) -> Result<MatchResult> {
    let n = a.ncols();
    if b.ncols() != n {
        return Err(Error::dims(format!("B with {n} columns"), b.ncols()));
    }
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::NoRegions);
    }
    if let Some(m) = mask {
        if m.shape() != (a.nrows(), b.nrows()) {
            return Err(Error::dims(
                format!("mask {}x{}", a.nrows(), b.nrows()),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
    }
    if opts.max_outer == 0 {
        return Err(Error::InvalidArgument("max_outer must be >= 1".into()));
    }
    if a.nrows() > b.nrows() {
        let mask_t = mask.map(|m| m.transpose());
        let mut res = match_oriented(b, a, mask_t.as_ref(), w, opts)?;
        res.c = res.c.transpose();
        res.swapped = true;
        return Ok(res);
    }
    match_oriented(a, b, mask, w, opts)
}

struct Run {
    c: DMatrix<f64>,
    o: DMatrix<f64>,
    assignment: Assignment,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn match_oriented(
    a: &CoefficientMatrix,
    b: &CoefficientMatrix,
    mask: Option<&FeasibilityMask>,
    w: &WeightMatrix,
    opts: &MatchOptions,
) -> Result<MatchResult> {
    let (q, r) = (a.nrows(), b.nrows());
    let n = a.ncols();
    let bp = apply_permutation(&initial_permutation(q, r), b)?;
    let (lambda, mu) = opts.solver.resolve(a, &bp);
    let solver = SolverOptions {
        lambda: Some(lambda),
        mu: Some(mu),
        ..opts.solver.clone()
    };
    let first = solve_robust_sparse_coding(a, &bp, w, &solver)?;
    let initial_objective = first.objective();

    let mut run = alternate(a, b, mask, w, &solver, opts, first.c, first.o)?;
    if opts.identity_start {
        let alt = alternate(a, b, mask, w, &solver, opts, DMatrix::identity(n, n), DMatrix::zeros(q, n))?;
        if alt.trace.last() < run.trace.last() {
            run = alt;
        }
    }
    Ok(MatchResult {
        c: run.c,
        assignment: run.assignment,
        o: run.o,
        trace: run.trace,
        initial_objective,
        iterations: run.iterations,
        converged: run.converged,
        swapped: false,
        lambda,
        mu,
    })
}

/// Assignment/pursuit alternation from the given `(C, O)`.
#[allow(clippy::too_many_arguments)]
fn alternate(
    a: &CoefficientMatrix,
    b: &CoefficientMatrix,
    mask: Option<&FeasibilityMask>,
    w: &WeightMatrix,
    solver: &SolverOptions,
    opts: &MatchOptions,
    mut c: DMatrix<f64>,
    mut o: DMatrix<f64>,
) -> Result<Run> {
    let (lambda, mu) = (solver.lambda.unwrap(), solver.mu.unwrap());
    let mut trace = Vec::new();
    let mut prev: Option<Assignment> = None;
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>, Assignment)> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_outer {
        iterations += 1;
        let mut e = build_profit(a, &c, b)?;
        if let Some(m) = mask {
            e = e.with_mask(m.clone())?;
        }
        let pi = solve_assignment(&e)?;
        let bp = apply_permutation(&pi.matrix(), b)?;
        let sol = solve_robust_sparse_coding_from(a, &bp, w, solver, c, o)?;
        c = sol.c;
        o = sol.o;
        let f = objective(a, &bp, &c, &o, w, lambda, mu)?;
        let stalled = trace
            .last()
            .is_some_and(|&g: &f64| (g - f).abs() <= opts.outer_tol * g.abs());
        trace.push(f);
        if best.as_ref().map_or(true, |bst| f < bst.0) {
            best = Some((f, c.clone(), o.clone(), pi.clone()));
        }
        let fixed = prev.as_ref() == Some(&pi);
        prev = Some(pi);
        if fixed || stalled {
            converged = true;
            break;
        }
    }
    let (c, o, assignment) = if converged {
        (c, o, prev.unwrap())
    } else {
        let (_, c, o, pi) = best.unwrap();
        (c, o, pi)
    };
    Ok(Run {
        c,
        o,
        assignment,
        trace,
        iterations,
        converged,
    })
}
