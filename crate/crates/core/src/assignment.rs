//! Partial linear assignment of `q` regions on X to `r >= q` regions on Y.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::regions::{CoefficientMatrix, RegionSet};

/// `mask[(i, j)]` is true when row `i` may be matched to column `j`.
pub type FeasibilityMask = DMatrix<bool>;

/// Injective map from `q` rows to `r >= q` columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    cols: Vec<usize>,
    num_cols: usize,
}

impl Assignment {
    pub fn new(cols: Vec<usize>, num_cols: usize) -> Result<Self> {
        if cols.len() > num_cols {
            return Err(Error::InvalidArgument(format!(
                "assignment needs q <= r, got {} rows and {num_cols} columns",
                cols.len()
            )));
        }
        let mut used = vec![false; num_cols];
        for &j in &cols {
            if j >= num_cols {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    len: num_cols,
                });
            }
            if std::mem::replace(&mut used[j], true) {
                return Err(Error::InvalidArgument(format!("column {j} assigned twice")));
            }
        }
        Ok(Assignment { cols, num_cols })
    }

    pub fn identity(n: usize) -> Self {
        Assignment {
            cols: (0..n).collect(),
            num_cols: n,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.cols.len()
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    /// Column assigned to each row.
    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn is_identity(&self) -> bool {
        self.cols.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Binary `q×r` matrix view.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.cols.len(), self.num_cols);
        for (i, &j) in self.cols.iter().enumerate() {
            p[(i, j)] = 1.0;
        }
        p
    }

    /// `Σ_i E[i, π(i)]`, summed in row order.
    pub fn profit(&self, e: &DMatrix<f64>) -> f64 {
        self.cols.iter().enumerate().map(|(i, &j)| e[(i, j)]).sum()
    }
}

/// Profits `E` with an optional mask of allowed pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitMatrix {
    values: DMatrix<f64>,
    mask: Option<FeasibilityMask>,
}

impl ProfitMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("profit matrix has non-finite entries".into()));
        }
        Ok(ProfitMatrix { values, mask: None })
    }

    pub fn with_mask(mut self, mask: FeasibilityMask) -> Result<Self> {
        if mask.shape() != self.values.shape() {
            return Err(Error::dims(
                format!("mask {:?}", self.values.shape()),
                format!("{:?}", mask.shape()),
            ));
        }
        if let Some(i) = (0..mask.nrows()).find(|&i| !mask.row(i).iter().any(|&b| b)) {
            return Err(Error::NoFeasiblePartner(i));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> Option<&FeasibilityMask> {
        self.mask.as_ref()
    }

    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[(i, j)])
    }
}

/// `E = (A C) Bᵀ`.
pub fn build_profit(
    a: &CoefficientMatrix,
    c: &DMatrix<f64>,
    b: &CoefficientMatrix,
) -> Result<ProfitMatrix> {
    let n = a.ncols();
    if c.shape() != (n, n) {
        return Err(Error::dims(format!("C {n}x{n}"), format!("{}x{}", c.nrows(), c.ncols())));
    }
    if b.ncols() != n {
        return Err(Error::dims(format!("B with {n} columns"), b.ncols()));
    }
    ProfitMatrix::new((a * c) * b.transpose())
}

/// Pairs whose area fractions differ by at most `max_ratio` either way.
pub fn prune(x: &RegionSet, y: &RegionSet, max_ratio: f64) -> Result<FeasibilityMask> {
    if !(max_ratio >= 1.0) {
        return Err(Error::InvalidArgument(format!("max_ratio must be >= 1, got {max_ratio}")));
    }
    let (fx, fy) = (x.area_fractions(), y.area_fractions());
    let mask = DMatrix::from_fn(fx.len(), fy.len(), |i, j| {
        let ratio = fx[i] / fy[j];
        ratio <= max_ratio && ratio * max_ratio >= 1.0
    });
    if let Some(i) = (0..fx.len()).find(|&i| !mask.row(i).iter().any(|&b| b)) {
        return Err(Error::NoFeasiblePartner(i));
    }
    Ok(mask)
}

/// Size of a maximum matching in the bipartite graph of allowed pairs.
fn max_matching(mask: &FeasibilityMask) -> usize {
    let (q, r) = mask.shape();
    let mut col_owner = vec![usize::MAX; r];
    fn augment(
        i: usize,
        mask: &FeasibilityMask,
        seen: &mut [bool],
        col_owner: &mut [usize],
    ) -> bool {
        for j in 0..mask.ncols() {
            if mask[(i, j)] && !seen[j] {
                seen[j] = true;
                if col_owner[j] == usize::MAX || augment(col_owner[j], mask, seen, col_owner) {
                    col_owner[j] = i;
                    return true;
                }
            }
        }
        false
    }
    (0..q)
        .filter(|&i| augment(i, mask, &mut vec![false; r], &mut col_owner))
        .count()
}

/// Maximum-profit injective assignment honoring the mask (Hungarian method
/// with potentials, native rectangular form).
///
/// Ties are broken by subtracting `ε·(i·r + j)` from each profit with
/// `ε = 1e-12·max|E|`.
pub fn solve_assignment(profit: &ProfitMatrix) -> Result<Assignment> {
    let e = profit.values();
    let (q, r) = e.shape();
    if q > r {
        return Err(Error::InvalidArgument(format!(
            "assignment needs q <= r, got {q}x{r}; transpose the problem"
        )));
    }
    if q == 0 {
        return Assignment::new(Vec::new(), r);
    }
    if let Some(mask) = profit.mask() {
        let size = max_matching(mask);
        if size < q {
            return Err(Error::Infeasible(format!(
                "only {size} of {q} regions can be matched under the mask; relax max_ratio"
            )));
        }
    }
    let scale = e.amax();
    let eps = 1e-12 * if scale > 0.0 { scale } else { 1.0 };
    let cost = |i: usize, j: usize| -(e[(i, j)] - eps * (i * r + j) as f64);

    // 1-based rows/cols; column 0 is the virtual start
    let mut u = vec![0.0f64; q + 1];
    let mut v = vec![0.0f64; r + 1];
    let mut owner = vec![0usize; r + 1];
    let mut way = vec![0usize; r + 1];
    for i in 1..=q {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; r + 1];
        let mut used = vec![false; r + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = usize::MAX;
            for j in 1..=r {
                if used[j] {
                    continue;
                }
                if profit.is_allowed(i0 - 1, j - 1) {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == usize::MAX {
                // cannot happen after the matching check
                return Err(Error::Infeasible("no augmenting path".into()));
            }
            for j in 0..=r {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut cols = vec![0; q];
    for j in 1..=r {
        if owner[j] != 0 {
            cols[owner[j] - 1] = j - 1;
        }
    }
    Assignment::new(cols, r)
}

/// Constraint matrix of the relaxed assignment polytope for a `q×r` matrix
/// `Π` stored column-major in `vec(Π)`: first the `q` row sums, then the `r`
/// column sums.
pub fn assignment_constraint_matrix(q: usize, r: usize) -> DMatrix<i64> {
    DMatrix::from_fn(q + r, q * r, |row, k| {
        let (i, j) = (k % q, k / q);
        let hit = if row < q { i == row } else { j == row - q };
        hit as i64
    })
}

/// Optimum of the linear relaxation
/// `max ⟨E, Π⟩ s.t. Π ≥ 0, Π1 = 1, Πᵀ1 ≤ 1`, by a dense two-phase simplex.
/// Intended as an oracle for small problems; the mask is ignored.
pub fn lp_relaxation_solve(profit: &ProfitMatrix) -> Result<DMatrix<f64>> {
    let e = profit.values();
    let (q, r) = e.shape();
    if q > r {
        return Err(Error::LinearProgram(format!("infeasible: {q} rows but {r} columns")));
    }
    let nv = q * r;
    let mut rows = Vec::with_capacity(q + r);
    for i in 0..q {
        let mut a = vec![0.0; nv];
        for j in 0..r {
            a[i + j * q] = 1.0;
        }
        rows.push((a, Relation::Eq, 1.0));
    }
    for j in 0..r {
        let mut a = vec![0.0; nv];
        for i in 0..q {
            a[i + j * q] = 1.0;
        }
        rows.push((a, Relation::Le, 1.0));
    }
    let c: Vec<f64> = (0..nv).map(|k| e[(k % q, k / q)]).collect();
    let x = simplex_max(&c, &rows)?;
    Ok(DMatrix::from_fn(q, r, |i, j| x[i + j * q]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Relation {
    Eq,
    Le,
}

/// `max cᵀx` s.t. each `aᵀx (= | ≤) b` with `b ≥ 0`, `x ≥ 0`. Bland's rule.
fn simplex_max(c: &[f64], constraints: &[(Vec<f64>, Relation, f64)]) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-10;
    let n = c.len();
    let m = constraints.len();
    let n_slack = constraints.iter().filter(|k| k.1 == Relation::Le).count();
    let n_art = m - n_slack;
    let total = n + n_slack + n_art;
    // tableau rows: constraints, then the objective row (reduced costs)
    let width = total + 1;
    let mut t = vec![vec![0.0; width]; m];
    let mut basis = vec![0usize; m];
    let (mut s, mut a) = (n, n + n_slack);
    for (row, (coef, rel, b)) in constraints.iter().enumerate() {
        if *b < 0.0 {
            return Err(Error::LinearProgram("negative right-hand side".into()));
        }
        t[row][..n].copy_from_slice(coef);
        t[row][total] = *b;
        let col = match rel {
            Relation::Le => {
                s += 1;
                s - 1
            }
            Relation::Eq => {
                a += 1;
                a - 1
            }
        };
        t[row][col] = 1.0;
        basis[row] = col;
    }
    let is_art = |j: usize| j >= n + n_slack && j < total;

    fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], row: usize, col: usize) {
        let p = t[row][col];
        for v in t[row].iter_mut() {
            *v /= p;
        }
        let pr = t[row].clone();
        for (k, r) in t.iter_mut().enumerate() {
            if k != row && r[col] != 0.0 {
                let f = r[col];
                for (v, pv) in r.iter_mut().zip(&pr) {
                    *v -= f * pv;
                }
            }
        }
        let f = obj[col];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&pr) {
                *v -= f * pv;
            }
        }
        basis[row] = col;
    }

    // minimizes obj·x over the tableau; obj holds reduced costs
    let run = |t: &mut Vec<Vec<f64>>,
               obj: &mut Vec<f64>,
               basis: &mut Vec<usize>,
               allowed: &dyn Fn(usize) -> bool|
     -> Result<()> {
        for _ in 0..100_000 {
            let Some(col) = (0..total).find(|&j| allowed(j) && obj[j] < -TOL) else {
                return Ok(());
            };
            let mut best: Option<(f64, usize)> = None;
            for (row, r) in t.iter().enumerate() {
                if r[col] > TOL {
                    let ratio = r[total] / r[col];
                    let better = match best {
                        None => true,
                        Some((br, brow)) => {
                            ratio < br - TOL || (ratio <= br + TOL && basis[row] < basis[brow])
                        }
                    };
                    if better {
                        best = Some((ratio, row));
                    }
                }
            }
            let Some((_, row)) = best else {
                return Err(Error::LinearProgram("unbounded".into()));
            };
            pivot(t, obj, basis, row, col);
        }
        Err(Error::LinearProgram("iteration limit".into()))
    };

    // phase 1: minimize the sum of artificials
    let mut obj = vec![0.0; width];
    for j in 0..total {
        if is_art(j) {
            obj[j] = 1.0;
        }
    }
    for row in 0..m {
        if is_art(basis[row]) {
            for j in 0..width {
                obj[j] -= t[row][j];
            }
        }
    }
    run(&mut t, &mut obj, &mut basis, &|_| true)?;
    if -obj[total] > 1e-8 {
        return Err(Error::LinearProgram("infeasible".into()));
    }
    // drive zero-level artificials out of the basis
    let mut row = 0;
    while row < t.len() {
        if is_art(basis[row]) {
            match (0..n + n_slack).find(|&j| t[row][j].abs() > TOL) {
                Some(col) => {
                    let mut dummy = vec![0.0; width];
                    pivot(&mut t, &mut dummy, &mut basis, row, col);
                }
                None => {
                    // redundant constraint
                    t.remove(row);
                    basis.remove(row);
                    continue;
                }
            }
        }
        row += 1;
    }

    // phase 2: minimize -cᵀx
    let mut obj = vec![0.0; width];
    for j in 0..n {
        obj[j] = -c[j];
    }
    for (row, &bj) in basis.iter().enumerate() {
        let f = obj[bj];
        if f != 0.0 {
            for j in 0..width {
                obj[j] -= f * t[row][j];
            }
        }
    }
    run(&mut t, &mut obj, &mut basis, &|j| !is_art(j))?;
    let mut x = vec![0.0; n];
    for (row, &bj) in basis.iter().enumerate() {
        if bj < n {
            x[bj] = t[row][total];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn pm(rows: usize, cols: usize, v: &[f64]) -> ProfitMatrix {
        ProfitMatrix::new(DMatrix::from_row_slice(rows, cols, v)).unwrap()
    }

    #[test]
    fn identity_profit() {
        let a = solve_assignment(&ProfitMatrix::new(DMatrix::identity(3, 3)).unwrap()).unwrap();
        assert!(a.is_identity());
        assert_eq!(a.profit(&DMatrix::identity(3, 3)), 3.0);
    }

    #[test]
    fn two_by_two() {
        let e = pm(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let a = solve_assignment(&e).unwrap();
        assert_eq!(a.cols(), &[0, 1]);
        assert_eq!(a.profit(e.values()), 5.0);
    }

    #[test]
    fn rectangular_picks_best_columns() {
        let e = pm(2, 4, &[0.0, 5.0, 1.0, 0.0, 0.0, 6.0, 0.0, 2.0]);
        let a = solve_assignment(&e).unwrap();
        // 5 + 2 and 1 + 6 tie; the perturbation prefers the smaller column sum
        assert_eq!(a.profit(e.values()), 7.0);
        assert_eq!(a.cols(), &[2, 1]);
    }

    #[test]
    fn zero_profit_is_deterministic() {
        let e = ProfitMatrix::new(DMatrix::zeros(3, 5)).unwrap();
        let a = solve_assignment(&e).unwrap();
        assert_eq!(a, solve_assignment(&e).unwrap());
        // the perturbation favors the lowest columns overall
        let mut cols = a.cols().to_vec();
        cols.sort_unstable();
        assert_eq!(cols, vec![0, 1, 2]);
    }

    #[test]
    fn mask_is_honored() {
        let e = pm(2, 2, &[10.0, 0.0, 0.0, 10.0]);
        let mask = DMatrix::from_row_slice(2, 2, &[false, true, true, true]);
        let a = solve_assignment(&e.with_mask(mask).unwrap()).unwrap();
        assert_eq!(a.cols(), &[1, 0]);
    }

    #[test]
    fn infeasible_mask_is_detected() {
        let e = ProfitMatrix::new(DMatrix::zeros(2, 3)).unwrap();
        let mask = DMatrix::from_row_slice(2, 3, &[true, false, false, true, false, false]);
        assert!(matches!(
            solve_assignment(&e.clone().with_mask(mask).unwrap()),
            Err(Error::Infeasible(_))
        ));
        let empty_row = DMatrix::from_row_slice(2, 3, &[false; 6]);
        assert!(matches!(e.with_mask(empty_row), Err(Error::NoFeasiblePartner(0))));
    }

    #[test]
    fn rejects_tall_problems() {
        assert!(solve_assignment(&ProfitMatrix::new(DMatrix::zeros(3, 2)).unwrap()).is_err());
        assert!(ProfitMatrix::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn assignment_validation() {
        assert!(Assignment::new(vec![0, 0], 2).is_err());
        assert!(Assignment::new(vec![2], 2).is_err());
        assert!(Assignment::new(vec![0, 1, 2], 2).is_err());
        let a = Assignment::new(vec![1, 0], 3).unwrap();
        assert_eq!(a.matrix(), DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn profit_matches_triple_loop() {
        let a = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 1.0) * 0.3 - j as f64);
        let c = DMatrix::from_fn(2, 2, |i, j| (i + 2 * j) as f64 * 0.7 - 0.5);
        let b = DMatrix::from_fn(4, 2, |i, j| ((i * 3 + j) % 5) as f64 - 2.0);
        let e = build_profit(&a, &c, &b).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        s += a[(i, k)] * c[(k, l)] * b[(j, l)];
                    }
                }
                assert!((e.values()[(i, j)] - s).abs() < 1e-12);
            }
        }
        assert_eq!(build_profit(&a, &DMatrix::zeros(2, 2), &b).unwrap().values().amax(), 0.0);
        assert!(build_profit(&a, &DMatrix::zeros(3, 3), &b).is_err());
    }

    fn regions_with_fractions(mesh: &crate::Mesh, sizes: &[usize]) -> RegionSet {
        let lists = sizes.iter().map(|&s| (0..s).collect()).collect();
        RegionSet::from_vertex_lists(mesh, lists).unwrap()
    }

    #[test]
    fn pruning() {
        let mesh = shapes::icosphere(2);
        let m = mesh.num_vertices();
        let x = regions_with_fractions(&mesh, &[m / 2]);
        let y = regions_with_fractions(&mesh, &[m / 10, m * 2 / 5]);
        let mask = prune(&x, &y, 3.0).unwrap();
        assert_eq!(mask.row(0).iter().copied().collect::<Vec<_>>(), vec![false, true]);
        assert!(prune(&x, &y, f64::INFINITY).unwrap().iter().all(|&b| b));
        assert!(prune(&x, &x, 1.0).unwrap()[(0, 0)]);
        assert!(matches!(
            prune(&x, &regions_with_fractions(&mesh, &[m / 10]), 3.0),
            Err(Error::NoFeasiblePartner(0))
        ));
        assert!(prune(&x, &y, 0.5).is_err());
    }

    #[test]
    fn constraint_matrix_layout() {
        let q = assignment_constraint_matrix(2, 3);
        assert_eq!(q.shape(), (5, 6));
        for k in 0..6 {
            assert_eq!(q.column(k).sum(), 2);
        }
        // Π(1, 2) sits at k = 1 + 2·2 = 5
        assert_eq!(q[(1, 5)], 1);
        assert_eq!(q[(4, 5)], 1);
    }

    #[test]
    fn lp_on_small_instances() {
        let e = pm(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let x = lp_relaxation_solve(&e).unwrap();
        assert!((x - DMatrix::identity(2, 2)).amax() < 1e-9);
        let z = lp_relaxation_solve(&ProfitMatrix::new(DMatrix::zeros(3, 4)).unwrap()).unwrap();
        for i in 0..3 {
            assert!((z.row(i).sum() - 1.0).abs() < 1e-9);
        }
        assert!(z.iter().all(|&v| v.abs() < 1e-9 || (v - 1.0).abs() < 1e-9));
    }
}
