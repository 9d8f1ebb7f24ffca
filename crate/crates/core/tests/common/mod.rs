//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use fmatch::geodesic::geodesic_distances;
use fmatch::Mesh;
use nalgebra::DMatrix;

/// Best total profit over every injective row→column map, by enumeration.
pub fn brute_force_assignment(e: &DMatrix<f64>, allowed: impl Fn(usize, usize) -> bool) -> Option<f64> {
    fn go(
        e: &DMatrix<f64>,
        allowed: &dyn Fn(usize, usize) -> bool,
        row: usize,
        used: &mut Vec<bool>,
        acc: f64,
        best: &mut Option<f64>,
    ) {
        if row == e.nrows() {
            if best.map_or(true, |b| acc > b) {
                *best = Some(acc);
            }
            return;
        }
        for j in 0..e.ncols() {
            if !used[j] && allowed(row, j) {
                used[j] = true;
                go(e, allowed, row + 1, used, acc + e[(row, j)], best);
                used[j] = false;
            }
        }
    }
    let mut best = None;
    go(e, &allowed, 0, &mut vec![false; e.ncols()], 0.0, &mut best);
    best
}

/// Exact integer determinant by fraction-free (Bareiss) elimination.
pub fn bareiss_det(m: &[Vec<i64>]) -> i64 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    let mut a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    (sign * a[n - 1][n - 1]) as i64
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Minimizer of `½(u − x)² + t|u|` over a uniform grid of spacing `h`.
pub fn grid_prox_abs(x: f64, t: f64, h: f64) -> f64 {
    let r = x.abs() + 1.0;
    let steps = (2.0 * r / h).ceil() as usize;
    let f = |u: f64| 0.5 * (u - x) * (u - x) + t * u.abs();
    let mut best = (f64::INFINITY, 0.0);
    for s in 0..=steps {
        let u = -r + s as f64 * h;
        let v = f(u);
        if v < best.0 {
            best = (v, u);
        }
    }
    best.1
}

/// Minimizer of `½‖u − x‖² + t‖u‖₂` by pattern search over the lattice
/// directions `{−1, 0, 1}^d` plus radial directions (the only kink is at the
/// origin), halving the mesh down to `h_min`.
pub fn pattern_search_prox_norm(x: &[f64], t: f64, h_min: f64) -> Vec<f64> {
    let d = x.len();
    let f = |u: &[f64]| {
        let sq: f64 = u.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * sq + t * u.iter().map(|a| a * a).sum::<f64>().sqrt()
    };
    let dirs: Vec<Vec<f64>> = (0..3usize.pow(d as u32))
        .map(|mut code| {
            (0..d)
                .map(|_| {
                    let v = (code % 3) as f64 - 1.0;
                    code /= 3;
                    v
                })
                .collect()
        })
        .filter(|v: &Vec<f64>| v.iter().any(|&c| c != 0.0))
        .collect();
    let mut u = x.to_vec();
    let mut fu = f(&u);
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut h = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
    while h >= h_min {
        let mut improved = false;
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut polls = dirs.clone();
        if nu > 0.0 {
            polls.push(u.iter().map(|a| a / nu).collect());
            polls.push(u.iter().map(|a| -a / nu).collect());
            if nu <= h {
                polls.push(u.iter().map(|a| -a / h).collect());
            }
        }
        if nx > 0.0 {
            // near the kink only the direction of x itself can descend
            polls.push(x.iter().map(|a| a / nx).collect());
        }
        for dir in &polls {
            let cand: Vec<f64> = u.iter().zip(dir).map(|(a, b)| a + h * b).collect();
            let fc = f(&cand);
            if fc < fu {
                u = cand;
                fu = fc;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    u
}

/// Worst violation of the optimality conditions of
/// `½‖B′ − AC − O‖² + λ‖W⊙C‖₁ + μ‖O‖₂,₁`.
pub fn subgradient_residual(
    a: &DMatrix<f64>,
    bp: &DMatrix<f64>,
    c: &DMatrix<f64>,
    o: &DMatrix<f64>,
    w: &DMatrix<f64>,
    lambda: f64,
    mu: f64,
) -> f64 {
    let r = a * c + o - bp;
    let gc = a.transpose() * &r;
    let mut worst: f64 = 0.0;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            let t = lambda * w[(i, j)];
            let g = gc[(i, j)];
            let v = if c[(i, j)] != 0.0 {
                (g + t * c[(i, j)].signum()).abs()
            } else {
                (g.abs() - t).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    for i in 0..o.nrows() {
        let oi = o.row(i);
        let ri = r.row(i);
        let n = oi.norm();
        let v = if n > 0.0 {
            (ri + oi * (mu / n)).norm()
        } else {
            (ri.norm() - mu).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Vertices nearest to `center` in geodesic distance until their area
/// reaches `frac` of the total.
pub fn geodesic_ball(mesh: &Mesh, center: usize, frac: f64) -> Vec<usize> {
    let d = geodesic_distances(mesh, center).unwrap().distances;
    let mut order: Vec<usize> = (0..mesh.num_vertices()).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]).then(i.cmp(&j)));
    let target = frac * mesh.total_area();
    let mut acc = 0.0;
    let mut out = Vec::new();
    for v in order {
        if acc >= target {
            break;
        }
        acc += mesh.vertex_areas()[v];
        out.push(v);
    }
    out.sort_unstable();
    out
}

pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let sa: std::collections::HashSet<_> = a.iter().collect();
    let sb: std::collections::HashSet<_> = b.iter().collect();
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    if union == 0.0 {
        1.0
    } else {
        inter / union
    }
}
