mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fmatch::matcher::{apply_permutation, initial_permutation, match_coefficients, match_regions, MatchOptions};
use fmatch::pursuit::{default_weights, SolverOptions};
use fmatch::regions::{detect_stable_regions, region_coefficients, DetectorParams, RegionSet};
use fmatch::shapes;
use fmatch::spectral::mesh_eigenbasis;

use common::{geodesic_ball, jaccard};

fn random(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn permute_rows(b: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(order.len(), b.ncols(), |i, j| b[(order[i], j)])
}

fn options() -> MatchOptions {
    MatchOptions {
        solver: SolverOptions {
            max_iter: 20_000,
            tol: 1e-14,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn self_match_is_the_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&mut rng, 14, 8);
    let w = default_weights(8, 1.0);
    let res = match_coefficients(&a, &a, None, &w, &options()).unwrap();
    assert!(res.assignment.is_identity());
    assert!(res.o.norm() <= 1e-6, "‖O‖ = {}", res.o.norm());
    let diag: f64 = (0..8).map(|i| res.c[(i, i)]).fold(f64::INFINITY, f64::min);
    let mut off = 0.0f64;
    for i in 0..8 {
        for j in 0..8 {
            if i != j {
                off = off.max(res.c[(i, j)].abs());
            }
        }
    }
    assert!(diag > 0.9 && off < 0.05, "diag min {diag}, off-diagonal max {off}");
    assert!(!res.swapped);
}

#[test]
fn shuffled_rows_give_the_inverse_shuffle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = default_weights(6, 1.0);
    for _ in 0..5 {
        let a = random(&mut rng, 10, 6);
        let base = match_coefficients(&a, &a, None, &w, &options()).unwrap();
        let mut order: Vec<usize> = (0..10).collect();
        order.shuffle(&mut rng);
        let b = permute_rows(&a, &order);
        let res = match_coefficients(&a, &b, None, &w, &options()).unwrap();
        // row i of A pairs with the row of B that holds it
        for (i, j) in res.pairs() {
            assert_eq!(order[j], i);
        }
        assert!((&res.c - &base.c).amax() <= 1e-6);
    }
}

#[test]
fn matching_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&mut rng, 7, 5);
    let b = random(&mut rng, 9, 5);
    let w = default_weights(5, 1.0);
    let r1 = match_coefficients(&a, &b, None, &w, &MatchOptions::default()).unwrap();
    let r2 = match_coefficients(&a, &b, None, &w, &MatchOptions::default()).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.report(), r2.report());
}

/// Three regions of X are replaced by geodesic balls with no counterpart on Y.
#[test]
fn spurious_rows_carry_the_outliers() {
    let mesh_x = shapes::blob(10);
    let mesh_y = mesh_x.clone();
    let basis_x = mesh_eigenbasis(&mesh_x, 20).unwrap();
    let basis_y = mesh_eigenbasis(&mesh_y, 20).unwrap();
    let detected = detect_stable_regions(&mesh_x, &basis_x, &DetectorParams::default()).unwrap();
    let q = detected.len();
    assert!(q >= 8, "only {q} regions");
    let originals: Vec<Vec<usize>> = (0..q).map(|i| detected.members(i).to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spurious = [1, q / 2, q - 2];
    let mut lists = originals.clone();
    for &i in &spurious {
        // same area as the region it replaces, as far from every original as possible
        let frac = detected.area_fractions()[i];
        let overlap = |ball: &Vec<usize>| originals.iter().map(|l| jaccard(l, ball)).fold(0.0, f64::max);
        lists[i] = (0..40)
            .map(|_| geodesic_ball(&mesh_x, rng.gen_range(0..mesh_x.num_vertices()), frac))
            .min_by(|p, r| overlap(p).total_cmp(&overlap(r)))
            .unwrap();
    }
    let rx = RegionSet::from_vertex_lists(&mesh_x, lists).unwrap();
    let ry = RegionSet::from_vertex_lists(&mesh_y, originals).unwrap();
    let a = region_coefficients(&rx, &basis_x).unwrap();
    let b = region_coefficients(&ry, &basis_y).unwrap();
    let opts = MatchOptions {
        solver: SolverOptions {
            lambda_scale: 1e-4,
            max_iter: 20_000,
            tol: 1e-12,
            ..Default::default()
        },
        ..Default::default()
    };
    let res = match_regions(&a, &b, &rx, &ry, &opts).unwrap();
    let norms = res.outlier_row_norms();
    let mut clean: Vec<f64> = (0..q).filter(|i| !spurious.contains(i)).map(|i| norms[i]).collect();
    clean.sort_by(f64::total_cmp);
    let median = clean[clean.len() / 2];
    for &i in &spurious {
        assert!(norms[i] > 0.0 && norms[i] >= 10.0 * median, "row {i}: {} vs median {median}", norms[i]);
    }
    for (i, j) in res.pairs() {
        if !spurious.contains(&i) {
            assert_eq!(i, j);
        }
    }
}

#[test]
fn more_regions_on_x_swaps_the_roles() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = random(&mut rng, 6, 5);
    let mut rows: Vec<usize> = (0..6).collect();
    rows.extend([0, 3, 5]);
    let mut a = permute_rows(&b, &rows);
    for i in 6..9 {
        for k in 0..5 {
            a[(i, k)] += rng.gen_range(-0.5..0.5);
        }
    }
    let w = default_weights(5, 1.0);
    let res = match_coefficients(&a, &b, None, &w, &options()).unwrap();
    assert!(res.swapped);
    assert_eq!(res.c.shape(), (5, 5));
    assert_eq!(res.o.nrows(), 6);
    let pi = res.permutation_matrix();
    assert_eq!(pi.shape(), (9, 6));
    for j in 0..6 {
        assert_eq!(pi.column(j).sum(), 1.0);
    }
    for (i, j) in res.pairs().into_iter().filter(|p| p.0 < 6) {
        assert_eq!(i, j);
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let w = default_weights(3, 1.0);
    let a = DMatrix::from_element(2, 3, 1.0);
    assert!(match_coefficients(&a, &DMatrix::zeros(2, 4), None, &w, &options()).is_err());
    assert!(match_coefficients(&DMatrix::zeros(0, 3), &a, None, &w, &options()).is_err());
    let mask = DMatrix::from_element(3, 2, true);
    assert!(match_coefficients(&a, &a, Some(&mask), &w, &options()).is_err());
    let zero_outer = MatchOptions { max_outer: 0, ..options() };
    assert!(match_coefficients(&a, &a, None, &w, &zero_outer).is_err());
}

#[test]
fn uniform_start_averages_rows() {
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 3.0, 0.0, 6.0]);
    let bp = apply_permutation(&initial_permutation(2, 3), &b).unwrap();
    assert_eq!(bp.shape(), (2, 2));
    for i in 0..2 {
        assert!((bp[(i, 0)] - 1.5).abs() < 1e-15 && (bp[(i, 1)] - 4.5).abs() < 1e-15);
    }
}

#[test]
fn report_lists_the_result() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random(&mut rng, 4, 3);
    let res = match_coefficients(&a, &a, None, &default_weights(3, 1.0), &options()).unwrap();
    let text = res.report();
    for key in [
        "q = 4", "r = 4", "swapped = false", "outer_iterations", "lambda", "mu", "initial_objective",
        "objective_trace", "pairs = 0:0 1:1 2:2 3:3", "outlier_row_norms",
    ] {
        assert!(text.contains(key), "missing {key} in\n{text}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.txt");
    res.save_report(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// With `O` forced to zero and no pruning, each assignment step maximizes
    /// `tr((AC)ᵀ ΠB)` and so minimizes the data term for the current `C`.
    #[test]
    fn outer_objective_is_monotone_without_outliers(seed in 0u64..100_000, q in 2usize..9, n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, q, n);
        let mut order: Vec<usize> = (0..q).collect();
        order.shuffle(&mut rng);
        let b = permute_rows(&a, &order) + random(&mut rng, q, n) * 0.3;
        let opts = MatchOptions {
            solver: SolverOptions {
                mu: Some(1e12),
                max_iter: 50_000,
                tol: 1e-15,
                accelerate: false,
                ..Default::default()
            },
            identity_start: false,
            outer_tol: 0.0,
            ..Default::default()
        };
        let res = match_coefficients(&a, &b, None, &default_weights(n, 1.0), &opts).unwrap();
        for p in res.trace.windows(2) {
            prop_assert!(p[1] <= p[0] + 1e-10 * p[0].abs().max(1.0), "{:?}", res.trace);
        }
        prop_assert_eq!(res.o.norm(), 0.0);
    }

    #[test]
    fn permutation_rows_are_one_hot(seed in 0u64..100_000, q in 1usize..7, extra in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let a = random(&mut rng, q, n);
        let b = random(&mut rng, q + extra, n);
        let mask = DMatrix::from_fn(q, q + extra, |i, j| i == j || rng.gen_bool(0.5));
        let res = match_coefficients(&a, &b, Some(&mask), &default_weights(n, 1.0), &MatchOptions::default()).unwrap();
        let pi = res.permutation_matrix();
        for i in 0..q {
            prop_assert_eq!(pi.row(i).sum(), 1.0);
        }
        for j in 0..q + extra {
            prop_assert!(pi.column(j).sum() <= 1.0);
        }
        for (i, j) in res.pairs() {
            prop_assert!(mask[(i, j)]);
        }
    }
}
