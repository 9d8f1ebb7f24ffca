mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fmatch::assignment::{build_profit, lp_relaxation_solve, prune, solve_assignment, FeasibilityMask, ProfitMatrix};
use fmatch::regions::RegionSet;
use fmatch::shapes;

use common::brute_force_assignment;

fn random_profit(rng: &mut impl Rng, q: usize, r: usize) -> DMatrix<f64> {
    DMatrix::from_fn(q, r, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn two_by_two_example() {
    let e = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    let a = solve_assignment(&ProfitMatrix::new(e.clone()).unwrap()).unwrap();
    assert!(a.is_identity());
    assert_eq!(a.profit(&e), 5.0);
}

#[test]
fn zero_profit_lp_is_a_vertex() {
    let x = lp_relaxation_solve(&ProfitMatrix::new(DMatrix::zeros(4, 6)).unwrap()).unwrap();
    assert!(x.iter().all(|&v| v == 0.0 || v == 1.0));
    for i in 0..4 {
        assert_eq!(x.row(i).sum(), 1.0);
    }
    for j in 0..6 {
        assert!(x.column(j).sum() <= 1.0);
    }
}

#[test]
fn identical_region_sets_keep_the_diagonal() {
    let mesh = shapes::icosphere(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lists: Vec<Vec<usize>> = (0..7)
        .map(|_| {
            let k = rng.gen_range(1..80);
            let mut v: Vec<usize> = (0..mesh.num_vertices()).collect();
            v.shuffle(&mut rng);
            v.truncate(k);
            v
        })
        .collect();
    let set = RegionSet::from_vertex_lists(&mesh, lists).unwrap();
    for ratio in [1.0, 1.5, 3.0, f64::INFINITY] {
        let mask = prune(&set, &set, ratio).unwrap();
        assert!((0..7).all(|i| mask[(i, i)]));
        if ratio.is_infinite() {
            assert!(mask.iter().all(|&b| b));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hungarian_matches_enumeration(seed in 0u64..1_000_000, q in 1usize..=7, extra in 0usize..=3) {
        let r = (q + extra).min(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_profit(&mut rng, q, r);
        let a = solve_assignment(&ProfitMatrix::new(e.clone()).unwrap()).unwrap();
        let best = brute_force_assignment(&e, |_, _| true).unwrap();
        prop_assert!((a.profit(&e) - best).abs() <= 1e-12);
        // Π1 = 1 and Πᵀ1 ≤ 1
        let pi = a.matrix();
        for i in 0..q {
            prop_assert_eq!(pi.row(i).sum(), 1.0);
        }
        for j in 0..r {
            prop_assert!(pi.column(j).sum() <= 1.0);
        }
    }

    #[test]
    fn masked_hungarian_matches_masked_enumeration(seed in 0u64..1_000_000, q in 1usize..=6, extra in 0usize..=2) {
        let r = q + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_profit(&mut rng, q, r);
        let mask: FeasibilityMask = DMatrix::from_fn(q, r, |_, _| rng.gen_bool(0.6));
        let best = brute_force_assignment(&e, |i, j| mask[(i, j)]);
        let profit = ProfitMatrix::new(e.clone()).unwrap().with_mask(mask.clone());
        match (profit, best) {
            (Ok(p), Some(best)) => {
                let a = solve_assignment(&p).unwrap();
                prop_assert!((a.profit(&e) - best).abs() <= 1e-12);
                prop_assert!(a.cols().iter().enumerate().all(|(i, &j)| mask[(i, j)]));
            }
            (Ok(p), None) => prop_assert!(solve_assignment(&p).is_err()),
            // an empty mask row is rejected when the mask is attached
            (Err(_), best) => prop_assert!(best.is_none()),
        }
    }

    #[test]
    fn row_offsets_do_not_change_the_assignment(seed in 0u64..1_000_000, row in 0usize..5, shift in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_profit(&mut rng, 5, 7);
        let mut shifted = e.clone();
        for j in 0..7 {
            shifted[(row, j)] += shift;
        }
        let a = solve_assignment(&ProfitMatrix::new(e).unwrap()).unwrap();
        let b = solve_assignment(&ProfitMatrix::new(shifted).unwrap()).unwrap();
        prop_assert_eq!(a.cols(), b.cols());
    }

    #[test]
    fn row_permutation_equivariance(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_profit(&mut rng, 6, 8);
        let mut order: Vec<usize> = (0..6).collect();
        order.shuffle(&mut rng);
        let permuted = DMatrix::from_fn(6, 8, |i, j| e[(order[i], j)]);
        let a = solve_assignment(&ProfitMatrix::new(e).unwrap()).unwrap();
        let b = solve_assignment(&ProfitMatrix::new(permuted).unwrap()).unwrap();
        for (i, &src) in order.iter().enumerate() {
            prop_assert_eq!(b.cols()[i], a.cols()[src]);
        }
    }

    #[test]
    fn lp_relaxation_is_integral_and_optimal(seed in 0u64..1_000_000, q in 1usize..=5, extra in 0usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_profit(&mut rng, q, q + extra);
        let p = ProfitMatrix::new(e.clone()).unwrap();
        let x = lp_relaxation_solve(&p).unwrap();
        prop_assert!(x.iter().all(|v| v.abs() <= 1e-9 || (v - 1.0).abs() <= 1e-9));
        let hung = solve_assignment(&p).unwrap().profit(&e);
        prop_assert!((x.component_mul(&e).sum() - hung).abs() <= 1e-9);
    }

    #[test]
    fn profit_is_the_triple_product(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, r, n) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..5));
        let a = random_profit(&mut rng, q, n);
        let c = random_profit(&mut rng, n, n);
        let b = random_profit(&mut rng, r, n);
        let e = build_profit(&a, &c, &b).unwrap();
        for i in 0..q {
            for j in 0..r {
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        s += a[(i, k)] * c[(k, l)] * b[(j, l)];
                    }
                }
                prop_assert!((e.values()[(i, j)] - s).abs() <= 1e-12);
            }
        }
        let zero = build_profit(&a, &DMatrix::zeros(n, n), &b).unwrap();
        prop_assert!(zero.values().iter().all(|&v| v == 0.0));
    }
}
