use nalgebra::DVector;
use proptest::prelude::*;

use fmatch::shapes;
use fmatch::spectral::{cotangent_laplacian, eigenbasis, mesh_eigenbasis, SpectralBasis};
use fmatch::Mesh;

fn check_basis(mesh: &Mesh, basis: &SpectralBasis) {
    let lap = cotangent_laplacian(mesh).unwrap();
    assert!(basis.orthonormality_error() <= 1e-8, "orthonormality {}", basis.orthonormality_error());
    let ev = basis.eigenvalues();
    assert!(ev.windows(2).all(|w| w[0] <= w[1]), "eigenvalues not ascending");
    assert!(ev[0].abs() <= 1e-8 * ev[1].max(1e-300));
    for i in 0..basis.size() {
        let phi = basis.column(i);
        let s_phi = lap.stiffness.mul_vec(&phi);
        let resid: f64 = s_phi
            .iter()
            .zip(&phi)
            .zip(basis.masses())
            .map(|((s, p), m)| (s - ev[i] * m * p).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = s_phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if i == 0 {
            assert!(scale <= 1e-8, "constant mode not in the null space: {scale}");
        } else {
            assert!(resid <= 1e-6 * scale, "pair {i}: residual {resid} vs {scale}");
        }
        let top = phi.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
        assert!(top > 0.0, "sign convention violated in column {i}");
    }
    let c0 = basis.column(0);
    let spread = c0.iter().copied().fold(f64::NEG_INFINITY, f64::max) - c0.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread <= 1e-8 * c0[0].abs(), "first eigenfunction is not constant");
}

#[test]
fn sphere_spectrum_matches_spherical_harmonics() {
    let mesh = shapes::icosphere(4);
    assert_eq!(mesh.num_vertices(), 2562);
    let basis = mesh_eigenbasis(&mesh, 16).unwrap();
    check_basis(&mesh, &basis);
    let mut k = 1;
    for l in 1..=3usize {
        let exact = (l * (l + 1)) as f64;
        for _ in 0..2 * l + 1 {
            let ev = basis.eigenvalues()[k];
            assert!((ev - exact).abs() <= 0.05 * exact, "λ_{k} = {ev}, expected about {exact}");
            k += 1;
        }
    }
}

#[test]
fn sparse_path_basis_is_valid() {
    let mesh = shapes::blob(10);
    assert!(mesh.num_vertices() > 600);
    let basis = mesh_eigenbasis(&mesh, 20).unwrap();
    check_basis(&mesh, &basis);
}

#[test]
fn explicit_eigenbasis_agrees_with_mesh_helper() {
    let mesh = shapes::blob(5);
    let lap = cotangent_laplacian(&mesh).unwrap();
    let a = eigenbasis(&lap.stiffness, &lap.mass, 8).unwrap();
    let b = mesh_eigenbasis(&mesh, 8).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rigid_motion_preserves_basis() {
    let mesh = shapes::blob(6);
    let moved = shapes::rigid_motion(&mesh, [0.3, -1.0, 0.4], 1.1, [5.0, -2.0, 0.5]);
    let a = mesh_eigenbasis(&mesh, 12).unwrap();
    let b = mesh_eigenbasis(&moved, 12).unwrap();
    for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()).skip(1) {
        assert!((x - y).abs() <= 1e-8 * x, "{x} vs {y}");
    }
    let diff = (a.phi() - b.phi()).amax();
    assert!(diff <= 1e-6, "eigenfunctions moved by {diff}");
}

#[test]
fn projection_of_basis_functions_and_zero() {
    let mesh = shapes::blob(5);
    let basis = mesh_eigenbasis(&mesh, 10).unwrap();
    for k in 0..10 {
        let a = basis.project(&basis.column(k)).unwrap();
        let mut e = DVector::zeros(10);
        e[k] = 1.0;
        assert!((a - e).amax() <= 1e-8);
    }
    let zero = basis.project(&vec![0.0; mesh.num_vertices()]).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));
    let c = basis.synthesize(&DVector::from_fn(10, |i, _| if i == 0 { 1.0 } else { 0.0 })).unwrap();
    assert!(c.iter().all(|&v| (v - c[0]).abs() <= 1e-12));
}

fn shared_basis() -> &'static (Mesh, SpectralBasis) {
    static B: std::sync::OnceLock<(Mesh, SpectralBasis)> = std::sync::OnceLock::new();
    B.get_or_init(|| {
        let mesh = shapes::blob(6);
        let basis = mesh_eigenbasis(&mesh, 15).unwrap();
        (mesh, basis)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficient_round_trip(coeffs in prop::collection::vec(-5.0f64..5.0, 15)) {
        let (_, basis) = shared_basis();
        let a = DVector::from_vec(coeffs);
        let f = basis.synthesize(&a).unwrap();
        let back = basis.project(&f).unwrap();
        prop_assert!((back - &a).amax() <= 1e-8);
        // f lies in the span, so the vertex-level round trip is exact too
        let g = basis.synthesize(&basis.project(&f).unwrap()).unwrap();
        let err = f.iter().zip(&g).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-7);
    }

    #[test]
    fn synthesis_is_linear(
        a in prop::collection::vec(-3.0f64..3.0, 15),
        b in prop::collection::vec(-3.0f64..3.0, 15),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let (_, basis) = shared_basis();
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let lhs = basis.synthesize(&(&a * alpha + &b * beta)).unwrap();
        let fa = basis.synthesize(&a).unwrap();
        let fb = basis.synthesize(&b).unwrap();
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (alpha * fa[i] + beta * fb[i])).abs() <= 1e-10);
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero(seed in 0u64..500) {
        let mesh = shapes::jitter(&shapes::icosphere(2), 0.02, seed);
        let lap = cotangent_laplacian(&mesh).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        prop_assert!(lap.stiffness.mul_vec(&ones).iter().all(|v| v.abs() <= 1e-10));
        let t = lap.stiffness.transpose();
        for i in 0..mesh.num_vertices() {
            for (j, v) in lap.stiffness.row(i) {
                prop_assert!((v - t.get(i, j)).abs() <= 1e-12);
            }
        }
    }
}
