//! Synthetic test shapes: platonic solids, geodesic spheres and an
//! asymmetric bumpy blob, plus vertex jitter and rigid motions.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{cross, dot, norm, Mesh, Point3};

fn normalize(p: Point3) -> Point3 {
    let n = norm(p);
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Regular tetrahedron with unit edge length.
pub fn regular_tetrahedron() -> Mesh {
    let s = 1.0 / 8f64.sqrt();
    Mesh::new(
        vec![[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]],
        vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    )
    .expect("tetrahedron is valid")
}

fn icosahedron_raw() -> (Vec<Point3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .map(normalize)
    .to_vec();
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (v, f)
}

/// Icosahedron inscribed in the unit sphere.
pub fn icosahedron() -> Mesh {
    let (v, f) = icosahedron_raw();
    Mesh::new(v, f).expect("icosahedron is valid")
}

/// Unit geodesic sphere: every icosahedron face split into `freq²`
/// triangles, vertices projected to the sphere. `10·freq² + 2` vertices.
pub fn geodesic_sphere(freq: usize) -> Mesh {
    assert!(freq >= 1);
    let (base, faces) = icosahedron_raw();
    let mut index: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut tris = Vec::new();

    let mut vertex_at = |corners: [usize; 3], w: [usize; 3]| -> usize {
        let mut key: Vec<(usize, usize)> = corners
            .iter()
            .zip(w)
            .filter(|(_, w)| *w > 0)
            .map(|(&c, w)| (c, w))
            .collect();
        key.sort_unstable();
        *index.entry(key.clone()).or_insert_with(|| {
            let mut p = [0.0; 3];
            for (c, w) in &key {
                for k in 0..3 {
                    p[k] += base[*c][k] * (*w as f64);
                }
            }
            vertices.push(normalize(p));
            vertices.len() - 1
        })
    };

    for f in &faces {
        // grid point (i, j) has weights (freq - i - j, i, j) on (f0, f1, f2)
        let mut id = vec![vec![0usize; freq + 1]; freq + 1];
        for i in 0..=freq {
            for j in 0..=freq - i {
                id[i][j] = vertex_at(*f, [freq - i - j, i, j]);
            }
        }
        for i in 0..freq {
            for j in 0..freq - i {
                tris.push([id[i][j], id[i + 1][j], id[i][j + 1]]);
                if i + j + 1 < freq {
                    tris.push([id[i + 1][j], id[i + 1][j + 1], id[i][j + 1]]);
                }
            }
        }
    }
    Mesh::new(vertices, tris).expect("geodesic sphere is valid")
}

/// Loop-style icosphere with `10·4^level + 2` vertices.
pub fn icosphere(level: u32) -> Mesh {
    geodesic_sphere(1 << level)
}

/// A Gaussian bump on the sphere of directions.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub direction: Point3,
    pub height: f64,
    /// Angular width; larger is broader.
    pub width: f64,
}

/// Asymmetric closed surface: an ellipsoid with several bumps of different
/// sizes. It has no nontrivial isometries, so correspondences are unique.
pub fn blob(freq: usize) -> Mesh {
    let bumps = [
        Bump {
            direction: [1.0, 0.3, 0.2],
            height: 0.45,
            width: 0.35,
        },
        Bump {
            direction: [-0.4, 1.0, 0.5],
            height: 0.3,
            width: 0.25,
        },
        Bump {
            direction: [0.2, -0.6, -1.0],
            height: 0.55,
            width: 0.2,
        },
        Bump {
            direction: [-1.0, -0.5, 0.3],
            height: 0.25,
            width: 0.45,
        },
    ];
    bumpy_ellipsoid(freq, [1.0, 0.8, 0.65], &bumps)
}

pub fn bumpy_ellipsoid(freq: usize, axes: [f64; 3], bumps: &[Bump]) -> Mesh {
    let sphere = geodesic_sphere(freq);
    let dirs: Vec<(Point3, Bump)> = bumps.iter().map(|b| (normalize(b.direction), *b)).collect();
    let vertices = sphere
        .vertices()
        .iter()
        .map(|&u| {
            let mut r = 1.0;
            for (d, b) in &dirs {
                let angle = dot(u, *d).clamp(-1.0, 1.0).acos();
                r += b.height * (-(angle / b.width).powi(2)).exp();
            }
            [u[0] * r * axes[0], u[1] * r * axes[1], u[2] * r * axes[2]]
        })
        .collect();
    sphere.with_vertices(vertices).expect("bumpy ellipsoid is valid")
}

/// Moves every vertex by `amplitude` in an independent uniformly random direction.
pub fn jitter(mesh: &Mesh, amplitude: f64, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = mesh
        .vertices()
        .iter()
        .map(|p| {
            let d = loop {
                let c: Point3 = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                let n = norm(c);
                if n > 1e-3 && n <= 1.0 {
                    break normalize(c);
                }
            };
            [
                p[0] + amplitude * d[0],
                p[1] + amplitude * d[1],
                p[2] + amplitude * d[2],
            ]
        })
        .collect();
    mesh.with_vertices(vertices).expect("jitter keeps the mesh valid")
}

/// Applies `x ↦ R x + t` where `R` rotates by `angle` about `axis`.
pub fn rigid_motion(mesh: &Mesh, axis: Point3, angle: f64, translation: Point3) -> Mesh {
    let k = normalize(axis);
    let (s, c) = angle.sin_cos();
    let vertices = mesh
        .vertices()
        .iter()
        .map(|&p| {
            // Rodrigues' formula
            let kxp = cross(k, p);
            let kdp = dot(k, p);
            let mut q = [0.0; 3];
            for i in 0..3 {
                q[i] = p[i] * c + kxp[i] * s + k[i] * kdp * (1.0 - c) + translation[i];
            }
            q
        })
        .collect();
    mesh.with_vertices(vertices).expect("rigid motion keeps the mesh valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_counts() {
        for f in [1, 2, 3, 5] {
            let m = geodesic_sphere(f);
            assert_eq!(m.num_vertices(), 10 * f * f + 2);
            assert_eq!(m.num_triangles(), 20 * f * f);
        }
        assert_eq!(icosphere(2).num_vertices(), 162);
    }

    #[test]
    fn sphere_area_converges() {
        let a = geodesic_sphere(16).total_area();
        assert!((a - 4.0 * std::f64::consts::PI).abs() / a < 0.01);
    }

    #[test]
    fn jitter_is_deterministic() {
        let m = icosphere(1);
        let a = jitter(&m, 0.01, 7);
        let b = jitter(&m, 0.01, 7);
        assert_eq!(a.vertices(), b.vertices());
        for (p, q) in m.vertices().iter().zip(a.vertices()) {
            assert!((crate::mesh::distance(*p, *q) - 0.01).abs() < 1e-12);
        }
    }
}
