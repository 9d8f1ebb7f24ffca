//! Geodesic error of point maps, cumulative error curves and colored export.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::geodesic_distances;
use crate::io::{fmt_f64, save_ply_colored, Rgb};
use crate::mesh::Mesh;
use crate::refine::PointMap;

/// Per-vertex geodesic distance on Y between `map(i)` and `truth(i)`,
/// divided by `diameter`.
pub fn correspondence_error(
    map: &PointMap,
    truth: &PointMap,
    mesh_y: &Mesh,
    diameter: f64,
) -> Result<Vec<f64>> {
    if map.len() != truth.len() {
        return Err(Error::dims(format!("map of length {}", truth.len()), map.len()));
    }
    let m = mesh_y.num_vertices();
    for pm in [map, truth] {
        if let Some(&t) = pm.targets().iter().find(|&&t| t >= m) {
            return Err(Error::IndexOutOfRange { index: t, len: m });
        }
    }
    if !(diameter > 0.0) {
        return Err(Error::InvalidArgument(format!("diameter must be positive, got {diameter}")));
    }
    // one Dijkstra per distinct ground-truth target
    let mut sources: Vec<usize> = truth.targets().to_vec();
    sources.sort_unstable();
    sources.dedup();
    let fields: Vec<Vec<f64>> = sources
        .par_iter()
        .map(|&s| geodesic_distances(mesh_y, s).map(|f| f.distances))
        .collect::<Result<_>>()?;
    let slot: HashMap<usize, usize> = sources.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    Ok((0..map.len())
        .map(|i| fields[slot[&truth.get(i)]][map.get(i)] / diameter)
        .collect())
}

/// Fraction of vertices with error at most each threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl ErrorCurve {
    /// Tab-separated `threshold fraction` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# threshold\tfraction\n");
        for (t, f) in self.thresholds.iter().zip(&self.fractions) {
            let _ = writeln!(s, "{}\t{}", fmt_f64(*t), fmt_f64(*f));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// `0, 0.01, …, 0.25`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=25).map(|k| k as f64 / 100.0).collect()
}

pub fn error_curve(errors: &[f64], thresholds: &[f64]) -> Result<ErrorCurve> {
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("thresholds must be ascending".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let fractions = thresholds
        .iter()
        .map(|&t| {
            if n == 0 {
                1.0
            } else {
                sorted.partition_point(|&e| e <= t) as f64 / n as f64
            }
        })
        .collect();
    Ok(ErrorCurve {
        thresholds: thresholds.to_vec(),
        fractions,
    })
}

/// Smooth RGB field from normalized vertex coordinates.
pub fn coordinate_colors(mesh: &Mesh) -> Vec<Rgb> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in mesh.vertices() {
        for k in 0..3 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    mesh.vertices()
        .iter()
        .map(|v| {
            let mut c = [0u8; 3];
            for k in 0..3 {
                let t = if hi[k] > lo[k] { (v[k] - lo[k]) / (hi[k] - lo[k]) } else { 0.5 };
                c[k] = (t * 255.0).round() as u8;
            }
            c
        })
        .collect()
}

/// Writes Y colored by its coordinates and X colored through the map.
pub fn export_colored_ply(
    mesh_x: &Mesh,
    mesh_y: &Mesh,
    map: &PointMap,
    out_x: impl AsRef<Path>,
    out_y: impl AsRef<Path>,
) -> Result<()> {
    if map.len() != mesh_x.num_vertices() {
        return Err(Error::dims(format!("map over {} vertices", mesh_x.num_vertices()), map.len()));
    }
    if map.num_targets() != mesh_y.num_vertices() {
        return Err(Error::dims(
            format!("map into {} vertices", mesh_y.num_vertices()),
            map.num_targets(),
        ));
    }
    let colors_y = coordinate_colors(mesh_y);
    let colors_x: Vec<Rgb> = map.targets().iter().map(|&t| colors_y[t]).collect();
    save_ply_colored(mesh_y, &colors_y, out_y)?;
    save_ply_colored(mesh_x, &colors_x, out_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn curve_counts() {
        let c = error_curve(&[0.1, 0.3], &[0.2, 0.4]).unwrap();
        assert_eq!(c.fractions, vec![0.5, 1.0]);
        let z = error_curve(&[0.0; 5], &default_thresholds()).unwrap();
        assert!(z.fractions.iter().all(|&f| f == 1.0));
        assert!(error_curve(&[0.0], &[0.2, 0.1]).is_err());
    }

    #[test]
    fn perfect_map_has_zero_error() {
        let mesh = shapes::icosahedron();
        let id = PointMap::identity(12);
        let e = correspondence_error(&id, &id, &mesh, 1.0).unwrap();
        assert!(e.iter().all(|&x| x == 0.0));
        assert!(correspondence_error(&id, &id, &mesh, 0.0).is_err());
        let short = PointMap::identity(3);
        assert!(correspondence_error(&short, &id, &mesh, 1.0).is_err());
    }

    #[test]
    fn colors_are_smooth_and_full_range() {
        let mesh = shapes::icosphere(1);
        let c = coordinate_colors(&mesh);
        for k in 0..3 {
            assert_eq!(c.iter().map(|x| x[k]).max(), Some(255));
            assert_eq!(c.iter().map(|x| x[k]).min(), Some(0));
        }
    }
}
