//! Edge-graph geodesics (Dijkstra with Euclidean edge lengths) and shape diameter.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Shortest-path distances from one source vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    pub source: usize,
    pub distances: Vec<f64>,
}

impl GeodesicField {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    /// Vertex attaining the maximum distance (smallest index on ties).
    pub fn farthest(&self) -> usize {
        let mut best = 0;
        for (v, &d) in self.distances.iter().enumerate() {
            if d > self.distances[best] {
                best = v;
            }
        }
        best
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn geodesic_distances(mesh: &Mesh, source: usize) -> Result<GeodesicField> {
    let m = mesh.num_vertices();
    if source >= m {
        return Err(Error::IndexOutOfRange { index: source, len: m });
    }
    let mut dist = vec![f64::INFINITY; m];
    let mut done = vec![false; m];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry {
        dist: 0.0,
        vertex: source,
    });
    while let Some(Entry { dist: d, vertex: v }) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for &w in mesh.neighbors(v) {
            let nd = d + mesh.edge_length(v, w);
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Entry { dist: nd, vertex: w });
            }
        }
    }
    if let Some(v) = dist.iter().position(|d| !d.is_finite()) {
        return Err(Error::Disconnected(v));
    }
    Ok(GeodesicField {
        source,
        distances: dist,
    })
}

/// Distance fields for several sources, computed in parallel.
pub fn geodesic_distances_many(mesh: &Mesh, sources: &[usize]) -> Result<Vec<GeodesicField>> {
    sources
        .par_iter()
        .map(|&s| geodesic_distances(mesh, s))
        .collect()
}

/// Largest geodesic distance found from `sample_count` sources.
///
/// Sources are chosen by farthest-point sampling starting at vertex 0. When
/// `sample_count >= m` every vertex is a source and the result is the exact
/// edge-graph diameter.
pub fn shape_diameter(mesh: &Mesh, sample_count: usize) -> Result<f64> {
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample_count must be >= 1".into()));
    }
    let m = mesh.num_vertices();
    if sample_count >= m {
        let all: Vec<usize> = (0..m).collect();
        let fields = geodesic_distances_many(mesh, &all)?;
        return Ok(fields.iter().map(GeodesicField::max_distance).fold(0.0, f64::max));
    }
    let mut min_dist = vec![f64::INFINITY; m];
    let mut source = 0;
    let mut diameter: f64 = 0.0;
    for _ in 0..sample_count {
        let field = geodesic_distances(mesh, source)?;
        diameter = diameter.max(field.max_distance());
        for (md, d) in min_dist.iter_mut().zip(&field.distances) {
            *md = md.min(*d);
        }
        source = (0..m)
            .max_by(|&a, &b| min_dist[a].total_cmp(&min_dist[b]).then(b.cmp(&a)))
            .unwrap();
    }
    Ok(diameter)
}
