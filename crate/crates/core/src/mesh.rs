//! Validated triangle meshes with lumped vertex areas and edge-graph adjacency.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// An immutable, validated, connected, edge-manifold triangle mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    face_areas: Vec<f64>,
    vertex_areas: Vec<f64>,
    // CSR adjacency of the undirected edge graph
    adj_offsets: Vec<usize>,
    adj: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}

fn triangle_area(p: Point3, q: Point3, r: Point3) -> f64 {
    0.5 * norm(cross(sub(q, p), sub(r, p)))
}

impl Mesh {
    /// Builds and validates a mesh. Vertex order is preserved.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let m = vertices.len();
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        for (v, p) in vertices.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMesh(format!("vertex {v} has non-finite coordinates")));
            }
        }

        let mut face_areas = Vec::with_capacity(triangles.len());
        let mut vertex_areas = vec![0.0; m];
        let mut edge_faces: HashMap<(usize, usize), u32> = HashMap::new();
        for (f, t) in triangles.iter().enumerate() {
            for &i in t {
                if i >= m {
                    return Err(Error::InvalidFace {
                        face: f,
                        msg: format!("vertex index {i} out of range (mesh has {m} vertices)"),
                    });
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidFace {
                    face: f,
                    msg: "repeated vertex index".into(),
                });
            }
            let (p, q, r) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            let area = triangle_area(p, q, r);
            let longest = distance(p, q).max(distance(q, r)).max(distance(r, p));
            if !(area > f64::EPSILON * longest * longest) {
                return Err(Error::InvalidFace {
                    face: f,
                    msg: format!("degenerate (area {area:e})"),
                });
            }
            face_areas.push(area);
            for &i in t {
                vertex_areas[i] += area / 3.0;
            }
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let count = edge_faces.entry(key).or_insert(0);
                *count += 1;
                if *count > 2 {
                    return Err(Error::NonManifoldEdge(key.0, key.1));
                }
            }
        }

        let mut edges: Vec<(usize, usize)> = edge_faces.into_keys().collect();
        edges.sort_unstable();

        let mut degree = vec![0usize; m];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut adj_offsets = Vec::with_capacity(m + 1);
        adj_offsets.push(0);
        for d in &degree {
            adj_offsets.push(adj_offsets.last().unwrap() + d);
        }
        let mut fill = adj_offsets[..m].to_vec();
        let mut adj = vec![0; adj_offsets[m]];
        for &(a, b) in &edges {
            adj[fill[a]] = b;
            fill[a] += 1;
            adj[fill[b]] = a;
            fill[b] += 1;
        }
        for v in 0..m {
            adj[adj_offsets[v]..adj_offsets[v + 1]].sort_unstable();
        }

        let mesh = Mesh {
            vertices,
            triangles,
            face_areas,
            vertex_areas,
            adj_offsets,
            adj,
            edges,
        };
        mesh.check_connected()?;
        Ok(mesh)
    }

    fn check_connected(&self) -> Result<()> {
        let m = self.num_vertices();
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(v) => Err(Error::Disconnected(v)),
            None => Ok(()),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Lumped (barycentric) area per vertex: one third of each incident face.
    pub fn vertex_areas(&self) -> &[f64] {
        &self.vertex_areas
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.adj_offsets[v]..self.adj_offsets[v + 1]]
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        distance(self.vertices[a], self.vertices[b])
    }

    /// Axis-aligned bounding box diagonal length.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        distance(lo, hi)
    }

    /// Returns a new mesh with the same connectivity and moved vertices.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Mesh> {
        if vertices.len() != self.num_vertices() {
            return Err(Error::dims(self.num_vertices(), vertices.len()));
        }
        Mesh::new(vertices, self.triangles.clone())
    }

    /// Whether the vertex-induced subgraph on `members` is connected.
    pub fn is_connected_subset(&self, members: &[usize]) -> bool {
        if members.is_empty() {
            return false;
        }
        let mut inside = vec![false; self.num_vertices()];
        for &v in members {
            inside[v] = true;
        }
        let mut seen = vec![false; self.num_vertices()];
        let mut stack = vec![members[0]];
        seen[members[0]] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in self.neighbors(v) {
                if inside[w] && !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        let distinct = inside.iter().filter(|&&b| b).count();
        count == distinct
    }
}
