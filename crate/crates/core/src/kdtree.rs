//! Exact nearest-neighbor search in moderate dimension.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// kd-tree over the rows of a matrix. Queries return the Euclidean-nearest
/// row, the smallest index among equidistant rows.
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    index: Vec<usize>,
    root: Node,
}

impl KdTree {
    pub fn new(points: &DMatrix<f64>) -> Result<Self> {
        let (k, dim) = points.shape();
        if k == 0 || dim == 0 {
            return Err(Error::InvalidArgument("kd-tree needs at least one point and one dimension".into()));
        }
        let mut flat = Vec::with_capacity(k * dim);
        for i in 0..k {
            flat.extend(points.row(i).iter());
        }
        let mut index: Vec<usize> = (0..k).collect();
        let root = build(&flat, dim, &mut index, 0);
        // store points in leaf order for locality
        let mut ordered = Vec::with_capacity(k * dim);
        for &i in &index {
            ordered.extend_from_slice(&flat[i * dim..(i + 1) * dim]);
        }
        Ok(KdTree {
            dim,
            points: ordered,
            index,
            root,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &[f64]) -> (usize, f64) {
        assert_eq!(q.len(), self.dim, "query dimension");
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(&self.root, q, &mut best);
        best
    }

    fn search(&self, node: &Node, q: &[f64], best: &mut (usize, f64)) {
        match node {
            Node::Leaf { start, end } => {
                for slot in *start..*end {
                    let p = &self.points[slot * self.dim..(slot + 1) * self.dim];
                    let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    let i = self.index[slot];
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[*dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // equal distance can still hold a smaller index
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build(flat: &[f64], dim: usize, index: &mut [usize], offset: usize) -> Node {
    let len = index.len();
    if len <= LEAF_SIZE {
        return Node::Leaf {
            start: offset,
            end: offset + len,
        };
    }
    let coord = |i: usize, d: usize| flat[i * dim + d];
    let mut split_dim = 0;
    let mut widest = -1.0;
    for d in 0..dim {
        let (lo, hi) = index.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(coord(i, d)), hi.max(coord(i, d)))
        });
        if hi - lo > widest {
            widest = hi - lo;
            split_dim = d;
        }
    }
    if widest <= 0.0 {
        // all points coincide
        return Node::Leaf {
            start: offset,
            end: offset + len,
        };
    }
    let mid = len / 2;
    index.select_nth_unstable_by(mid, |&a, &b| {
        coord(a, split_dim).total_cmp(&coord(b, split_dim)).then(a.cmp(&b))
    });
    let value = coord(index[mid], split_dim);
    let (lo, hi) = index.split_at_mut(mid);
    Node::Split {
        dim: split_dim,
        value,
        left: Box::new(build(flat, dim, lo, offset)),
        right: Box::new(build(flat, dim, hi, offset + mid)),
    }
}

/// For each row of `q`, the index of the nearest row of `p` (smallest index
/// on ties).
pub fn nearest_rows(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Vec<usize>> {
    if p.nrows() == 0 {
        return Err(Error::InvalidArgument("nearest_rows: empty point set".into()));
    }
    if p.ncols() != q.ncols() {
        return Err(Error::dims(format!("{} columns", p.ncols()), q.ncols()));
    }
    let tree = KdTree::new(p)?;
    let queries: Vec<Vec<f64>> = (0..q.nrows()).map(|i| q.row(i).iter().copied().collect()).collect();
    Ok(queries.par_iter().map(|row| tree.nearest(row).0).collect())
}
