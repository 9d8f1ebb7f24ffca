//! Region indicator functions: a simplified stable-region detector over
//! eigenfunction level sets, region-file ingestion, area filtering and
//! projection onto a spectral basis.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spectral::SpectralBasis;

/// `q × n` matrix whose rows are the spectral coefficients of regions.
pub type CoefficientMatrix = DMatrix<f64>;

/// An ordered collection of binary vertex regions on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    num_vertices: usize,
    members: Vec<Vec<usize>>,
    area_fractions: Vec<f64>,
}

impl RegionSet {
    /// Builds regions from vertex lists. Lists are sorted and deduplicated;
    /// empty lists and out-of-range indices are rejected. Regions that are not
    /// connected on the mesh are kept with a warning.
    pub fn from_vertex_lists(mesh: &Mesh, lists: Vec<Vec<usize>>) -> Result<Self> {
        let m = mesh.num_vertices();
        let total = mesh.total_area();
        let mut members = Vec::with_capacity(lists.len());
        let mut area_fractions = Vec::with_capacity(lists.len());
        for (r, mut list) in lists.into_iter().enumerate() {
            if list.is_empty() {
                return Err(Error::InvalidRegion {
                    region: r,
                    msg: "region is empty".into(),
                });
            }
            if let Some(&bad) = list.iter().find(|&&v| v >= m) {
                return Err(Error::InvalidRegion {
                    region: r,
                    msg: format!("vertex index {bad} out of range (mesh has {m} vertices)"),
                });
            }
            list.sort_unstable();
            list.dedup();
            if !mesh.is_connected_subset(&list) {
                log::warn!("region {r} is not connected on the mesh; keeping it");
            }
            let area: f64 = list.iter().map(|&v| mesh.vertex_areas()[v]).sum();
            area_fractions.push(area / total);
            members.push(list);
        }
        Ok(RegionSet {
            num_vertices: m,
            members,
            area_fractions,
        })
    }

    pub fn empty(num_vertices: usize) -> Self {
        RegionSet {
            num_vertices,
            members: Vec::new(),
            area_fractions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    /// Sorted vertex indices of region `i`.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    pub fn area_fractions(&self) -> &[f64] {
        &self.area_fractions
    }

    /// Indicator function of region `i` over all vertices.
    pub fn indicator(&self, i: usize) -> Vec<f64> {
        let mut f = vec![0.0; self.num_vertices];
        for &v in &self.members[i] {
            f[v] = 1.0;
        }
        f
    }

    /// Regions reordered so that new region `k` is old region `order[k]`.
    pub fn reordered(&self, order: &[usize]) -> RegionSet {
        RegionSet {
            num_vertices: self.num_vertices,
            members: order.iter().map(|&i| self.members[i].clone()).collect(),
            area_fractions: order.iter().map(|&i| self.area_fractions[i]).collect(),
        }
    }

    /// Concatenation of two region sets over the same mesh.
    pub fn concat(&self, other: &RegionSet) -> Result<RegionSet> {
        if self.num_vertices != other.num_vertices {
            return Err(Error::dims(self.num_vertices, other.num_vertices));
        }
        let mut out = self.clone();
        out.members.extend(other.members.iter().cloned());
        out.area_fractions.extend(&other.area_fractions);
        Ok(out)
    }

    /// Writes one line of space-separated vertex indices per region.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::new();
        let _ = writeln!(s, "# {} regions over {} vertices", self.len(), self.num_vertices);
        for m in &self.members {
            let line: Vec<String> = m.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Reads a region file: one region per line as vertex indices; `#` starts a
/// comment and blank lines are skipped.
pub fn load_regions(path: impl AsRef<Path>, mesh: &Mesh) -> Result<RegionSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_regions(&text, mesh)
}

pub fn parse_regions(text: &str, mesh: &Mesh) -> Result<RegionSet> {
    let mut lists = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let list = body
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    line: ln + 1,
                    msg: format!("invalid vertex index '{t}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        lists.push(list);
    }
    RegionSet::from_vertex_lists(mesh, lists)
}

/// Regions with area fraction at least `min_frac`, order preserved.
pub fn filter_by_area(regions: &RegionSet, min_frac: f64) -> RegionSet {
    let keep: Vec<usize> = (0..regions.len())
        .filter(|&i| regions.area_fractions[i] >= min_frac)
        .collect();
    regions.reordered(&keep)
}

/// Projects every region indicator onto the basis; row `i` is `a_iᵀ`.
pub fn region_coefficients(regions: &RegionSet, basis: &SpectralBasis) -> Result<CoefficientMatrix> {
    if regions.num_vertices() != basis.num_vertices() {
        return Err(Error::dims(
            format!("{} vertices", basis.num_vertices()),
            format!("{} vertices", regions.num_vertices()),
        ));
    }
    let n = basis.size();
    let mut a = DMatrix::zeros(regions.len(), n);
    for i in 0..regions.len() {
        let coeffs = basis.project(&regions.indicator(i))?;
        a.row_mut(i).copy_from(&coeffs.transpose());
    }
    Ok(a)
}

/// Parameters of the level-set stability detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// Nontrivial eigenfunctions swept (φ₁ … φ_k).
    pub num_functions: usize,
    /// Uniform thresholds per sweep.
    pub steps: usize,
    /// Maximum relative area change across the window for a stable component.
    pub stability_tol: f64,
    /// Consecutive thresholds in the stability window (odd).
    pub stability_window: usize,
    pub min_area_frac: f64,
    pub max_area_frac: f64,
    /// Regions overlapping a larger kept region by more than this (area-weighted
    /// Jaccard) are dropped.
    pub max_overlap: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            num_functions: 8,
            steps: 64,
            stability_tol: 0.2,
            stability_window: 5,
            min_area_frac: 0.05,
            max_area_frac: 0.5,
            max_overlap: 0.8,
        }
    }
}

#[derive(Debug)]
struct Branch {
    peak: usize,
    birth: usize,
    areas: Vec<f64>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    members: Vec<usize>,
    area: f64,
}

/// Sweeps superlevel sets of `values` and returns, for each branch of the
/// component tree, its most stable level passing the filters.
fn stable_components(mesh: &Mesh, values: &[f64], params: &DetectorParams) -> Vec<Candidate> {
    let m = values.len();
    let areas = mesh.vertex_areas();
    let total = mesh.total_area();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Vec::new();
    }
    let steps = params.steps.max(1);
    let threshold = |s: usize| {
        if s + 1 == steps {
            lo
        } else {
            hi - (s + 1) as f64 * (hi - lo) / steps as f64
        }
    };

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut rank = vec![0; m];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }

    let mut uf = UnionFind {
        parent: (0..m).collect(),
    };
    let mut added = vec![false; m];
    let mut root_area = vec![0.0; m];
    let mut root_branch = vec![usize::MAX; m];
    let mut branches: Vec<Branch> = Vec::new();
    let mut live: Vec<usize> = Vec::new();
    let mut next = 0;

    for s in 0..steps {
        let t = threshold(s);
        while next < m && values[order[next]] >= t {
            let u = order[next];
            next += 1;
            added[u] = true;
            root_area[u] = areas[u];
            root_branch[u] = branches.len();
            branches.push(Branch {
                peak: u,
                birth: s,
                areas: Vec::new(),
            });
            for &w in mesh.neighbors(u) {
                if !added[w] {
                    continue;
                }
                let (ru, rw) = (uf.find(u), uf.find(w));
                if ru == rw {
                    continue;
                }
                // the branch with the higher peak survives the merge
                let (elder, younger) =
                    if rank[branches[root_branch[ru]].peak] < rank[branches[root_branch[rw]].peak] {
                        (ru, rw)
                    } else {
                        (rw, ru)
                    };
                uf.parent[younger] = elder;
                root_area[elder] += root_area[younger];
            }
        }
        live.clear();
        for v in 0..next {
            let u = order[v];
            if uf.find(u) == u {
                live.push(u);
            }
        }
        for &r in &live {
            let b = &mut branches[root_branch[r]];
            if b.birth + b.areas.len() == s {
                b.areas.push(root_area[r]);
            }
        }
    }

    let h = params.stability_window / 2;
    let mut out = Vec::new();
    for b in &branches {
        let a = &b.areas;
        if a.len() < 2 * h + 1 {
            continue;
        }
        let rho: Vec<f64> = (h..a.len() - h).map(|k| (a[k + h] - a[k - h]) / a[k]).collect();
        // the most stable admissible level of the branch
        let best = (0..rho.len())
            .filter(|&i| {
                let frac = a[i + h] / total;
                rho[i] < params.stability_tol
                    && frac >= params.min_area_frac
                    && frac <= params.max_area_frac
            })
            .min_by(|&x, &y| rho[x].total_cmp(&rho[y]));
        if let Some(i) = best {
            let k = i + h;
            let t = threshold(b.birth + k);
            out.push(Candidate {
                members: superlevel_component(mesh, values, b.peak, t),
                area: a[k],
            });
        }
    }
    out
}

fn superlevel_component(mesh: &Mesh, values: &[f64], seed: usize, t: f64) -> Vec<usize> {
    let mut seen = vec![false; values.len()];
    let mut stack = vec![seed];
    seen[seed] = true;
    let mut members = Vec::new();
    while let Some(v) = stack.pop() {
        members.push(v);
        for &w in mesh.neighbors(v) {
            if !seen[w] && values[w] >= t {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    members.sort_unstable();
    members
}

fn weighted_jaccard(a: &[usize], b: &[usize], areas: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut inter, mut union) = (0.0, 0.0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            union += areas[a[i]];
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            union += areas[b[j]];
            j += 1;
        } else {
            inter += areas[a[i]];
            union += areas[a[i]];
            i += 1;
            j += 1;
        }
    }
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Detects repeatable regions from the component trees of the first
/// nontrivial eigenfunctions, swept in both signs so detection does not
/// depend on eigenvector sign.
pub fn detect_stable_regions(
    mesh: &Mesh,
    basis: &SpectralBasis,
    params: &DetectorParams,
) -> Result<RegionSet> {
    if basis.num_vertices() != mesh.num_vertices() {
        return Err(Error::dims(mesh.num_vertices(), basis.num_vertices()));
    }
    if basis.size() < params.num_functions + 1 {
        return Err(Error::InvalidArgument(format!(
            "detector needs {} eigenfunctions, basis has {}",
            params.num_functions + 1,
            basis.size()
        )));
    }
    let sweeps: Vec<(usize, f64)> = (1..=params.num_functions)
        .flat_map(|k| [(k, 1.0), (k, -1.0)])
        .collect();
    let per_sweep: Vec<Vec<Candidate>> = sweeps
        .par_iter()
        .map(|&(k, sign)| {
            let values: Vec<f64> = basis.phi().column(k).iter().map(|v| sign * v).collect();
            stable_components(mesh, &values, params)
        })
        .collect();

    let mut candidates: Vec<Candidate> = per_sweep.into_iter().flatten().collect();
    // stable sort keeps sweep order among equal areas
    candidates.sort_by(|a, b| b.area.total_cmp(&a.area));
    let areas = mesh.vertex_areas();
    let mut kept: Vec<Candidate> = Vec::new();
    for c in candidates {
        if kept
            .iter()
            .all(|k| weighted_jaccard(&k.members, &c.members, areas) <= params.max_overlap)
        {
            kept.push(c);
        }
    }
    RegionSet::from_vertex_lists(mesh, kept.into_iter().map(|c| c.members).collect())
}
