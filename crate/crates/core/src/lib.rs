//! Dense point-to-point correspondence between near-isometric triangle meshes
//! from unordered sets of repeatable regions.
//!
//! Regions detected on both shapes are projected onto Laplace–Beltrami
//! eigenbases. An unknown region permutation `Π`, a sparse functional map `C`
//! and a row-sparse outlier matrix `O` are then found by alternating a
//! proximal-gradient pursuit with a linear assignment, and `C` is finally
//! turned into a vertex map by spectral ICP.

pub mod assignment;
pub mod config;
pub mod error;
pub mod eval;
pub mod geodesic;
pub mod io;
pub mod kdtree;
pub mod matcher;
pub mod mesh;
pub mod pipeline;
pub mod pursuit;
pub mod refine;
pub mod regions;
pub mod shapes;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
pub use mesh::Mesh;
