//! Gradient-domain machinery shared by seam concealment, sequence blending
//! and compositing.

mod linalg;
mod mesh;
mod poisson;
mod sequence;

pub use linalg::{solve_cg, solve_tridiag, Csr, SparseSystem, TriDiagSystem};
pub use mesh::{laplacian_mesh_integrate, MeshAdjacency};
pub use poisson::{poisson_blend_2d, GuidanceField};
pub use sequence::{blend_sequence_1d, blend_windows, BlendWindow};
