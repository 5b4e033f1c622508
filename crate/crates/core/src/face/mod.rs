//! Linear face model, pinhole cameras and per-triangle visibility.

mod camera;
pub mod io;
pub(crate) mod model;
mod visibility;

pub use camera::{Camera, CameraView, Landmark};
pub use model::{PoseShapeParams, ShapeModel, SHAPE_BASIS_SIZE};
pub use visibility::{projected_area, visibility, visibility_all, DepthRaster, TriangleVisibility};
