use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Raster;

/// Pinhole camera: `3 x 4` projection (intrinsics times extrinsics) and the
/// raster size it maps onto.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    projection: Matrix3x4<f64>,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraJson {
    #[serde(rename = "P")]
    p: Vec<f64>,
    width: usize,
    height: usize,
}

impl Camera {
    pub fn new(projection: Matrix3x4<f64>, width: usize, height: usize) -> Result<Self> {
        if projection.rank(1e-12) < 3 {
            return Err(Error::Invalid("camera projection is rank deficient".into()));
        }
        Ok(Self {
            projection,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, image y axis pointing along `-up`.
    pub fn look_at(
        focal: f64,
        width: usize,
        height: usize,
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
    ) -> Result<Self> {
        let eye = Vector3::from(eye);
        let forward = (Vector3::from(target) - eye).normalize();
        let right = forward.cross(&Vector3::from(up)).normalize();
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let trans = -(rot * eye);
        let k = Matrix3::new(
            focal,
            0.0,
            (width as f64 - 1.0) / 2.0,
            0.0,
            focal,
            (height as f64 - 1.0) / 2.0,
            0.0,
            0.0,
            1.0,
        );
        let mut extrinsic = Matrix3x4::zeros();
        extrinsic.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        extrinsic.set_column(3, &trans);
        Camera::new(k * extrinsic, width, height)
    }

    pub fn projection(&self) -> &Matrix3x4<f64> {
        &self.projection
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Homogeneous projection: `(x / w, y / w, w)`.
    #[inline]
    pub fn project_with_depth(&self, p: [f64; 3]) -> (f64, f64, f64) {
        let h = self.projection * Vector4::new(p[0], p[1], p[2], 1.0);
        (h.x / h.z, h.y / h.z, h.z)
    }

    /// Pixel position of a 3D point; errors when the point is not in front of
    /// the camera.
    pub fn project(&self, p: [f64; 3]) -> Result<[f64; 2]> {
        let (x, y, w) = self.project_with_depth(p);
        if !(w > 0.0) {
            return Err(Error::BehindCamera { depth: w });
        }
        Ok([x, y])
    }

    /// Optical centre: the right null vector of the projection.
    pub fn center(&self) -> [f64; 3] {
        let m = self.projection.fixed_view::<3, 3>(0, 0).into_owned();
        let c = -(m.try_inverse().expect("full-rank projection") * self.projection.column(3));
        [c.x, c.y, c.z]
    }

    pub fn to_json(&self) -> String {
        let p = (0..3)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| self.projection[(r, c)])
            .collect();
        serde_json::to_string_pretty(&CameraJson {
            p,
            width: self.width,
            height: self.height,
        })
        .expect("camera serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let raw: CameraJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if raw.p.len() != 12 {
            return Err(format!("\"P\" must have 12 entries, got {}", raw.p.len()));
        }
        Camera::new(Matrix3x4::from_row_slice(&raw.p), raw.width, raw.height).map_err(|e| e.to_string())
    }
}

/// A detected landmark: the pixel position observed for a model vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub vertex: usize,
    pub x: f64,
    pub y: f64,
}

/// One camera's observation of one frame.
#[derive(Clone, Debug)]
pub struct CameraView {
    pub camera: Camera,
    pub image: Raster,
    pub landmarks: Vec<Landmark>,
}
