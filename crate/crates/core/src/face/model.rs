use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Basis size of the face model the pipeline is designed around.
pub const SHAPE_BASIS_SIZE: usize = 15;

/// Linear shape model: `x = mean + basis * b` per vertex, followed by a rigid
/// transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeModel {
    mean: Vec<f64>,
    /// Column-major `3n x k`.
    basis: Vec<f64>,
    num_basis: usize,
    triangles: Vec<[u32; 3]>,
    uv: Vec<[f64; 2]>,
}

impl ShapeModel {
    pub fn new(
        mean: Vec<f64>,
        basis: Vec<f64>,
        num_basis: usize,
        triangles: Vec<[u32; 3]>,
        uv: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if mean.len() % 3 != 0 {
            return Err(Error::DimensionMismatch("mean shape length is not a multiple of 3".into()));
        }
        let n = mean.len() / 3;
        if basis.len() != mean.len() * num_basis {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} values, expected {} x {num_basis}",
                basis.len(),
                mean.len()
            )));
        }
        if uv.len() != n {
            return Err(Error::DimensionMismatch(format!("{} uv pairs for {n} vertices", uv.len())));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::Invalid(format!("triangle {t:?} references a vertex >= {n}")));
        }
        if let Some(p) = uv.iter().find(|p| !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1])) {
            return Err(Error::Invalid(format!("uv coordinate {p:?} outside [0, 1]^2")));
        }
        if num_basis != SHAPE_BASIS_SIZE {
            log::warn!("shape model has {num_basis} basis columns, expected {SHAPE_BASIS_SIZE}");
        }
        Ok(Self {
            mean,
            basis,
            num_basis,
            triangles,
            uv,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.mean.len() / 3
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn basis_column(&self, k: usize) -> &[f64] {
        let rows = self.mean.len();
        &self.basis[k * rows..(k + 1) * rows]
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn uv(&self) -> &[[f64; 2]] {
        &self.uv
    }

    /// Non-rigid shape `mean + basis * b`, one position per vertex.
    pub fn shape(&self, b: &[f64]) -> Result<Vec<[f64; 3]>> {
        if b.len() != self.num_basis {
            return Err(Error::DimensionMismatch(format!(
                "{} shape weights for a {}-column basis",
                b.len(),
                self.num_basis
            )));
        }
        let rows = self.mean.len();
        let mut flat = self.mean.clone();
        for (k, &w) in b.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let col = &self.basis[k * rows..(k + 1) * rows];
            for (x, c) in flat.iter_mut().zip(col) {
                *x += w * c;
            }
        }
        Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    /// Rigidly transformed deformed mesh.
    pub fn deform(&self, params: &PoseShapeParams) -> Result<Vec<[f64; 3]>> {
        let rot = params.rotation();
        let t = params.translation();
        Ok(self
            .shape(&params.b)?
            .into_iter()
            .map(|p| {
                let q = rot * Vector3::from(p) + t;
                [q.x, q.y, q.z]
            })
            .collect())
    }
}

/// Rigid pose `t = [tx, ty, tz, rx, ry, rz]` (Euler angles in radians) and
/// shape weights `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseShapeParams {
    pub t: [f64; 6],
    pub b: Vec<f64>,
}

impl PoseShapeParams {
    pub fn zero(num_basis: usize) -> Self {
        Self {
            t: [0.0; 6],
            b: vec![0.0; num_basis],
        }
    }

    /// `Rz * Ry * Rx`.
    pub fn rotation(&self) -> Matrix3<f64> {
        Rotation3::from_euler_angles(self.t[3], self.t[4], self.t[5]).into_inner()
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.t[0], self.t[1], self.t[2])
    }

    pub fn len(&self) -> usize {
        6 + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.t.iter().chain(&self.b).copied().collect()
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut t = [0.0; 6];
        t.copy_from_slice(&values[..6]);
        Self {
            t,
            b: values[6..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.iter().chain(&self.b).all(|v| v.is_finite())
    }
}
