//! Software depth buffer, per-triangle visibility and projected areas.

use nalgebra::Vector3;

use super::camera::Camera;
use super::model::{PoseShapeParams, ShapeModel};
use crate::error::Result;

/// Relative slack when comparing a centroid depth against the depth buffer.
const DEPTH_SLACK: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleVisibility {
    pub visible: bool,
    /// Projected area in pixels².
    pub area: f64,
}

impl TriangleVisibility {
    pub const HIDDEN: TriangleVisibility = TriangleVisibility {
        visible: false,
        area: 0.0,
    };
}

/// Nearest surface per pixel: depth, owning triangle, and the
/// perspective-correct barycentric coordinates of the pixel centre.
#[derive(Clone, Debug)]
pub struct DepthRaster {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    owner: Vec<u32>,
    bary: Vec<[f64; 3]>,
}

pub const NO_OWNER: u32 = u32::MAX;

impl DepthRaster {
    /// Rasterizes every triangle with a z-test at pixel centres. Triangles
    /// with a vertex at non-positive depth are skipped.
    pub fn render(vertices: &[[f64; 3]], triangles: &[[u32; 3]], camera: &Camera) -> Self {
        let (w, h) = (camera.width(), camera.height());
        let mut out = Self {
            width: w,
            height: h,
            depth: vec![f64::INFINITY; w * h],
            owner: vec![NO_OWNER; w * h],
            bary: vec![[0.0; 3]; w * h],
        };
        for (id, tri) in triangles.iter().enumerate() {
            let p: Vec<(f64, f64, f64)> = tri
                .iter()
                .map(|&v| camera.project_with_depth(vertices[v as usize]))
                .collect();
            if p.iter().any(|q| !(q.2 > 0.0) || !q.0.is_finite() || !q.1.is_finite()) {
                continue;
            }
            let area2 = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
            if area2.abs() < 1e-12 {
                continue;
            }
            let min_x = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).ceil().max(0.0);
            let max_x = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).floor().min(w as f64 - 1.0);
            let min_y = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).ceil().max(0.0);
            let max_y = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).floor().min(h as f64 - 1.0);
            if min_x > max_x || min_y > max_y {
                continue;
            }
            for y in min_y as usize..=max_y as usize {
                for x in min_x as usize..=max_x as usize {
                    let (fx, fy) = (x as f64, y as f64);
                    let edge = |a: usize, b: usize| {
                        (p[b].0 - p[a].0) * (fy - p[a].1) - (p[b].1 - p[a].1) * (fx - p[a].0)
                    };
                    // Screen-space barycentrics.
                    let l0 = edge(1, 2) / area2;
                    let l1 = edge(2, 0) / area2;
                    let l2 = edge(0, 1) / area2;
                    if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                        continue;
                    }
                    let inv = [l0 / p[0].2, l1 / p[1].2, l2 / p[2].2];
                    let sum = inv[0] + inv[1] + inv[2];
                    let depth = 1.0 / sum;
                    let k = y * w + x;
                    if depth < out.depth[k] {
                        out.depth[k] = depth;
                        out.owner[k] = id as u32;
                        out.bary[k] = [inv[0] / sum, inv[1] / sum, inv[2] / sum];
                    }
                }
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    /// Owning triangle and barycentric coordinates, if the pixel is covered.
    pub fn sample(&self, x: usize, y: usize) -> Option<(usize, [f64; 3])> {
        let k = y * self.width + x;
        (self.owner[k] != NO_OWNER).then(|| (self.owner[k] as usize, self.bary[k]))
    }
}

/// Visibility of every triangle of an already deformed mesh in one camera.
pub fn visibility_all(vertices: &[[f64; 3]], triangles: &[[u32; 3]], camera: &Camera) -> Vec<TriangleVisibility> {
    let buffer = DepthRaster::render(vertices, triangles, camera);
    let center = Vector3::from(camera.center());
    triangles
        .iter()
        .enumerate()
        .map(|(id, tri)| classify(vertices, tri, id, camera, &center, &buffer))
        .collect()
}

/// Visibility of one triangle of the deformed model.
pub fn visibility(
    model: &ShapeModel,
    params: &PoseShapeParams,
    camera: &Camera,
    triangle: usize,
) -> Result<TriangleVisibility> {
    let vertices = model.deform(params)?;
    let tris = model.triangles();
    if triangle >= tris.len() {
        return Err(crate::Error::Invalid(format!("triangle {triangle} out of range")));
    }
    let buffer = DepthRaster::render(&vertices, tris, camera);
    let center = Vector3::from(camera.center());
    Ok(classify(&vertices, &tris[triangle], triangle, camera, &center, &buffer))
}

fn classify(
    vertices: &[[f64; 3]],
    tri: &[u32; 3],
    id: usize,
    camera: &Camera,
    center: &Vector3<f64>,
    buffer: &DepthRaster,
) -> TriangleVisibility {
    let v: Vec<Vector3<f64>> = tri.iter().map(|&i| Vector3::from(vertices[i as usize])).collect();
    let normal = (v[1] - v[0]).cross(&(v[2] - v[0]));
    if normal.norm() < 1e-14 {
        return TriangleVisibility::HIDDEN;
    }
    let mut px = [[0.0; 2]; 3];
    for k in 0..3 {
        match camera.project([v[k].x, v[k].y, v[k].z]) {
            Ok(p) => px[k] = p,
            Err(_) => return TriangleVisibility::HIDDEN,
        }
    }
    let area = projected_area(&px);
    let centroid = (v[0] + v[1] + v[2]) / 3.0;
    if normal.dot(&(center - centroid)) <= 0.0 || area == 0.0 {
        return TriangleVisibility::HIDDEN;
    }
    let (cx, cy, cw) = camera.project_with_depth([centroid.x, centroid.y, centroid.z]);
    let (xi, yi) = (cx.round(), cy.round());
    if xi < 0.0 || yi < 0.0 || xi >= buffer.width() as f64 || yi >= buffer.height() as f64 {
        return TriangleVisibility { visible: false, area };
    }
    let (xi, yi) = (xi as usize, yi as usize);
    let visible = match buffer.sample(xi, yi) {
        None => true,
        Some((owner, _)) if owner == id => true,
        Some(_) => cw <= buffer.depth(xi, yi) * (1.0 + DEPTH_SLACK),
    };
    TriangleVisibility { visible, area }
}

/// Unsigned area of a 2D triangle.
pub fn projected_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs()
}
