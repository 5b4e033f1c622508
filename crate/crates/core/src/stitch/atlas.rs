//! Texture atlas assembly from per-triangle source cameras, and seam
//! concealment by gradient-domain blending in atlas space.

use rayon::prelude::*;

use super::{triangle_adjacency, StitchConfig};
use crate::blend::{poisson_blend_2d, GuidanceField};
use crate::error::{Error, Result};
use crate::face::{CameraView, ShapeModel};
use crate::image::{Mask, Raster};

/// Texel `(x, y)` covers uv `((x + 0.5) / w, (y + 0.5) / h)`.
#[derive(Clone, Debug)]
pub struct Atlas {
    pub raster: Raster,
    /// Triangle whose footprint contains each texel centre, if any.
    pub owner: Vec<Option<u32>>,
    /// Source camera of each texel's owner.
    pub label: Vec<Option<u16>>,
    /// Triangles skipped because their uv footprint is degenerate.
    pub skipped: Vec<usize>,
}

/// A uv-space edge between two triangles with different source cameras.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeamEdge {
    pub i: usize,
    pub j: usize,
    pub uv: [[f64; 2]; 2],
}

fn uv_to_texel(uv: [f64; 2], w: usize, h: usize) -> [f64; 2] {
    [uv[0] * w as f64 - 0.5, uv[1] * h as f64 - 0.5]
}

/// Barycentric coordinates of `p` in the 2D triangle `t`, or `None` when
/// degenerate.
fn barycentric(t: &[[f64; 2]; 3], p: [f64; 2]) -> Option<[f64; 3]> {
    let det = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
    if det.abs() < 1e-12 {
        return None;
    }
    let l1 = ((p[0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (p[1] - t[0][1])) / det;
    let l2 = ((t[1][0] - t[0][0]) * (p[1] - t[0][1]) - (p[0] - t[0][0]) * (t[1][1] - t[0][1])) / det;
    Some([1.0 - l1 - l2, l1, l2])
}

/// Samples each texel from its triangle's source camera at the projected
/// surface point. `vertices` is the deformed mesh for this frame and
/// `labels[t]` indexes `views`.
pub fn assemble_texture(
    model: &ShapeModel,
    vertices: &[[f64; 3]],
    labels: &[usize],
    views: &[CameraView],
    config: &StitchConfig,
) -> Result<(Atlas, Vec<SeamEdge>)> {
    let tris = model.triangles();
    if labels.len() != tris.len() || vertices.len() != model.num_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels and {} vertices for a mesh with {} triangles and {} vertices",
            labels.len(),
            vertices.len(),
            tris.len(),
            model.num_vertices()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= views.len()) {
        return Err(Error::Invalid(format!("label {bad} refers to a missing camera")));
    }
    let (w, h) = (config.atlas_width, config.atlas_height);
    let uv = model.uv();
    let mut owner: Vec<Option<u32>> = vec![None; w * h];
    let mut skipped = Vec::new();
    for (t, tri) in tris.iter().enumerate() {
        let corners = tri.map(|v| uv_to_texel(uv[v as usize], w, h));
        if barycentric(&corners, corners[0]).is_none() {
            log::warn!("triangle {t} has a degenerate uv footprint; skipped");
            skipped.push(t);
            continue;
        }
        let lo_x = corners.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min).ceil().max(0.0) as usize;
        let hi_x = corners.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max).floor();
        let lo_y = corners.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min).ceil().max(0.0) as usize;
        let hi_y = corners.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max).floor();
        if hi_x < 0.0 || hi_y < 0.0 {
            continue;
        }
        let hi_x = (hi_x as usize).min(w - 1);
        let hi_y = (hi_y as usize).min(h - 1);
        for y in lo_y..=hi_y {
            for x in lo_x..=hi_x {
                let k = y * w + x;
                if owner[k].is_some() {
                    continue;
                }
                let b = barycentric(&corners, [x as f64, y as f64]).unwrap();
                if b.iter().all(|&c| c >= -1e-12) {
                    owner[k] = Some(t as u32);
                }
            }
        }
    }

    let mut pixels = vec![[0.0f32; 3]; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let Some(t) = owner[y * w + x] else {
                continue;
            };
            let tri = tris[t as usize];
            let corners = tri.map(|v| uv_to_texel(uv[v as usize], w, h));
            let b = barycentric(&corners, [x as f64, y as f64]).unwrap();
            let mut p = [0.0; 3];
            for k in 0..3 {
                for a in 0..3 {
                    p[a] += b[k] * vertices[tri[k] as usize][a];
                }
            }
            let view = &views[labels[t as usize]];
            if let Ok(q) = view.camera.project(p) {
                let c = view.image.bilinear(q[0], q[1]);
                *px = [c[0] as f32, c[1] as f32, c[2] as f32];
            }
        }
    });
    let mut raster = Raster::new(w, h);
    raster.pixels_mut().copy_from_slice(&pixels);

    let seams = triangle_adjacency(tris)
        .into_iter()
        .filter(|a| labels[a.i] != labels[a.j])
        .map(|a| SeamEdge {
            i: a.i,
            j: a.j,
            uv: [uv[a.edge[0] as usize], uv[a.edge[1] as usize]],
        })
        .collect();
    let label = owner.iter().map(|o| o.map(|t| labels[t as usize] as u16)).collect();
    Ok((
        Atlas {
            raster,
            owner,
            label,
            skipped,
        },
        seams,
    ))
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((a[0] + t * dx - p[0]).powi(2) + (a[1] + t * dy - p[1]).powi(2)).sqrt()
}

/// Texels within `radius` of any seam segment (clipped to the atlas).
pub fn seam_band(width: usize, height: usize, seams: &[SeamEdge], radius: usize) -> Mask {
    let mut band = Mask::new(width, height);
    let r = radius as f64;
    for s in seams {
        let a = uv_to_texel(s.uv[0], width, height);
        let b = uv_to_texel(s.uv[1], width, height);
        let lo_x = (a[0].min(b[0]) - r).floor().max(0.0) as usize;
        let lo_y = (a[1].min(b[1]) - r).floor().max(0.0) as usize;
        let hi_x = (a[0].max(b[0]) + r).ceil().min(width as f64 - 1.0);
        let hi_y = (a[1].max(b[1]) + r).ceil().min(height as f64 - 1.0);
        if hi_x < 0.0 || hi_y < 0.0 {
            continue;
        }
        for y in lo_y..=hi_y as usize {
            for x in lo_x..=hi_x as usize {
                if point_segment_distance([x as f64, y as f64], a, b) <= r {
                    band.set(x, y, true);
                }
            }
        }
    }
    band
}

/// Poisson blend inside a band around every seam. Links between texels of
/// the same source camera keep the atlas gradient; links crossing a seam
/// take the mean of the same-side gradients on either side of it. Uncovered
/// texels are excluded, and texels outside the bands are returned unchanged.
pub fn conceal_seams(atlas: &Atlas, seams: &[SeamEdge], config: &StitchConfig) -> Result<Raster> {
    if config.band_radius == 0 {
        return Err(Error::Invalid("seam band radius must be at least 1".into()));
    }
    let raster = &atlas.raster;
    let (w, h) = (raster.width(), raster.height());
    if seams.is_empty() {
        return Ok(raster.clone());
    }
    let label = |x: usize, y: usize| atlas.label[y * w + x];
    let diff = |p: (usize, usize), q: (usize, usize)| -> [f64; 3] {
        let (a, b) = (raster.get(p.0, p.1), raster.get(q.0, q.1));
        [(b[0] - a[0]) as f64, (b[1] - a[1]) as f64, (b[2] - a[2]) as f64]
    };
    // Target for f(q) - f(p), q = p + step.
    let link = |p: (usize, usize), q: (usize, usize), step: (isize, isize)| -> Option<[f64; 3]> {
        let (lp, lq) = (label(p.0, p.1)?, label(q.0, q.1)?);
        if lp == lq {
            return Some(diff(p, q));
        }
        let back = (p.0 as isize - step.0, p.1 as isize - step.1);
        let fwd = (q.0 as isize + step.0, q.1 as isize + step.1);
        let inside = |c: (isize, isize)| c.0 >= 0 && c.1 >= 0 && (c.0 as usize) < w && (c.1 as usize) < h;
        let mut sides = Vec::with_capacity(2);
        if inside(back) {
            let b = (back.0 as usize, back.1 as usize);
            if label(b.0, b.1) == Some(lp) {
                sides.push(diff(b, p));
            }
        }
        if inside(fwd) {
            let f = (fwd.0 as usize, fwd.1 as usize);
            if label(f.0, f.1) == Some(lq) {
                sides.push(diff(q, f));
            }
        }
        let mut g = [0.0; 3];
        for s in &sides {
            for ch in 0..3 {
                g[ch] += s[ch] / sides.len() as f64;
            }
        }
        Some(g)
    };
    let mut guidance = GuidanceField::zero(w, h);
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            guidance.gx[k] = (x + 1 < w).then(|| link((x, y), (x + 1, y), (1, 0))).flatten();
            guidance.gy[k] = (y + 1 < h).then(|| link((x, y), (x, y + 1), (0, 1))).flatten();
        }
    }
    let band = seam_band(w, h, seams, config.band_radius);
    let mask = Mask::from_fn(w, h, |x, y| {
        let k = y * w + x;
        band.get(x, y)
            && label(x, y).is_some()
            && (guidance.gx[k].is_some()
                || guidance.gy[k].is_some()
                || (x > 0 && guidance.gx[k - 1].is_some())
                || (y > 0 && guidance.gy[k - w].is_some()))
    });
    if mask.count() == 0 {
        return Ok(raster.clone());
    }
    poisson_blend_2d(raster, &mask, &guidance, raster)
}
