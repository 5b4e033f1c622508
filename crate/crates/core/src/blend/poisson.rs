//! Discrete 2D Poisson blending (5-point Laplacian, Dirichlet boundary).

use super::linalg::{solve_cg, SparseSystem};
use crate::error::{Error, Result};
use crate::image::{Mask, Raster};

/// Target gradients on the links between 4-neighbours. `gx[p]` is the target
/// for `f(x + 1, y) - f(x, y)` and `gy[p]` for `f(x, y + 1) - f(x, y)`.
/// A `None` entry removes the link from the Poisson stencil.
#[derive(Clone, Debug)]
pub struct GuidanceField {
    width: usize,
    height: usize,
    pub gx: Vec<Option<[f64; 3]>>,
    pub gy: Vec<Option<[f64; 3]>>,
}

impl GuidanceField {
    pub fn zero(width: usize, height: usize) -> Self {
        let mut field = Self {
            width,
            height,
            gx: vec![Some([0.0; 3]); width * height],
            gy: vec![Some([0.0; 3]); width * height],
        };
        field.drop_out_of_range();
        field
    }

    /// Forward differences of a raster.
    pub fn from_raster(raster: &Raster) -> Self {
        let (w, h) = (raster.width(), raster.height());
        let mut field = Self::zero(w, h);
        for y in 0..h {
            for x in 0..w {
                let p = raster.get(x, y);
                let diff = |q: [f32; 3]| [
                    q[0] as f64 - p[0] as f64,
                    q[1] as f64 - p[1] as f64,
                    q[2] as f64 - p[2] as f64,
                ];
                if x + 1 < w {
                    field.gx[y * w + x] = Some(diff(raster.get(x + 1, y)));
                }
                if y + 1 < h {
                    field.gy[y * w + x] = Some(diff(raster.get(x, y + 1)));
                }
            }
        }
        field
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn drop_out_of_range(&mut self) {
        for y in 0..self.height {
            self.gx[y * self.width + self.width - 1] = None;
        }
        for x in 0..self.width {
            self.gy[(self.height - 1) * self.width + x] = None;
        }
    }
}

const CG_TOLERANCE: f64 = 1e-11;

/// Solves, per channel, for the pixels inside `mask` whose linked
/// differences best match `guidance`; neighbours outside the mask act as
/// Dirichlet values read from `boundary`. Pixels outside the mask are copied
/// from `raster` unchanged.
pub fn poisson_blend_2d(raster: &Raster, mask: &Mask, guidance: &GuidanceField, boundary: &Raster) -> Result<Raster> {
    let (w, h) = (raster.width(), raster.height());
    let same = |a: usize, b: usize| a == w && b == h;
    if !same(mask.width(), mask.height())
        || !same(guidance.width(), guidance.height())
        || !same(boundary.width(), boundary.height())
    {
        return Err(Error::DimensionMismatch("raster, mask, guidance and boundary sizes differ".into()));
    }
    let mut index = vec![usize::MAX; w * h];
    let mut unknowns = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                index[y * w + x] = unknowns.len();
                unknowns.push((x, y));
            }
        }
    }
    if unknowns.is_empty() {
        return Err(Error::Invalid("Poisson region is empty".into()));
    }

    let n = unknowns.len();
    let mut matrix = SparseSystem::new(n);
    let mut rhs = vec![[0.0f64; 3]; n];
    for (row, &(x, y)) in unknowns.iter().enumerate() {
        let p = y * w + x;
        // (neighbour pixel, target for f_p - f_q)
        let mut links: Vec<(usize, [f64; 3])> = Vec::with_capacity(4);
        if x + 1 < w {
            if let Some(g) = guidance.gx[p] {
                links.push((p + 1, [-g[0], -g[1], -g[2]]));
            }
        }
        if x > 0 {
            if let Some(g) = guidance.gx[p - 1] {
                links.push((p - 1, g));
            }
        }
        if y + 1 < h {
            if let Some(g) = guidance.gy[p] {
                links.push((p + w, [-g[0], -g[1], -g[2]]));
            }
        }
        if y > 0 {
            if let Some(g) = guidance.gy[p - w] {
                links.push((p - w, g));
            }
        }
        matrix.add(row, row, links.len() as f64);
        for (q, v) in links {
            for ch in 0..3 {
                rhs[row][ch] += v[ch];
            }
            if index[q] != usize::MAX {
                matrix.add(row, index[q], -1.0);
            } else {
                let b = boundary.pixels()[q];
                for ch in 0..3 {
                    rhs[row][ch] += b[ch] as f64;
                }
            }
        }
    }

    let mut out = raster.clone();
    let max_iterations = 20 * n + 200;
    for ch in 0..3 {
        matrix.rhs = rhs.iter().map(|r| r[ch]).collect();
        let solution = solve_cg(&matrix, CG_TOLERANCE, max_iterations)?;
        for (&(x, y), v) in unknowns.iter().zip(solution) {
            let mut px = out.get(x, y);
            px[ch] = v as f32;
            out.set(x, y, px);
        }
    }
    Ok(out)
}
