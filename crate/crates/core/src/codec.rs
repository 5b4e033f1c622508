//! Mouth-region latent codec: ROI extraction and a PCA reference model
//! behind a swappable encode/decode interface.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face::{ShapeModel, SHAPE_BASIS_SIZE};
use crate::formats::{self, Reader, Writer};
use crate::image::Raster;

const VSCM_VERSION: u32 = 1;

/// Texture-space rectangle in texels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MouthRoi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl MouthRoi {
    /// Mouth region size used for full-resolution capture.
    pub const CAPTURE: MouthRoi = MouthRoi {
        x: 0,
        y: 0,
        width: 480,
        height: 370,
    };

    fn check(&self, atlas_width: usize, atlas_height: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::RoiOutOfBounds(format!("{self:?} has zero area")));
        }
        if self.x + self.width > atlas_width || self.y + self.height > atlas_height {
            return Err(Error::RoiOutOfBounds(format!(
                "{self:?} exceeds the {atlas_width} x {atlas_height} atlas"
            )));
        }
        Ok(())
    }

    /// Vertices whose uv falls inside the rectangle (edges inclusive).
    pub fn vertices(&self, model: &ShapeModel, atlas_width: usize, atlas_height: usize) -> Result<Vec<usize>> {
        self.check(atlas_width, atlas_height)?;
        let (x0, x1) = (self.x as f64, (self.x + self.width) as f64);
        let (y0, y1) = (self.y as f64, (self.y + self.height) as f64);
        Ok(model
            .uv()
            .iter()
            .enumerate()
            .filter(|(_, uv)| {
                let (tx, ty) = (uv[0] * atlas_width as f64, uv[1] * atlas_height as f64);
                tx >= x0 && tx <= x1 && ty >= y0 && ty <= y1
            })
            .map(|(v, _)| v)
            .collect())
    }
}

/// Codec input: ROI texture and shape weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MouthFrame {
    pub texture: Raster,
    pub b: Vec<f64>,
}

/// Crops the ROI from an atlas and lists the vertices inside it.
pub fn extract_roi(atlas: &Raster, model: &ShapeModel, roi: &MouthRoi) -> Result<(Raster, Vec<usize>)> {
    let vertices = roi.vertices(model, atlas.width(), atlas.height())?;
    Ok((atlas.crop(roi.x, roi.y, roi.width, roi.height), vertices))
}

/// Encode/decode interface the synthesizer works against.
pub trait LatentCodec {
    fn latent_dim(&self) -> usize;
    fn encode(&self, frame: &MouthFrame) -> Result<Vec<f64>>;
    fn decode(&self, z: &[f64]) -> Result<MouthFrame>;
}

/// Bytes per frame before and after encoding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StorageReport {
    pub raw_bytes_per_frame: u64,
    pub latent_bytes_per_frame: u64,
    pub ratio: f64,
    pub frames: u64,
    pub raw_bytes_total: u64,
    pub latent_bytes_total: u64,
}

impl StorageReport {
    /// 8-bit RGB ROI plus 15 f32 shape weights, against `d` f32 latents.
    pub fn new(roi_width: usize, roi_height: usize, d: usize, frames: u64) -> Self {
        let raw = (roi_width * roi_height * 3 + SHAPE_BASIS_SIZE * 4) as u64;
        let latent = 4 * d as u64;
        Self {
            raw_bytes_per_frame: raw,
            latent_bytes_per_frame: latent,
            ratio: raw as f64 / latent as f64,
            frames,
            raw_bytes_total: raw * frames,
            latent_bytes_total: latent * frames,
        }
    }
}

/// PCA codec over standardized `[texture ; b]` vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecModel {
    roi: MouthRoi,
    alpha: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `input_dim x d`, orthonormal columns.
    basis: DMatrix<f64>,
    /// Variance captured by each component (training only; not stored).
    explained: Vec<f64>,
}

/// Default geometry weighting: `sqrt(texture_dim / geometry_dim)`.
pub fn default_alpha(texture_dim: usize, geometry_dim: usize) -> f64 {
    (texture_dim as f64 / geometry_dim.max(1) as f64).sqrt()
}

impl CodecModel {
    /// Fits a `d`-component PCA with the Gram-matrix method. `alpha` scales
    /// the standardized geometry block; `None` uses [`default_alpha`].
    pub fn fit(frames: &[MouthFrame], roi: MouthRoi, d: usize, alpha: Option<f64>) -> Result<Self> {
        let n = frames.len();
        if n < 2 {
            return Err(Error::Invalid(format!("codec fit needs at least 2 frames, got {n}")));
        }
        if d == 0 || d > n {
            return Err(Error::Invalid(format!("latent size {d} must be in 1..={n} (the frame count)")));
        }
        let tex_dim = roi.width * roi.height * 3;
        let geo_dim = frames[0].b.len();
        for (i, f) in frames.iter().enumerate() {
            if f.texture.width() != roi.width || f.texture.height() != roi.height || f.b.len() != geo_dim {
                return Err(Error::DimensionMismatch(format!("frame {i} does not match the ROI / weight count")));
            }
        }
        let alpha = alpha.unwrap_or_else(|| default_alpha(tex_dim, geo_dim));
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Invalid(format!("geometry weighting {alpha} must be positive")));
        }
        let dim = tex_dim + geo_dim;
        let raw: Vec<Vec<f64>> = frames.iter().map(flatten).collect();
        let mut mean = vec![0.0; dim];
        for x in &raw {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n as f64;
            }
        }
        let mut scale = vec![0.0; dim];
        for x in &raw {
            for k in 0..dim {
                scale[k] += (x[k] - mean[k]).powi(2) / n as f64;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut model = Self {
            roi,
            alpha,
            mean,
            scale,
            basis: DMatrix::zeros(dim, d),
            explained: vec![0.0; d],
        };
        // Samples as columns of a dim x n matrix.
        let mut s = DMatrix::zeros(dim, n);
        for (i, x) in raw.iter().enumerate() {
            s.set_column(i, &DVector::from_vec(model.whiten(x)));
        }
        let gram = s.transpose() * &s;
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]];
        if !(top > 1e-12 * dim as f64) {
            return Err(Error::ZeroVariance);
        }
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(d);
        for &k in &order {
            if cols.len() == d {
                break;
            }
            let lambda = eig.eigenvalues[k];
            if lambda <= 1e-10 * top {
                break;
            }
            let v = &s * eig.eigenvectors.column(k) / lambda.sqrt();
            model.explained[cols.len()] = lambda / n as f64;
            cols.push(v);
        }
        // Zero-variance components: complete with coordinate directions.
        let mut e = 0;
        while cols.len() < d && e < dim {
            let mut v = DVector::zeros(dim);
            v[e] = 1.0;
            e += 1;
            for c in &cols {
                let p = c.dot(&v);
                v.axpy(-p, c, 1.0);
            }
            if v.norm() > 1e-6 {
                cols.push(v);
            }
        }
        orthonormalize(&mut cols);
        for (k, c) in cols.iter().enumerate() {
            model.basis.set_column(k, c);
        }
        Ok(model)
    }

    pub fn roi(&self) -> MouthRoi {
        self.roi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn texture_dim(&self) -> usize {
        self.roi.width * self.roi.height * 3
    }

    pub fn geometry_dim(&self) -> usize {
        self.input_dim() - self.texture_dim()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Per-component training variance, non-increasing.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained
    }

    pub fn storage_report(&self, frames: u64) -> StorageReport {
        StorageReport::new(self.roi.width, self.roi.height, self.latent_dim(), frames)
    }

    fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let tex = self.texture_dim();
        x.iter()
            .enumerate()
            .map(|(k, v)| {
                let w = (v - self.mean[k]) / self.scale[k];
                if k >= tex {
                    self.alpha * w
                } else {
                    w
                }
            })
            .collect()
    }

    fn unwhiten(&self, w: &DVector<f64>) -> Vec<f64> {
        let tex = self.texture_dim();
        w.iter()
            .enumerate()
            .map(|(k, v)| {
                let v = if k >= tex { v / self.alpha } else { *v };
                v * self.scale[k] + self.mean[k]
            })
            .collect()
    }

    fn check_frame(&self, frame: &MouthFrame) -> Result<()> {
        if frame.texture.width() != self.roi.width
            || frame.texture.height() != self.roi.height
            || frame.b.len() != self.geometry_dim()
        {
            return Err(Error::DimensionMismatch(format!(
                "frame is {}x{} with {} weights; codec expects {}x{} with {}",
                frame.texture.width(),
                frame.texture.height(),
                frame.b.len(),
                self.roi.width,
                self.roi.height,
                self.geometry_dim()
            )));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&formats::read_file(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        formats::write_file(path, &self.to_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"VSCM", VSCM_VERSION);
        w.u32(self.input_dim() as u32);
        w.u32(self.latent_dim() as u32);
        w.f32(self.alpha as f32);
        w.f32_array(&self.mean);
        w.f32_array(&self.scale);
        w.f32_array(self.basis.as_slice());
        for v in [self.roi.x, self.roi.y, self.roi.width, self.roi.height] {
            w.u32(v as u32);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "VSCM");
        r.magic(b"VSCM")?;
        r.version(VSCM_VERSION)?;
        let dim = r.u32("input dimension")? as usize;
        let d = r.u32("latent dimension")? as usize;
        let alpha_at = r.offset();
        let alpha = r.f32("alpha")? as f64;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::format("VSCM: alpha must be positive", alpha_at as u64));
        }
        let mean = r.f32_array(dim, "means")?;
        let scale = r.f32_array(dim, "scales")?;
        let basis = r.f32_array(dim * d, "basis")?;
        let roi_at = r.offset();
        let mut roi = [0usize; 4];
        for v in roi.iter_mut() {
            *v = r.u32("ROI")? as usize;
        }
        r.finish()?;
        let roi = MouthRoi {
            x: roi[0],
            y: roi[1],
            width: roi[2],
            height: roi[3],
        };
        if roi.width * roi.height * 3 > dim {
            return Err(Error::format("VSCM: ROI larger than the input dimension", roi_at as u64));
        }
        Ok(Self {
            roi,
            alpha,
            mean,
            scale,
            basis: DMatrix::from_vec(dim, d, basis),
            explained: vec![0.0; d],
        })
    }
}

fn flatten(frame: &MouthFrame) -> Vec<f64> {
    frame
        .texture
        .pixels()
        .iter()
        .flat_map(|p| p.iter().map(|&c| c as f64))
        .chain(frame.b.iter().copied())
        .collect()
}

fn orthonormalize(cols: &mut [DVector<f64>]) {
    for k in 0..cols.len() {
        for _ in 0..2 {
            for j in 0..k {
                let p = cols[j].dot(&cols[k]);
                let prev = cols[j].clone();
                cols[k].axpy(-p, &prev, 1.0);
            }
        }
        let norm = cols[k].norm();
        cols[k] /= norm;
    }
}

impl LatentCodec for CodecModel {
    fn latent_dim(&self) -> usize {
        self.basis.ncols()
    }

    fn encode(&self, frame: &MouthFrame) -> Result<Vec<f64>> {
        self.check_frame(frame)?;
        let w = DVector::from_vec(self.whiten(&flatten(frame)));
        Ok((self.basis.transpose() * w).iter().copied().collect())
    }

    fn decode(&self, z: &[f64]) -> Result<MouthFrame> {
        if z.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch(format!(
                "latent of length {} for a {}-dimensional codec",
                z.len(),
                self.latent_dim()
            )));
        }
        let x = self.unwhiten(&(&self.basis * DVector::from_column_slice(z)));
        let tex = self.texture_dim();
        let mut texture = Raster::new(self.roi.width, self.roi.height);
        for (px, c) in texture.pixels_mut().iter_mut().zip(x[..tex].chunks_exact(3)) {
            *px = [c[0].clamp(0.0, 1.0) as f32, c[1].clamp(0.0, 1.0) as f32, c[2].clamp(0.0, 1.0) as f32];
        }
        Ok(MouthFrame {
            texture,
            b: x[tex..].to_vec(),
        })
    }
}

impl CodecModel {
    /// Root-mean-square reconstruction error of `frames`, measured in the
    /// standardized, geometry-weighted coordinates the model is fitted in
    /// (before output clamping).
    pub fn reconstruction_rmse(&self, frames: &[MouthFrame]) -> Result<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for f in frames {
            self.check_frame(f)?;
            let w = DVector::from_vec(self.whiten(&flatten(f)));
            let z = self.basis.transpose() * &w;
            sum += (&w - &self.basis * z).norm_squared();
            count += w.len();
        }
        Ok((sum / count.max(1) as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ROI: MouthRoi = MouthRoi { x: 0, y: 0, width: 6, height: 4 };

    fn random_frame(rng: &mut ChaCha8Rng) -> MouthFrame {
        MouthFrame {
            texture: Raster::from_fn(6, 4, |_, _| [rng.gen(), rng.gen(), rng.gen()]),
            b: (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    /// Frames from a low-rank model plus small noise.
    fn structured_frames(rng: &mut ChaCha8Rng, n: usize) -> Vec<MouthFrame> {
        let modes: Vec<Vec<f64>> = (0..5).map(|_| (0..72 + 15).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        (0..n)
            .map(|_| {
                let c: Vec<f64> = (0..5).map(|k| rng.gen_range(-1.0..1.0) / (k + 1) as f64).collect();
                let x: Vec<f64> = (0..87)
                    .map(|i| 0.5 + 0.1 * (0..5).map(|k| c[k] * modes[k][i]).sum::<f64>() + rng.gen_range(-0.01..0.01))
                    .collect();
                MouthFrame {
                    texture: Raster::from_fn(6, 4, |px, py| {
                        let k = 3 * (py * 6 + px);
                        [x[k] as f32, x[k + 1] as f32, x[k + 2] as f32]
                    }),
                    b: x[72..].to_vec(),
                }
            })
            .collect()
    }

    fn max_diff(a: &MouthFrame, b: &MouthFrame) -> f64 {
        flatten(a).iter().zip(flatten(b)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn storage_report_matches_capture_figures() {
        let r = StorageReport::new(480, 370, 1024, 11 * 3600 * 25);
        assert_eq!(r.raw_bytes_per_frame, 532_860);
        assert_eq!(r.latent_bytes_per_frame, 4096);
        assert!(r.ratio >= 100.0);
        // 4 kB/frame read as 4000 B gives 3.96e9 B; the exact 4096 B/frame
        // total is 3.78 GiB. Both fit in 4 GB of memory.
        assert_eq!(r.frames * 4000, 3_960_000_000);
        assert_eq!(r.latent_bytes_total, 4_055_040_000);
        assert!(r.latent_bytes_total <= 4 << 30);
    }

    #[test]
    fn oversized_latent_reports_ratio_below_one() {
        let r = StorageReport::new(4, 4, 4 * 4 * 3 + 15, 1);
        assert!(r.ratio < 1.0);
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<MouthFrame> = (0..10).map(|_| random_frame(&mut rng)).collect();
        let model = CodecModel::fit(&frames, ROI, 10, None).unwrap();
        for f in &frames {
            let back = model.decode(&model.encode(f).unwrap()).unwrap();
            assert!(max_diff(f, &back) < 1e-5);
        }
        let gram = model.basis().transpose() * model.basis();
        assert!((gram - DMatrix::identity(10, 10)).amax() < 1e-6);
        let ev = model.explained_variance();
        assert!(ev.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn subspace_matches_dense_covariance_eigenvectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frames = structured_frames(&mut rng, 12);
        let d = 4;
        let model = CodecModel::fit(&frames, ROI, d, None).unwrap();
        // Oracle: eigenvectors of the dim x dim covariance of whitened data.
        let dim = model.input_dim();
        let mut cov = DMatrix::zeros(dim, dim);
        for f in &frames {
            let w = DVector::from_vec(model.whiten(&flatten(f)));
            cov += &w * w.transpose();
        }
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let oracle = DMatrix::from_columns(&order[..d].iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect::<Vec<_>>());
        let p1 = model.basis() * model.basis().transpose();
        let p2 = &oracle * oracle.transpose();
        assert!((p1 - p2).amax() < 1e-6);
        for k in 0..d {
            assert!((model.explained_variance()[k] - eig.eigenvalues[order[k]] / 12.0).abs() < 1e-8);
        }
    }

    #[test]
    fn two_frames_span_their_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames = vec![random_frame(&mut rng), random_frame(&mut rng)];
        let model = CodecModel::fit(&frames, ROI, 1, None).unwrap();
        let diff = DVector::from_vec(model.whiten(&flatten(&frames[0])))
            - DVector::from_vec(model.whiten(&flatten(&frames[1])));
        let cos = model.basis().column(0).dot(&diff).abs() / diff.norm();
        assert!((cos - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_frames_have_zero_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_frame(&mut rng);
        assert!(matches!(CodecModel::fit(&[f.clone(), f], ROI, 1, None), Err(Error::ZeroVariance)));
    }

    #[test]
    fn latent_larger_than_sample_count_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frames: Vec<MouthFrame> = (0..3).map(|_| random_frame(&mut rng)).collect();
        assert!(CodecModel::fit(&frames, ROI, 4, None).is_err());
    }

    #[test]
    fn mean_frame_encodes_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frames = structured_frames(&mut rng, 8);
        let model = CodecModel::fit(&frames, ROI, 5, None).unwrap();
        let mean = &model.mean;
        let frame = MouthFrame {
            texture: Raster::from_fn(6, 4, |x, y| {
                let k = 3 * (y * 6 + x);
                [mean[k] as f32, mean[k + 1] as f32, mean[k + 2] as f32]
            }),
            b: mean[72..].to_vec(),
        };
        assert!(model.encode(&frame).unwrap().iter().all(|z| z.abs() < 1e-5));
    }

    #[test]
    fn decode_is_affine_in_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frames = structured_frames(&mut rng, 8);
        let model = CodecModel::fit(&frames, ROI, 4, None).unwrap();
        let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let z2: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        let m = flatten(&model.decode(&[0.0; 4]).unwrap());
        let a = flatten(&model.decode(&z).unwrap());
        let b = flatten(&model.decode(&z2).unwrap());
        // Texture entries saturate at the clamp; check unclamped ones.
        for k in 0..m.len() {
            if b[k] > 0.0 && b[k] < 1.0 && a[k] > 0.0 && a[k] < 1.0 {
                assert!((b[k] - m[k] - 2.0 * (a[k] - m[k])).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let frames = structured_frames(&mut rng, 10);
        let model = CodecModel::fit(&frames, ROI, 3, None).unwrap();
        let held_out = structured_frames(&mut rng, 1).pop().unwrap();
        let z = model.encode(&held_out).unwrap();
        let z2 = model.encode(&model.decode(&z).unwrap()).unwrap();
        for (a, b) in z.iter().zip(&z2) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn held_out_error_non_increasing_in_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let train = structured_frames(&mut rng, 16);
        let test = structured_frames(&mut rng, 6);
        let mut last = f64::INFINITY;
        for d in [1, 2, 4, 8, 16] {
            let model = CodecModel::fit(&train, ROI, d, None).unwrap();
            let e = model.reconstruction_rmse(&test).unwrap();
            assert!(e <= last + 1e-9, "d {d}: {e} > {last}");
            last = e;
        }
    }

    #[test]
    fn interpolation_between_constant_frames_is_monotone() {
        let frames: Vec<MouthFrame> = [0.2f32, 0.7]
            .iter()
            .map(|&c| MouthFrame { texture: Raster::filled(6, 4, [c; 3]), b: vec![c as f64; 15] })
            .collect();
        let model = CodecModel::fit(&frames, ROI, 1, None).unwrap();
        let z0 = model.encode(&frames[0]).unwrap();
        let z1 = model.encode(&frames[1]).unwrap();
        let mut prev = None;
        for s in 0..=10 {
            let s = s as f64 / 10.0;
            let z: Vec<f64> = z0.iter().zip(&z1).map(|(a, b)| (1.0 - s) * a + s * b).collect();
            let v = model.decode(&z).unwrap().texture.get(2, 2)[0];
            if let Some(p) = prev {
                assert!(v >= p - 1e-6);
            }
            prev = Some(v);
        }
    }

    #[test]
    fn vscm_round_trip_is_byte_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let frames = structured_frames(&mut rng, 6);
        let model = CodecModel::fit(&frames, ROI, 3, Some(2.0)).unwrap();
        let bytes = model.to_bytes();
        let back = CodecModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.roi(), ROI);
        assert!(CodecModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn roi_vertex_sets() {
        let model = crate::face::ShapeModel::new(
            vec![0.0; 15],
            vec![],
            0,
            vec![],
            vec![[0.0, 0.0], [1.0, 1.0], [0.25, 0.5], [0.6, 0.1], [0.5, 0.5]],
        )
        .unwrap();
        let all = MouthRoi { x: 0, y: 0, width: 100, height: 80 };
        assert_eq!(all.vertices(&model, 100, 80).unwrap(), vec![0, 1, 2, 3, 4]);
        // Texel rectangle [20, 50] x [30, 60]: uv (0.25, 0.5) -> (25, 40) and
        // (0.5, 0.5) -> (50, 40) inside; (0.6, 0.1) -> (60, 8) outside.
        let part = MouthRoi { x: 20, y: 30, width: 30, height: 30 };
        assert_eq!(part.vertices(&model, 100, 80).unwrap(), vec![2, 4]);
        let empty = MouthRoi { x: 0, y: 0, width: 0, height: 5 };
        assert!(matches!(extract_roi(&Raster::new(100, 80), &model, &empty), Err(Error::RoiOutOfBounds(_))));
        let outside = MouthRoi { x: 90, y: 0, width: 20, height: 5 };
        assert!(extract_roi(&Raster::new(100, 80), &model, &outside).is_err());
    }
}
