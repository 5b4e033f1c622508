//! Synthetic capture: a low-poly face proxy seen by three cameras, with a
//! scripted viseme sequence driving the mouth. Everything is derived from a
//! single seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::MouthRoi;
use crate::error::{Error, Result};
use crate::face::{Camera, CameraView, DepthRaster, Landmark, PoseShapeParams, ShapeModel, SHAPE_BASIS_SIZE};
use crate::image::Raster;
use crate::viseme::{extend_word, Annotation, VisemeDict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Tiny,
    Small,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "small" => Ok(Preset::Small),
            _ => Err(Error::Invalid(format!("unknown preset '{s}' (expected tiny or small)"))),
        }
    }
}

struct PresetSpec {
    grid: usize,
    image: usize,
    focal: f64,
    atlas: usize,
    passes: usize,
}

impl Preset {
    fn spec(self) -> PresetSpec {
        match self {
            Preset::Tiny => PresetSpec {
                grid: 10,
                image: 96,
                focal: 120.0,
                atlas: 64,
                passes: 1,
            },
            Preset::Small => PresetSpec {
                grid: 14,
                image: 128,
                focal: 160.0,
                atlas: 96,
                passes: 2,
            },
        }
    }
}

/// Words of the script in CELEX phonemes. Together they cover every viseme
/// at least three times.
pub const WORDS: [&str; 16] = [
    "k a l t", "f i S", "b E r", "z o n", "m U l", "r E z", "S U f", "v a r", "l i S", "z O p", "h E l", "d u f",
    "g a z", "r o S", "n U v", "b I l",
];

const LEAD_IN: usize = 4;
const WORD_GAP: usize = 2;
const MOUTH_UV: [f64; 2] = [0.5, 0.3];
const BACKGROUND: [f32; 3] = [0.1, 0.1, 0.1];

/// One spoken word and its frame range (end exclusive).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptWord {
    pub phonemes: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub preset: Preset,
    pub seed: u64,
    pub model: ShapeModel,
    pub cameras: Vec<Camera>,
    pub truth: Vec<PoseShapeParams>,
    /// `images[frame][camera]`.
    pub images: Vec<Vec<Raster>>,
    /// `landmarks[frame][camera]`.
    pub landmarks: Vec<Vec<Vec<Landmark>>>,
    pub landmark_vertices: Vec<usize>,
    pub words: Vec<ScriptWord>,
    pub annotations: Vec<Annotation>,
    pub roi: MouthRoi,
    pub atlas_width: usize,
    pub atlas_height: usize,
}

impl SyntheticScene {
    pub fn num_frames(&self) -> usize {
        self.truth.len()
    }

    pub fn views(&self, frame: usize) -> Vec<CameraView> {
        self.cameras
            .iter()
            .zip(&self.images[frame])
            .zip(&self.landmarks[frame])
            .map(|((camera, image), landmarks)| CameraView {
                camera: camera.clone(),
                image: image.clone(),
                landmarks: landmarks.clone(),
            })
            .collect()
    }

    pub fn all_views(&self) -> Vec<Vec<CameraView>> {
        (0..self.num_frames()).map(|f| self.views(f)).collect()
    }

    /// Frame range of the first scripted occurrence of `phonemes`.
    pub fn word(&self, phonemes: &str) -> Option<&ScriptWord> {
        self.words.iter().find(|w| w.phonemes == phonemes)
    }
}

/// Curved grid in `[-1, 1]^2` facing the `-z` cameras. Basis columns are
/// smooth; the first six are concentrated around the mouth.
pub fn face_proxy(grid: usize, rng: &mut ChaCha8Rng) -> ShapeModel {
    let n = grid * grid;
    let mut mean = Vec::with_capacity(3 * n);
    let mut uv = Vec::with_capacity(n);
    for y in 0..grid {
        for x in 0..grid {
            let (u, v) = (x as f64 / (grid - 1) as f64, y as f64 / (grid - 1) as f64);
            let (px, py) = (2.0 * u - 1.0, 2.0 * v - 1.0);
            mean.extend([px, py, 0.3 * (px * px + py * py)]);
            uv.push([u, v]);
        }
    }
    let k = SHAPE_BASIS_SIZE;
    let mut basis = vec![0.0; 3 * n * k];
    let phases: Vec<[f64; 2]> = (0..k).map(|_| [rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28)]).collect();
    for c in 0..k {
        let [p0, p1] = phases[c];
        for v in 0..n {
            let [u, w] = uv[v];
            let du = (u - MOUTH_UV[0]) / 0.25;
            let dv = (w - MOUTH_UV[1]) / 0.18;
            let bump = (-(du * du + dv * dv)).exp();
            let (px, py) = (mean[3 * v], mean[3 * v + 1]);
            let value = if c < 6 {
                0.12 * bump * ((1.0 + c as f64) * px + p0).cos() * (py * 2.0 + p1).cos().abs().max(0.3)
            } else {
                0.05 * ((0.5 + 0.3 * c as f64) * px + p0).sin() * (py + p1).cos()
            };
            basis[c * 3 * n + 3 * v + (c % 3)] = value;
        }
    }
    let mut tris = Vec::with_capacity(2 * (grid - 1) * (grid - 1));
    for y in 0..grid - 1 {
        for x in 0..grid - 1 {
            let v = (y * grid + x) as u32;
            let g = grid as u32;
            tris.push([v, v + g, v + 1]);
            tris.push([v + 1, v + g, v + g + 1]);
        }
    }
    ShapeModel::new(mean, basis, k, tris, uv).expect("face proxy is well formed")
}

fn scene_cameras(spec: &PresetSpec) -> Vec<Camera> {
    let s = spec.image;
    let up = [0.0, 1.0, 0.0];
    [[0.0, 0.0, -5.0], [-2.2, 0.4, -4.5], [2.2, 0.4, -4.5]]
        .iter()
        .map(|&eye| Camera::look_at(spec.focal, s, s, eye, [0.0, 0.0, 0.0], up).expect("camera is valid"))
        .collect()
}

/// Surface colour at `uv` for the given mouth weights.
pub fn albedo(uv: [f64; 2], b: &[f64]) -> [f32; 3] {
    let [u, v] = uv;
    let pattern = 0.08 * (12.0 * u).sin() * (9.0 * v).cos() + 0.06 * (25.0 * u + 3.0).sin() * (21.0 * v).sin();
    let mut c = [0.72 + pattern, 0.52 + 0.8 * pattern, 0.42 + 0.5 * pattern];
    let open = (0.5 + 0.35 * b[0]).clamp(0.05, 1.0);
    let shade = (0.5 + 0.35 * b[1]).clamp(0.0, 1.0);
    let du = (u - MOUTH_UV[0]) / 0.17;
    let dv = (v - MOUTH_UV[1]) / 0.08;
    let r2 = du * du + dv * dv;
    if r2 < 1.0 {
        let lip = 1.0 - r2;
        c = [c[0] - 0.1 * lip, c[1] - 0.3 * lip, c[2] - 0.2 * lip];
        let inner = du * du / 0.7 + dv * dv / (open * 0.8);
        if inner < 1.0 {
            let t = 1.0 - inner;
            c = [0.15 + 0.5 * shade * t, 0.05 + 0.45 * shade * t, 0.06 + 0.4 * shade * t];
        }
    }
    [c[0].clamp(0.0, 1.0) as f32, c[1].clamp(0.0, 1.0) as f32, c[2].clamp(0.0, 1.0) as f32]
}

/// Renders the textured mesh with a depth buffer; no lighting.
pub fn render(model: &ShapeModel, vertices: &[[f64; 3]], camera: &Camera, b: &[f64]) -> Raster {
    let depth = DepthRaster::render(vertices, model.triangles(), camera);
    let tris = model.triangles();
    let uvs = model.uv();
    Raster::from_fn(camera.width(), camera.height(), |x, y| match depth.sample(x, y) {
        Some((t, bary)) => {
            let tri = tris[t];
            let mut uv = [0.0; 2];
            for k in 0..3 {
                for a in 0..2 {
                    uv[a] += bary[k] * uvs[tri[k] as usize][a];
                }
            }
            albedo(uv, b)
        }
        None => BACKGROUND,
    })
}

fn mouth_targets(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..13)
        .map(|_| {
            (0..SHAPE_BASIS_SIZE)
                .map(|c| if c < 6 { rng.gen_range(-1.5..1.5) } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn generate(preset: Preset, seed: u64) -> Result<SyntheticScene> {
    let spec = preset.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = face_proxy(spec.grid, &mut rng);
    let cameras = scene_cameras(&spec);
    let dict = VisemeDict::default();
    let targets = mouth_targets(&mut rng);
    let viseme_index = |c: char| crate::viseme::VISEMES.iter().position(|&v| v == c).unwrap();

    // Script: per-frame target weights and annotations.
    let mut order: Vec<&str> = Vec::new();
    for pass in 0..spec.passes {
        let mut words = WORDS.to_vec();
        if pass > 0 {
            words.rotate_left(rng.gen_range(1..WORDS.len()));
        }
        order.extend(words);
    }
    let zero = vec![0.0; SHAPE_BASIS_SIZE];
    let mut frame_targets: Vec<Vec<f64>> = vec![zero.clone(); LEAD_IN];
    let mut words = Vec::new();
    let mut annotations = Vec::new();
    for (w, phonemes) in order.iter().enumerate() {
        if w > 0 {
            frame_targets.extend(std::iter::repeat(zero.clone()).take(WORD_GAP));
        }
        let start = frame_targets.len();
        let visemes = &dict.words(phonemes)?[0];
        for label in extend_word(visemes) {
            let len = rng.gen_range(4..=5);
            let s = frame_targets.len();
            frame_targets.extend(std::iter::repeat(targets[viseme_index(label.cur)].clone()).take(len));
            annotations.push(Annotation {
                label,
                start: s,
                end: s + len,
            });
        }
        words.push(ScriptWord {
            phonemes: phonemes.to_string(),
            start,
            end: frame_targets.len(),
        });
    }
    frame_targets.extend(std::iter::repeat(zero).take(WORD_GAP));
    let frames = frame_targets.len();

    // Coarticulation: a short moving average over the targets. The first
    // frame stays neutral for registration.
    let truth_b: Vec<Vec<f64>> = (0..frames)
        .map(|f| {
            if f == 0 {
                return vec![0.0; SHAPE_BASIS_SIZE];
            }
            let lo = f.saturating_sub(1);
            let hi = (f + 1).min(frames - 1);
            let mut b = vec![0.0; SHAPE_BASIS_SIZE];
            for t in &frame_targets[lo..=hi] {
                for (x, y) in b.iter_mut().zip(t) {
                    *x += y / (hi - lo + 1) as f64;
                }
            }
            b
        })
        .collect();
    let phase: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..6.28)).collect();
    let amplitude = [0.05, 0.04, 0.08, 0.06, 0.08, 0.04];
    let rate = [0.071, 0.053, 0.031, 0.047, 0.059, 0.037];
    let truth: Vec<PoseShapeParams> = truth_b
        .into_iter()
        .enumerate()
        .map(|(f, b)| {
            let mut t = [0.0; 6];
            for k in 0..6 {
                t[k] = amplitude[k] * (rate[k] * f as f64 + phase[k]).sin();
            }
            PoseShapeParams { t, b }
        })
        .collect();

    let g = spec.grid;
    let lattice: Vec<usize> = (0..g).step_by(3).chain([g - 1]).collect();
    let mut landmark_vertices: Vec<usize> = lattice
        .iter()
        .flat_map(|&y| lattice.iter().map(move |&x| y * g + x))
        .collect();
    landmark_vertices.dedup();

    let rendered: Vec<(Vec<Raster>, Vec<Vec<Landmark>>)> = truth
        .par_iter()
        .map(|params| {
            let vertices = model.deform(params)?;
            let mut images = Vec::with_capacity(cameras.len());
            let mut marks = Vec::with_capacity(cameras.len());
            for camera in &cameras {
                images.push(render(&model, &vertices, camera, &params.b));
                marks.push(
                    landmark_vertices
                        .iter()
                        .map(|&v| {
                            let p = camera.project(vertices[v])?;
                            Ok(Landmark {
                                vertex: v,
                                x: p[0],
                                y: p[1],
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            Ok((images, marks))
        })
        .collect::<Result<_>>()?;
    let (images, landmarks) = rendered.into_iter().unzip();

    let a = spec.atlas;
    let roi = MouthRoi {
        x: ((MOUTH_UV[0] - 0.22) * a as f64).floor() as usize,
        y: ((MOUTH_UV[1] - 0.12) * a as f64).floor() as usize,
        width: (0.44 * a as f64).round() as usize,
        height: (0.24 * a as f64).round() as usize,
    };
    Ok(SyntheticScene {
        preset,
        seed,
        model,
        cameras,
        truth,
        images,
        landmarks,
        landmark_vertices,
        words,
        annotations,
        roi,
        atlas_width: a,
        atlas_height: a,
    })
}

/// Texture atlas of the true surface colour at `frame`, with texel
/// `(x, y)` sampled at uv `((x + 0.5) / w, (y + 0.5) / h)`.
pub fn ground_truth_atlas(scene: &SyntheticScene, frame: usize) -> Raster {
    let (w, h) = (scene.atlas_width, scene.atlas_height);
    let b = &scene.truth[frame].b;
    Raster::from_fn(w, h, |x, y| albedo([(x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64], b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn tiny_preset_contract() {
        let scene = generate(Preset::Tiny, 7).unwrap();
        assert!(scene.model.triangles().len() <= 200);
        assert_eq!(scene.cameras.len(), 3);
        assert!(scene.num_frames() <= 300);
        assert!(scene.truth[0].b.iter().all(|&b| b == 0.0));
        let mut counts: BTreeMap<char, usize> = BTreeMap::new();
        for a in &scene.annotations {
            *counts.entry(a.label.cur).or_default() += 1;
        }
        assert_eq!(counts.len(), 13);
        assert!(counts.values().all(|&c| c >= 3), "{counts:?}");
    }

    #[test]
    fn kalt_is_scripted() {
        let scene = generate(Preset::Tiny, 1).unwrap();
        let w = scene.word("k a l t").unwrap();
        let labels: Vec<String> = scene
            .annotations
            .iter()
            .filter(|a| a.start >= w.start && a.end <= w.end)
            .map(|a| a.label.to_string())
            .collect();
        assert_eq!(labels, ["#-A", "-AL", "ALT", "LT#"]);
    }

    #[test]
    fn same_seed_same_scene() {
        let a = generate(Preset::Tiny, 3).unwrap();
        let b = generate(Preset::Tiny, 3).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.images, b.images);
        let c = generate(Preset::Tiny, 4).unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn face_is_visible_in_every_camera() {
        let scene = generate(Preset::Tiny, 2).unwrap();
        for image in &scene.images[0] {
            let covered = image.pixels().iter().filter(|p| **p != BACKGROUND).count();
            assert!(covered > image.pixels().len() / 8, "{covered}");
        }
        let roi = scene.roi;
        assert!(roi.x + roi.width <= scene.atlas_width && roi.y + roi.height <= scene.atlas_height);
        assert!(!roi.vertices(&scene.model, scene.atlas_width, scene.atlas_height).unwrap().is_empty());
    }

    #[test]
    fn landmarks_are_exact_projections() {
        let scene = generate(Preset::Tiny, 5).unwrap();
        let f = 17;
        let x = scene.model.deform(&scene.truth[f]).unwrap();
        for (camera, marks) in scene.cameras.iter().zip(&scene.landmarks[f]) {
            for m in marks {
                let p = camera.project(x[m.vertex]).unwrap();
                assert_eq!([m.x, m.y], p);
            }
        }
    }

    #[test]
    fn ground_truth_mouth_changes_with_visemes() {
        let scene = generate(Preset::Tiny, 8).unwrap();
        let roi = scene.roi;
        let crop = |f: usize| ground_truth_atlas(&scene, f).crop(roi.x, roi.y, roi.width, roi.height);
        let w = scene.word("k a l t").unwrap();
        assert_ne!(crop(0), crop(w.start + 6));
        assert_eq!(ground_truth_atlas(&scene, 0), ground_truth_atlas(&scene, 0));
    }

    #[test]
    fn presets_parse() {
        assert_eq!("tiny".parse::<Preset>().unwrap(), Preset::Tiny);
        assert!("huge".parse::<Preset>().is_err());
    }
}
