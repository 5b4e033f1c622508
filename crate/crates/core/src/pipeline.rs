//! Configuration, on-disk capture layout and the stage functions behind the
//! command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{extract_roi, CodecModel, LatentCodec, MouthFrame, MouthRoi};
use crate::error::{Error, Result};
use crate::face::io::{load_model, save_model};
use crate::face::{Camera, CameraView, Landmark, PoseShapeParams, ShapeModel};
use crate::formats::{read_json, write_json};
use crate::image::Raster;
use crate::stitch::{assemble_texture, conceal_seams, solve_labeling, FallbackWarning, StitchConfig, StitchProblem};
use crate::synth::{synthesize, synthesize_latents, LatentSequence, SynthesisConfig, SynthesisResult};
use crate::synthetic::{Preset, ScriptWord, SyntheticScene};
use crate::tracker::{register_neutral, track_sequence, LandmarkRecord, ReferenceFrame, TrackerConfig};
use crate::viseme::{
    default_margin, Annotation, ExtendedLabel, SampleDb, Take, TransitionTable, VisemeDict, DEFAULT_SEARCH,
    DEFAULT_WINDOW,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// Requested latent dimension; clamped to the number of training frames.
    pub latent_dim: usize,
    /// Geometry weight; `null` picks the default from the block sizes.
    pub alpha: Option<f64>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            latent_dim: 1024,
            alpha: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisemeConfig {
    /// Transition window in frames.
    pub window: usize,
    /// Frames searched at each sample boundary.
    pub search: usize,
    /// Extra frames kept around annotated segments; `null` derives it from
    /// window and search.
    pub margin: Option<usize>,
}

impl Default for VisemeConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            search: DEFAULT_SEARCH,
            margin: None,
        }
    }
}

impl VisemeConfig {
    pub fn margin(&self) -> usize {
        self.margin.unwrap_or_else(|| default_margin(self.window, self.search))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssetPaths {
    /// Phoneme-to-viseme dictionary; the built-in table when absent.
    pub dictionary: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tracker: TrackerConfig,
    pub stitch: StitchConfig,
    pub codec: CodecConfig,
    pub viseme: VisemeConfig,
    pub synthesis: SynthesisConfig,
    pub assets: AssetPaths,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.stitch.validate()?;
        self.synthesis.validate()?;
        if self.codec.latent_dim == 0 {
            return Err(Error::Invalid("codec.latent_dim must be positive".into()));
        }
        if self.viseme.window == 0 || self.viseme.search == 0 {
            return Err(Error::Invalid("viseme.window and viseme.search must be positive".into()));
        }
        Ok(())
    }

    pub fn dictionary(&self) -> Result<VisemeDict> {
        match &self.assets.dictionary {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                VisemeDict::from_json(&text)
            }
            None => Ok(VisemeDict::default()),
        }
    }
}

pub const SCENE_FILE: &str = "scene.json";
pub const MODEL_OBJ: &str = "model.obj";
pub const MODEL_BASIS: &str = "model.vsbm";
pub const LANDMARKS_FILE: &str = "landmarks.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const TRUTH_FILE: &str = "truth.json";

fn camera_path(dir: &Path, c: usize) -> PathBuf {
    dir.join("cameras").join(format!("cam{c}.json"))
}

fn image_path(dir: &Path, frame: usize, c: usize) -> PathBuf {
    dir.join("images").join(format!("f{frame:04}_c{c}.ppm"))
}

pub fn atlas_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("f{frame:04}.pfm"))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Top-level description of a capture directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureManifest {
    pub frames: usize,
    pub cameras: usize,
    pub atlas_width: usize,
    pub atlas_height: usize,
    pub roi: MouthRoi,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticInfo {
    pub preset: Preset,
    pub seed: u64,
    pub words: Vec<ScriptWord>,
}

/// A multi-view capture loaded from disk.
#[derive(Clone, Debug)]
pub struct Capture {
    pub manifest: CaptureManifest,
    pub model: ShapeModel,
    pub cameras: Vec<Camera>,
    /// `images[frame][camera]`.
    pub images: Vec<Vec<Raster>>,
    /// `landmarks[frame][camera]`.
    pub landmarks: Vec<Vec<Vec<Landmark>>>,
}

impl Capture {
    pub fn from_scene(scene: &SyntheticScene) -> Self {
        Self {
            manifest: CaptureManifest {
                frames: scene.num_frames(),
                cameras: scene.cameras.len(),
                atlas_width: scene.atlas_width,
                atlas_height: scene.atlas_height,
                roi: scene.roi,
                synthetic: Some(SyntheticInfo {
                    preset: scene.preset,
                    seed: scene.seed,
                    words: scene.words.clone(),
                }),
            },
            model: scene.model.clone(),
            cameras: scene.cameras.clone(),
            images: scene.images.clone(),
            landmarks: scene.landmarks.clone(),
        }
    }

    pub fn num_frames(&self) -> usize {
        self.images.len()
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

    pub fn save(&self, dir: &Path) -> Result<()> {
        create_dir(&dir.join("cameras"))?;
        create_dir(&dir.join("images"))?;
        write_json(&dir.join(SCENE_FILE), &self.manifest)?;
        save_model(&self.model, &dir.join(MODEL_OBJ), &dir.join(MODEL_BASIS))?;
        for (c, camera) in self.cameras.iter().enumerate() {
            let path = camera_path(dir, c);
            fs::write(&path, camera.to_json()).map_err(|e| Error::io(&path, e))?;
        }
        self.images
            .par_iter()
            .enumerate()
            .try_for_each(|(f, cams)| cams.iter().enumerate().try_for_each(|(c, img)| img.save(&image_path(dir, f, c))))?;
        let records: Vec<Vec<LandmarkRecord>> = self
            .landmarks
            .iter()
            .map(|cams| {
                cams.iter()
                    .enumerate()
                    .flat_map(|(camera, marks)| {
                        marks.iter().map(move |m| LandmarkRecord {
                            camera,
                            vertex: m.vertex,
                            x: m.x,
                            y: m.y,
                        })
                    })
                    .collect()
            })
            .collect();
        write_json(&dir.join(LANDMARKS_FILE), &records)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CaptureManifest = read_json(&dir.join(SCENE_FILE))?;
        let model = load_model(&dir.join(MODEL_OBJ), &dir.join(MODEL_BASIS))?;
        let cameras = (0..manifest.cameras)
            .map(|c| {
                let path = camera_path(dir, c);
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Camera::from_json(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        let images = (0..manifest.frames)
            .into_par_iter()
            .map(|f| (0..manifest.cameras).map(|c| Raster::load(&image_path(dir, f, c))).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let records: Vec<Vec<LandmarkRecord>> = read_json(&dir.join(LANDMARKS_FILE))?;
        if records.len() != manifest.frames {
            return Err(Error::DimensionMismatch(format!(
                "{} landmark frames for {} image frames",
                records.len(),
                manifest.frames
            )));
        }
        let landmarks = records
            .iter()
            .enumerate()
            .map(|(f, r)| crate::tracker::landmarks_by_camera(r, manifest.cameras).map_err(|e| e.at_frame(f)))
            .collect::<Result<_>>()?;
        Ok(Self {
            manifest,
            model,
            cameras,
            images,
            landmarks,
        })
    }
}

/// Writes a synthetic scene as a capture directory plus its ground truth and
/// annotation.
pub fn write_synthetic(scene: &SyntheticScene, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    Capture::from_scene(scene).save(dir)?;
    write_json(&dir.join(TRUTH_FILE), &scene.truth)?;
    write_json(&dir.join(ANNOTATIONS_FILE), &scene.annotations)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSummary {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub iterations: usize,
    /// Energy after every accepted iteration.
    pub accepted_energies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tracking {
    pub reference: PoseShapeParams,
    pub params: Vec<PoseShapeParams>,
    pub frames: Vec<FrameSummary>,
}

impl Tracking {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Registers frame 0 and tracks every frame against it.
pub fn run_track(capture: &Capture, config: &TrackerConfig) -> Result<Tracking> {
    if capture.num_frames() == 0 {
        return Err(Error::Invalid("capture has no frames".into()));
    }
    let views = capture.all_views();
    let neutral = register_neutral(&capture.model, &views[0], config).map_err(|e| e.in_stage("register"))?;
    info!("neutral registration energy {:.6e}", neutral.final_energy);
    let reference = ReferenceFrame::new(&capture.model, neutral.params.clone(), &views[0])?;
    let fits = track_sequence(&capture.model, &views, &reference, config).map_err(|e| e.in_stage("track"))?;
    Ok(Tracking {
        reference: neutral.params,
        params: fits.iter().map(|f| f.params.clone()).collect(),
        frames: fits
            .iter()
            .map(|f| FrameSummary {
                initial_energy: f.initial_energy,
                final_energy: f.final_energy,
                iterations: f.log.len(),
                accepted_energies: f.log.iter().filter(|r| r.accepted).map(|r| r.energy_after).collect(),
            })
            .collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StitchSummary {
    pub energy: f64,
    pub labels: Vec<Vec<usize>>,
    pub warnings: Vec<FallbackWarning>,
}

/// Atlases for every tracked frame, seams concealed.
pub fn run_stitch(
    capture: &Capture,
    tracking: &Tracking,
    config: &StitchConfig,
) -> Result<(Vec<Raster>, StitchSummary)> {
    let mut config = config.clone();
    config.atlas_width = capture.manifest.atlas_width;
    config.atlas_height = capture.manifest.atlas_height;
    let views = capture.all_views();
    if tracking.params.len() != views.len() {
        return Err(Error::DimensionMismatch(format!(
            "tracking has {} frames, capture {}",
            tracking.params.len(),
            views.len()
        )));
    }
    let problem = StitchProblem::from_scene(&capture.model, &tracking.params, &views, &config)?;
    let labeling = solve_labeling(&problem, &config)?;
    for w in &labeling.warnings {
        warn!("frame {}: triangle {} hidden in every camera, using camera {}", w.frame, w.triangle, w.camera);
    }
    let atlases = (0..views.len())
        .into_par_iter()
        .map(|f| -> Result<Raster> {
            let vertices = capture.model.deform(&tracking.params[f])?;
            let (atlas, seams) = assemble_texture(&capture.model, &vertices, &labeling.labels[f], &views[f], &config)?;
            conceal_seams(&atlas, &seams, &config)
        })
        .enumerate()
        .map(|(f, r)| r.map_err(|e| e.at_frame(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        atlases,
        StitchSummary {
            energy: labeling.energy,
            labels: labeling.labels,
            warnings: labeling.warnings,
        },
    ))
}

/// Codec training frames: ROI crops of the atlases with tracked weights.
pub fn mouth_frames(capture: &Capture, tracking: &Tracking, atlases: &[Raster]) -> Result<Vec<MouthFrame>> {
    if atlases.len() != tracking.params.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} atlases for {} tracked frames",
            atlases.len(),
            tracking.params.len()
        )));
    }
    atlases
        .iter()
        .zip(&tracking.params)
        .map(|(atlas, p)| {
            let (texture, _) = extract_roi(atlas, &capture.model, &capture.manifest.roi)?;
            Ok(MouthFrame {
                texture,
                b: p.b.clone(),
            })
        })
        .collect()
}

pub fn run_fit_codec(frames: &[MouthFrame], roi: MouthRoi, config: &CodecConfig) -> Result<CodecModel> {
    let d = config.latent_dim.min(frames.len());
    if d < config.latent_dim {
        warn!(
            "latent dimension {} exceeds the {} training frames; using {d}",
            config.latent_dim,
            frames.len()
        );
    }
    CodecModel::fit(frames, roi, d, config.alpha)
}

pub fn run_encode(codec: &CodecModel, frames: &[MouthFrame]) -> Result<LatentSequence> {
    let data = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| codec.encode(f).map_err(|e| e.at_frame(i)))
        .collect::<Result<Vec<_>>>()?;
    LatentSequence::new(codec.latent_dim(), data.concat())
}

pub fn run_build_db(latents: &LatentSequence, annotations: &[Annotation], config: &VisemeConfig) -> Result<SampleDb> {
    let take = Take {
        name: "take0".into(),
        latents: latents.data.clone(),
        annotations: annotations.to_vec(),
    };
    SampleDb::from_takes(latents.d, &[take], config.margin())
}

pub fn run_transitions(db: &SampleDb, config: &VisemeConfig) -> Result<TransitionTable> {
    TransitionTable::build(db, config.window, config.search)
}

/// A query given either as CELEX phonemes or as extended labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Query {
    Phonemes(String),
    Labels(Vec<ExtendedLabel>),
}

impl Query {
    /// Comma- or whitespace-separated extended labels such as `#-A,-AL`.
    pub fn parse_labels(text: &str) -> Result<Self> {
        let labels = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(Query::Labels(labels))
    }

    pub fn resolve(&self, dict: &VisemeDict) -> Result<Vec<ExtendedLabel>> {
        let labels = match self {
            Query::Phonemes(p) => dict.phonemes_to_extended(p)?,
            Query::Labels(l) => l.clone(),
        };
        if labels.is_empty() {
            return Err(Error::Invalid("empty query".into()));
        }
        Ok(labels)
    }
}

pub fn run_synth(
    labels: &[ExtendedLabel],
    db: &SampleDb,
    table: &TransitionTable,
    codec: Option<&CodecModel>,
    config: &SynthesisConfig,
) -> Result<(SynthesisResult, Vec<MouthFrame>)> {
    table.check(db)?;
    match codec {
        Some(codec) => synthesize(labels, db, table, codec, config),
        None => Ok((synthesize_latents(labels, db, table, config)?, Vec::new())),
    }
}

/// Everything produced by running the stages in memory on one capture.
pub struct PipelineRun {
    pub tracking: Tracking,
    pub atlases: Vec<Raster>,
    pub codec: CodecModel,
    pub latents: LatentSequence,
    pub db: SampleDb,
    pub table: TransitionTable,
}

/// Track, stitch, fit the codec, encode, and build the database and
/// transition table.
pub fn run_all(capture: &Capture, annotations: &[Annotation], config: &PipelineConfig) -> Result<PipelineRun> {
    config.validate()?;
    let tracking = run_track(capture, &config.tracker)?;
    let (atlases, _) = run_stitch(capture, &tracking, &config.stitch).map_err(|e| e.in_stage("stitch"))?;
    let frames = mouth_frames(capture, &tracking, &atlases)?;
    let codec = run_fit_codec(&frames, capture.manifest.roi, &config.codec).map_err(|e| e.in_stage("fit-codec"))?;
    let latents = run_encode(&codec, &frames).map_err(|e| e.in_stage("encode"))?;
    let db = run_build_db(&latents, annotations, &config.viseme).map_err(|e| e.in_stage("build-db"))?;
    let table = run_transitions(&db, &config.viseme).map_err(|e| e.in_stage("transitions"))?;
    Ok(PipelineRun {
        tracking,
        atlases,
        codec,
        latents,
        db,
        table,
    })
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    read_json(path)
}
