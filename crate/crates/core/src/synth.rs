//! Viseme-query synthesis: unit selection, concatenation, blending, decoding
//! and compositing into the head model.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::blend::{
    blend_sequence_1d, blend_windows, laplacian_mesh_integrate, poisson_blend_2d, BlendWindow, GuidanceField,
    MeshAdjacency,
};
use crate::codec::{LatentCodec, MouthFrame, MouthRoi};
use crate::error::{Error, Result};
use crate::face::{PoseShapeParams, ShapeModel};
use crate::formats::{self, Reader, Writer};
use crate::image::{Mask, Raster};
use crate::mrf::{alpha_expand, chain_solve, ChainProblem, MultiLabelProblem, PairCost, DEFAULT_MAX_SWEEPS};
use crate::viseme::{effective_window, ExtendedLabel, MotionSample, SampleDb, TransitionTable};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    ExactChain,
    AlphaExpansion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Weight of the transition term.
    pub lambda: f64,
    pub solver: Solver,
    /// Frames on each side of a junction that blending may change.
    pub blend_radius: usize,
    pub fps: f64,
    /// Largest allowed jump across the output, relative to the largest jump
    /// inside any chosen sample.
    pub seam_factor: f64,
    /// Weight pinning the ROI boundary ring when compositing geometry.
    pub anchor_weight: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            solver: Solver::ExactChain,
            blend_radius: 5,
            fps: 25.0,
            seam_factor: 1.5,
            anchor_weight: 100.0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.fps > 0.0) || !(self.seam_factor > 0.0) || !(self.anchor_weight > 0.0) {
            return Err(Error::Invalid("fps, seam_factor and anchor_weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SelectionEnergy {
    pub unary: f64,
    /// Already multiplied by lambda.
    pub transition: f64,
    pub total: f64,
    /// Global minimum from the chain solver, reported whichever solver ran.
    pub exact_total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub ids: Vec<u32>,
    pub energy: SelectionEnergy,
}

/// Chooses one sample per query position.
pub fn select_samples(
    query: &[ExtendedLabel],
    db: &SampleDb,
    table: &TransitionTable,
    config: &SynthesisConfig,
) -> Result<Selection> {
    config.validate()?;
    if query.is_empty() {
        return Err(Error::Invalid("empty query".into()));
    }
    let candidates = query.iter().map(|l| db.candidates(l)).collect::<Result<Vec<_>>>()?;
    let mut pairwise = Vec::with_capacity(query.len() - 1);
    for w in candidates.windows(2) {
        let mut costs = Vec::with_capacity(w[0].ids.len() * w[1].ids.len());
        for &a in &w[0].ids {
            for &b in &w[1].ids {
                costs.push(config.lambda * table.get(a, b)?.cost);
            }
        }
        pairwise.push(costs);
    }
    let unary: Vec<Vec<f64>> = candidates.iter().map(|c| c.unary.clone()).collect();
    let chain = ChainProblem::new(unary, pairwise)?;
    let exact = chain_solve(&chain)?;

    let assignment = match config.solver {
        Solver::ExactChain => exact.assignment.clone(),
        Solver::AlphaExpansion => {
            // Labels are samples, shared by all positions.
            let labels: Vec<u32> = candidates
                .iter()
                .flat_map(|c| c.ids.iter().copied())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let index = |id: u32| labels.binary_search(&id).unwrap();
            let l = labels.len();
            let mut problem = MultiLabelProblem::new(query.len(), l);
            for (i, c) in candidates.iter().enumerate() {
                for k in 0..l {
                    problem.set_admissible(i, k, false);
                }
                for (&id, &u) in c.ids.iter().zip(&c.unary) {
                    problem.set_admissible(i, index(id), true);
                    problem.set_unary(i, index(id), u);
                }
            }
            let mut costs = vec![0.0; l * l];
            for (a, &ia) in labels.iter().enumerate() {
                for (b, &ib) in labels.iter().enumerate() {
                    costs[a * l + b] = table.get(ia, ib)?.cost;
                }
            }
            let costs: Arc<[f64]> = costs.into();
            for i in 1..query.len() {
                problem.add_edge(i - 1, i, PairCost::Table(costs.clone()), config.lambda);
            }
            let initial: Vec<usize> = candidates.iter().map(|c| index(c.ids[0])).collect();
            let result = alpha_expand(&problem, &initial, DEFAULT_MAX_SWEEPS)?;
            result
                .labeling
                .iter()
                .zip(&candidates)
                .map(|(&k, c)| c.ids.iter().position(|&id| id == labels[k]).unwrap())
                .collect()
        }
    };

    let ids: Vec<u32> = assignment.iter().zip(&candidates).map(|(&k, c)| c.ids[k]).collect();
    let unary: f64 = assignment.iter().enumerate().map(|(i, &k)| chain.unary(i, k)).sum();
    let transition: f64 = (1..assignment.len())
        .map(|i| chain.pairwise(i - 1, assignment[i - 1], assignment[i]))
        .sum();
    Ok(Selection {
        ids,
        energy: SelectionEnergy {
            unary,
            transition,
            total: chain.energy(&assignment),
            exact_total: exact.energy,
        },
    })
}

/// Raw concatenation of chosen samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Concatenation {
    /// `frames x d`, row-major.
    pub latents: Vec<f64>,
    /// Output index of the first frame taken from each sample after the first.
    pub junctions: Vec<usize>,
    /// Inclusive frame range kept from each sample.
    pub ranges: Vec<(usize, usize)>,
}

/// Splices consecutive samples at their stored transition. The first sample
/// keeps frames up to its tail offset; the second resumes right after its
/// matched window, whose content the first sample has already played. A
/// sample left with no frames of its own keeps one.
pub fn concatenate(samples: &[&MotionSample], table: &TransitionTable) -> Result<Concatenation> {
    let first = samples.first().ok_or_else(|| Error::Invalid("nothing to concatenate".into()))?;
    let d = first.dim();
    let mut starts = vec![0usize; samples.len()];
    let mut ends: Vec<usize> = samples.iter().map(|s| s.frames() - 1).collect();
    for i in 1..samples.len() {
        let (a, b) = (samples[i - 1], samples[i]);
        if b.dim() != d {
            return Err(Error::DimensionMismatch(format!("sample {} has d = {}, expected {d}", b.id, b.dim())));
        }
        let t = table.get(a.id, b.id)?;
        let w = effective_window(table.window(), a, b);
        if t.tail + 1 < w || t.tail >= a.frames() || t.head + w > b.frames() {
            return Err(Error::Invalid(format!("transition ({}, {}) does not fit the samples", a.id, b.id)));
        }
        ends[i - 1] = t.tail;
        starts[i] = t.head + w;
    }
    let mut latents = Vec::new();
    let mut junctions = Vec::with_capacity(samples.len() - 1);
    let mut ranges = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let end = ends[i];
        let start = starts[i].min(end);
        if i > 0 {
            junctions.push(latents.len() / d);
        }
        latents.extend_from_slice(&s.latents()[start * d..(end + 1) * d]);
        ranges.push((start, end));
    }
    Ok(Concatenation {
        latents,
        junctions,
        ranges,
    })
}

/// Largest Euclidean step between consecutive frames.
pub fn max_jump(latents: &[f64], d: usize) -> f64 {
    latents
        .chunks_exact(d)
        .zip(latents.chunks_exact(d).skip(1))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeamReport {
    pub max_jump: f64,
    pub max_sample_jump: f64,
    pub seamless: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisResult {
    pub query: Vec<ExtendedLabel>,
    pub ids: Vec<u32>,
    pub junctions: Vec<usize>,
    pub windows: Vec<BlendWindow>,
    pub d: usize,
    /// Concatenation before blending.
    pub raw: Vec<f64>,
    /// Blended `frames x d` sequence.
    pub latents: Vec<f64>,
    pub energy: SelectionEnergy,
    pub seam: SeamReport,
    pub fps: f64,
}

impl SynthesisResult {
    pub fn frames(&self) -> usize {
        self.latents.len() / self.d
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.latents[i * self.d..(i + 1) * self.d]
    }

    pub fn manifest(&self) -> SynthesisManifest {
        SynthesisManifest {
            query: self.query.clone(),
            ids: self.ids.clone(),
            junctions: self.junctions.clone(),
            frames: self.frames(),
            d: self.d,
            fps: self.fps,
            energy: self.energy,
            seam: self.seam,
        }
    }
}

/// JSON summary of a synthesis run.
#[derive(Clone, Debug, Serialize)]
pub struct SynthesisManifest {
    pub query: Vec<ExtendedLabel>,
    pub ids: Vec<u32>,
    pub junctions: Vec<usize>,
    pub frames: usize,
    pub d: usize,
    pub fps: f64,
    pub energy: SelectionEnergy,
    pub seam: SeamReport,
}

/// Selection, concatenation and blending, without decoding.
pub fn synthesize_latents(
    query: &[ExtendedLabel],
    db: &SampleDb,
    table: &TransitionTable,
    config: &SynthesisConfig,
) -> Result<SynthesisResult> {
    let selection = select_samples(query, db, table, config).map_err(|e| e.in_stage("select"))?;
    let samples: Vec<&MotionSample> = selection
        .ids
        .iter()
        .map(|&id| db.get(id).ok_or_else(|| Error::Invalid(format!("sample {id} missing from database"))))
        .collect::<Result<_>>()?;
    let d = db.dim();
    let cat = concatenate(&samples, table).map_err(|e| e.in_stage("concatenate"))?;
    let frames = cat.latents.len() / d;
    let latents =
        blend_sequence_1d(&cat.latents, d, &cat.junctions, config.blend_radius).map_err(|e| e.in_stage("blend"))?;
    let windows = if cat.junctions.is_empty() {
        Vec::new()
    } else {
        blend_windows(frames, &cat.junctions, config.blend_radius)?
    };
    let max_sample_jump = samples.iter().map(|s| max_jump(s.latents(), d)).fold(0.0, f64::max);
    let jump = max_jump(&latents, d);
    let seamless = jump <= config.seam_factor * max_sample_jump + 1e-12;
    if !seamless {
        warn!("synthesized sequence has a jump of {jump:.4}, above {} x {max_sample_jump:.4}", config.seam_factor);
    }
    Ok(SynthesisResult {
        query: query.to_vec(),
        ids: selection.ids,
        junctions: cat.junctions,
        windows,
        d,
        raw: cat.latents,
        latents,
        energy: selection.energy,
        seam: SeamReport {
            max_jump: jump,
            max_sample_jump,
            seamless,
        },
        fps: config.fps,
    })
}

/// Full synthesis including frame-by-frame decoding.
pub fn synthesize(
    query: &[ExtendedLabel],
    db: &SampleDb,
    table: &TransitionTable,
    codec: &dyn LatentCodec,
    config: &SynthesisConfig,
) -> Result<(SynthesisResult, Vec<MouthFrame>)> {
    if codec.latent_dim() != db.dim() {
        return Err(Error::DimensionMismatch(format!(
            "codec has d = {}, database d = {}",
            codec.latent_dim(),
            db.dim()
        )));
    }
    let result = synthesize_latents(query, db, table, config)?;
    let frames = (0..result.frames())
        .map(|i| codec.decode(result.frame(i)).map_err(|e| e.at_frame(i)))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("decode"))?;
    Ok((result, frames))
}

const VSLS_VERSION: u32 = 1;

/// A `frames x d` latent sequence on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSequence {
    pub d: usize,
    pub data: Vec<f64>,
}

impl LatentSequence {
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || data.len() % d != 0 {
            return Err(Error::DimensionMismatch(format!("{} values is not a multiple of d = {d}", data.len())));
        }
        Ok(Self { d, data })
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"VSLS", VSLS_VERSION);
        w.u32(self.d as u32);
        w.u32(self.frames() as u32);
        w.f32_array(&self.data);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "VSLS");
        r.magic(b"VSLS")?;
        r.version(VSLS_VERSION)?;
        let d = r.u32("latent dimension")? as usize;
        if d == 0 {
            return Err(r.error("latent dimension is zero"));
        }
        let frames = r.u32("frame count")? as usize;
        let count = frames.checked_mul(d).ok_or_else(|| r.error("sequence size overflows"))?;
        let data = r.f32_array(count, "latents")?;
        r.finish()?;
        Ok(Self { d, data })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&formats::read_file(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        formats::write_file(path, &self.to_bytes())
    }
}

/// Composited atlas and vertex positions for one frame.
#[derive(Clone, Debug)]
pub struct Composite {
    pub atlas: Raster,
    pub vertices: Vec<[f64; 3]>,
}

/// Pastes a decoded mouth frame into the base atlas and mesh. The texture is
/// Poisson-blended over the ROI rectangle against the surrounding base
/// texels; the geometry replaces the ROI vertices with the model deformed by
/// the decoded weights under `pose`, integrated with the ROI boundary ring
/// held at the base.
pub fn composite_frame(
    frame: &MouthFrame,
    base_atlas: &Raster,
    base_vertices: &[[f64; 3]],
    model: &ShapeModel,
    pose: [f64; 6],
    roi: &MouthRoi,
    config: &SynthesisConfig,
) -> Result<Composite> {
    let (aw, ah) = (base_atlas.width(), base_atlas.height());
    let roi_vertices = roi.vertices(model, aw, ah)?;
    if frame.texture.width() != roi.width || frame.texture.height() != roi.height {
        return Err(Error::RoiOutOfBounds(format!(
            "decoded texture is {}x{}, ROI is {}x{}",
            frame.texture.width(),
            frame.texture.height(),
            roi.width,
            roi.height
        )));
    }
    if base_vertices.len() != model.num_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "{} base vertices for a {}-vertex model",
            base_vertices.len(),
            model.num_vertices()
        )));
    }

    let inside = |x: usize, y: usize| x >= roi.x && x < roi.x + roi.width && y >= roi.y && y < roi.y + roi.height;
    let mut pasted = base_atlas.clone();
    for y in 0..roi.height {
        for x in 0..roi.width {
            pasted.set(roi.x + x, roi.y + y, frame.texture.get(x, y));
        }
    }
    let mut guidance = GuidanceField::from_raster(&pasted);
    let base_gradients = GuidanceField::from_raster(base_atlas);
    for y in 0..ah {
        for x in 0..aw {
            let p = y * aw + x;
            if x + 1 < aw && inside(x, y) != inside(x + 1, y) {
                guidance.gx[p] = base_gradients.gx[p];
            }
            if y + 1 < ah && inside(x, y) != inside(x, y + 1) {
                guidance.gy[p] = base_gradients.gy[p];
            }
        }
    }
    let mask = Mask::from_fn(aw, ah, inside);
    let atlas = poisson_blend_2d(base_atlas, &mask, &guidance, base_atlas).map_err(|e| e.in_stage("texture"))?;

    let vertices = if roi_vertices.is_empty() {
        base_vertices.to_vec()
    } else {
        let replacement = model.deform(&PoseShapeParams {
            t: pose,
            b: frame.b.clone(),
        })?;
        let adjacency = MeshAdjacency::from_triangles(model.num_vertices(), model.triangles());
        let anchors = adjacency.region_boundary(&roi_vertices);
        laplacian_mesh_integrate(&adjacency, base_vertices, &replacement, &roi_vertices, &anchors, config.anchor_weight)
            .map_err(|e| e.in_stage("geometry"))?
    };
    Ok(Composite { atlas, vertices })
}
