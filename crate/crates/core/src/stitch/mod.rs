//! Per-triangle source-camera selection over a sequence, texture atlas
//! assembly and seam concealment.

mod atlas;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use atlas::{assemble_texture, conceal_seams, Atlas, SeamEdge};

use crate::error::{Error, Result};
use crate::face::{visibility_all, CameraView, PoseShapeParams, ShapeModel, TriangleVisibility};
use crate::mrf::{alpha_expand, sat_add, MultiLabelProblem, PairCost, DEFAULT_MAX_SWEEPS, INF};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchConfig {
    /// Spatial smoothness weight.
    pub lambda: f64,
    /// Temporal weight.
    pub eta: f64,
    pub edge_samples: usize,
    /// Seam blend band radius in texels.
    pub band_radius: usize,
    pub atlas_width: usize,
    pub atlas_height: usize,
}

impl Default for StitchConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            eta: 0.5,
            edge_samples: 8,
            band_radius: 4,
            atlas_width: 256,
            atlas_height: 256,
        }
    }
}

impl StitchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.eta >= 0.0) {
            return Err(Error::Invalid("stitch weights must be non-negative".into()));
        }
        if self.edge_samples < 2 {
            return Err(Error::Invalid("at least 2 edge samples are required".into()));
        }
        if self.atlas_width == 0 || self.atlas_height == 0 {
            return Err(Error::Invalid("atlas resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Two triangles sharing the mesh edge `edge`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Adjacency {
    pub i: usize,
    pub j: usize,
    pub edge: [u32; 2],
}

/// Triangle pairs that share an edge, ordered by (i, j).
pub fn triangle_adjacency(triangles: &[[u32; 3]]) -> Vec<Adjacency> {
    let mut by_edge: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let mut out = Vec::new();
    for ((a, b), tris) in by_edge {
        for x in 0..tris.len() {
            for y in x + 1..tris.len() {
                out.push(Adjacency {
                    i: tris[x].min(tris[y]),
                    j: tris[x].max(tris[y]),
                    edge: [a, b],
                });
            }
        }
    }
    out.sort_by_key(|a| (a.i, a.j, a.edge));
    out
}

/// Costs of the spatio-temporal labeling energy.
#[derive(Clone, Debug)]
pub struct StitchProblem {
    num_cameras: usize,
    num_triangles: usize,
    /// `[frame][triangle][camera]`.
    visibility: Vec<Vec<Vec<TriangleVisibility>>>,
    adjacency: Vec<Adjacency>,
    /// `[frame][adjacency]`: row-major `cameras x cameras`, row = label of `i`.
    edge_costs: Vec<Vec<Arc<[f64]>>>,
}

impl StitchProblem {
    pub fn from_parts(
        num_cameras: usize,
        visibility: Vec<Vec<Vec<TriangleVisibility>>>,
        adjacency: Vec<Adjacency>,
        edge_costs: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if visibility.is_empty() || visibility[0].is_empty() || num_cameras == 0 {
            return Err(Error::Invalid("stitch problem is empty".into()));
        }
        let num_triangles = visibility[0].len();
        for frame in &visibility {
            if frame.len() != num_triangles || frame.iter().any(|t| t.len() != num_cameras) {
                return Err(Error::DimensionMismatch("visibility table is ragged".into()));
            }
            if frame.iter().flatten().any(|v| !(v.area >= 0.0)) {
                return Err(Error::Invalid("projected areas must be non-negative".into()));
            }
        }
        if adjacency.iter().any(|a| a.i >= num_triangles || a.j >= num_triangles || a.i == a.j) {
            return Err(Error::Invalid("adjacency refers to a missing triangle".into()));
        }
        if edge_costs.len() != visibility.len()
            || edge_costs
                .iter()
                .any(|f| f.len() != adjacency.len() || f.iter().any(|m| m.len() != num_cameras * num_cameras))
        {
            return Err(Error::DimensionMismatch("edge cost table does not match adjacency".into()));
        }
        Ok(Self {
            num_cameras,
            num_triangles,
            visibility,
            adjacency,
            edge_costs: edge_costs
                .into_iter()
                .map(|f| f.into_iter().map(Arc::from).collect())
                .collect(),
        })
    }

    /// Visibility, areas and edge colour costs from tracked geometry.
    pub fn from_scene(
        model: &ShapeModel,
        params: &[PoseShapeParams],
        views: &[Vec<CameraView>],
        config: &StitchConfig,
    ) -> Result<Self> {
        config.validate()?;
        if params.len() != views.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter frames for {} image frames",
                params.len(),
                views.len()
            )));
        }
        let num_cameras = views.first().map_or(0, |v| v.len());
        if views.iter().any(|v| v.len() != num_cameras) {
            return Err(Error::DimensionMismatch("camera count changes between frames".into()));
        }
        let adjacency = triangle_adjacency(model.triangles());
        let per_frame: Vec<_> = params
            .par_iter()
            .zip(views.par_iter())
            .enumerate()
            .map(|(f, (p, cams))| -> Result<_> {
                let vertices = model.deform(p).map_err(|e| e.at_frame(f))?;
                let per_cam: Vec<Vec<TriangleVisibility>> = cams
                    .iter()
                    .map(|v| visibility_all(&vertices, model.triangles(), &v.camera))
                    .collect();
                let vis: Vec<Vec<TriangleVisibility>> = (0..model.triangles().len())
                    .map(|t| per_cam.iter().map(|c| c[t]).collect())
                    .collect();
                let costs = adjacency
                    .iter()
                    .map(|adj| {
                        let mut m = vec![0.0; num_cameras * num_cameras];
                        for a in 0..num_cameras {
                            for b in 0..num_cameras {
                                let seen = |c: usize| vis[adj.i][c].visible || vis[adj.j][c].visible;
                                m[a * num_cameras + b] = if a == b {
                                    0.0
                                } else if !seen(a) || !seen(b) {
                                    INF
                                } else {
                                    edge_color_cost(&vertices, adj.edge, &cams[a], &cams[b], config.edge_samples)
                                };
                            }
                        }
                        m
                    })
                    .collect();
                Ok((vis, costs))
            })
            .collect::<Result<_>>()?;
        let (visibility, edge_costs) = per_frame.into_iter().unzip();
        Self::from_parts(num_cameras, visibility, adjacency, edge_costs)
    }

    pub fn num_frames(&self) -> usize {
        self.visibility.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.num_triangles
    }

    pub fn num_cameras(&self) -> usize {
        self.num_cameras
    }

    pub fn adjacency(&self) -> &[Adjacency] {
        &self.adjacency
    }

    pub fn visibility(&self, frame: usize, triangle: usize, camera: usize) -> TriangleVisibility {
        self.visibility[frame][triangle][camera]
    }

    /// Occluded in every camera.
    pub fn hidden_everywhere(&self, frame: usize, triangle: usize) -> bool {
        self.visibility[frame][triangle].iter().all(|v| !v.visible)
    }

    /// `1 - area / sum of visible areas`, or [`INF`] when occluded.
    pub fn data_cost(&self, frame: usize, triangle: usize, camera: usize) -> f64 {
        let vis = &self.visibility[frame][triangle];
        if !vis[camera].visible {
            return INF;
        }
        let total: f64 = vis.iter().filter(|v| v.visible).map(|v| v.area).sum();
        if total > 0.0 {
            1.0 - vis[camera].area / total
        } else {
            0.0
        }
    }

    /// Seam cost between adjacent triangles `i` and `j` labelled `a` and `b`.
    pub fn edge_cost(&self, frame: usize, i: usize, j: usize, a: usize, b: usize) -> Result<f64> {
        let k = self
            .adjacency
            .iter()
            .position(|adj| (adj.i, adj.j) == (i, j) || (adj.i, adj.j) == (j, i))
            .ok_or_else(|| Error::Invalid(format!("triangles {i} and {j} are not adjacent")))?;
        let (a, b) = if self.adjacency[k].i == i { (a, b) } else { (b, a) };
        Ok(self.edge_costs[frame][k][a * self.num_cameras + b])
    }

    fn node(&self, frame: usize, triangle: usize) -> usize {
        frame * self.num_triangles + triangle
    }

    fn to_mrf(&self, config: &StitchConfig) -> MultiLabelProblem {
        let mut mrf = MultiLabelProblem::new(self.num_frames() * self.num_triangles, self.num_cameras);
        for f in 0..self.num_frames() {
            for t in 0..self.num_triangles {
                // Triangles hidden everywhere impose no data term; they are
                // resolved after the solve.
                let hidden = self.hidden_everywhere(f, t);
                for c in 0..self.num_cameras {
                    let cost = if hidden { 0.0 } else { self.data_cost(f, t, c) };
                    mrf.set_unary(self.node(f, t), c, cost);
                }
            }
            for (k, adj) in self.adjacency.iter().enumerate() {
                mrf.add_edge(
                    self.node(f, adj.i),
                    self.node(f, adj.j),
                    PairCost::Table(self.edge_costs[f][k].clone()),
                    config.lambda,
                );
            }
            if f > 0 {
                for t in 0..self.num_triangles {
                    mrf.add_edge(self.node(f - 1, t), self.node(f, t), PairCost::Potts, config.eta);
                }
            }
        }
        mrf
    }
}

/// Colour mismatch along a 3D edge seen from cameras `a` and `b`: `samples`
/// midpoint samples, L2 RGB difference of bilinear lookups, scaled by edge
/// length over the sample count. [`INF`] when a sample is behind a camera.
pub fn edge_color_cost(vertices: &[[f64; 3]], edge: [u32; 2], a: &CameraView, b: &CameraView, samples: usize) -> f64 {
    let p = vertices[edge[0] as usize];
    let q = vertices[edge[1] as usize];
    let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt();
    let mut sum = 0.0;
    for k in 0..samples {
        let s = (k as f64 + 0.5) / samples as f64;
        let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1]), p[2] + s * (q[2] - p[2])];
        let (Ok(pa), Ok(pb)) = (a.camera.project(x), b.camera.project(x)) else {
            return INF;
        };
        let ca = a.image.bilinear(pa[0], pa[1]);
        let cb = b.image.bilinear(pb[0], pb[1]);
        sum += ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2) + (ca[2] - cb[2]).powi(2)).sqrt();
    }
    sum * len / samples as f64
}

/// A triangle occluded in every camera, and the label it was given.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FallbackWarning {
    pub frame: usize,
    pub triangle: usize,
    pub camera: usize,
}

#[derive(Clone, Debug)]
pub struct StitchLabeling {
    /// `[frame][triangle]` source camera.
    pub labels: Vec<Vec<usize>>,
    pub energy: f64,
    pub warnings: Vec<FallbackWarning>,
}

/// Energy of a labeling; triangles hidden everywhere have no data term.
pub fn labeling_energy(problem: &StitchProblem, config: &StitchConfig, labels: &[Vec<usize>]) -> f64 {
    let mut e = 0.0;
    for (f, frame) in labels.iter().enumerate() {
        for (t, &c) in frame.iter().enumerate() {
            if !problem.hidden_everywhere(f, t) {
                e = sat_add(e, problem.data_cost(f, t, c));
            }
        }
        for (k, adj) in problem.adjacency.iter().enumerate() {
            let v = problem.edge_costs[f][k][frame[adj.i] * problem.num_cameras + frame[adj.j]];
            if v >= INF {
                e = INF;
            } else if v > 0.0 {
                e = sat_add(e, config.lambda * v);
            }
        }
        if f > 0 {
            let changes = frame.iter().zip(&labels[f - 1]).filter(|(a, b)| a != b).count();
            e = sat_add(e, config.eta * changes as f64);
        }
    }
    e
}

/// Minimizes the spatio-temporal labeling energy by alpha-expansion.
pub fn solve_labeling(problem: &StitchProblem, config: &StitchConfig) -> Result<StitchLabeling> {
    config.validate()?;
    let mrf = problem.to_mrf(config);
    let solved = alpha_expand(&mrf, &vec![0; mrf.num_nodes()], DEFAULT_MAX_SWEEPS)?;
    let t = problem.num_triangles;
    let mut labels: Vec<Vec<usize>> = solved.labeling.chunks(t).map(|c| c.to_vec()).collect();
    let mut warnings = Vec::new();
    for f in 0..problem.num_frames() {
        for tri in 0..t {
            if !problem.hidden_everywhere(f, tri) {
                continue;
            }
            let camera = if f > 0 {
                labels[f - 1][tri]
            } else {
                let vis = &problem.visibility[f][tri];
                (0..problem.num_cameras)
                    .fold(0, |best, c| if vis[c].area > vis[best].area { c } else { best })
            };
            labels[f][tri] = camera;
            warnings.push(FallbackWarning { frame: f, triangle: tri, camera });
        }
    }
    if !warnings.is_empty() {
        log::warn!("{} triangle-frames are occluded in every camera", warnings.len());
    }
    let energy = labeling_energy(problem, config, &labels);
    Ok(StitchLabeling {
        labels,
        energy,
        warnings,
    })
}
