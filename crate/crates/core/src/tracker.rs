//! Gauss-Newton pose and shape tracking against landmarks and a photometric
//! reference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face::{visibility_all, CameraView, Landmark, PoseShapeParams, ShapeModel};
use crate::image::Raster;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Landmark term weight.
    pub lambda: f64,
    /// Shape regularization weight.
    pub gamma: f64,
    pub samples_per_triangle: usize,
    pub max_iterations: usize,
    /// Stop once the accepted update norm falls below this.
    pub tolerance: f64,
    pub backtracking_steps: usize,
    /// Central-difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 0.1,
            samples_per_triangle: 4,
            max_iterations: 20,
            tolerance: 1e-9,
            backtracking_steps: 10,
            fd_step: 1e-6,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::Invalid("tracker weights must be non-negative".into()));
        }
        if self.max_iterations == 0 || self.samples_per_triangle == 0 || !(self.fd_step > 0.0) {
            return Err(Error::Invalid(
                "tracker needs at least one iteration, one sample per triangle and a positive step".into(),
            ));
        }
        Ok(())
    }
}

/// Neutral-frame registration plus the images photometric residuals compare
/// against.
#[derive(Clone, Debug)]
pub struct ReferenceFrame {
    pub params: PoseShapeParams,
    pub textures: Vec<Raster>,
    vertices: Vec<[f64; 3]>,
    /// `[camera][triangle]`: visible in the reference frame.
    visible: Vec<Vec<bool>>,
}

impl ReferenceFrame {
    pub fn new(model: &ShapeModel, params: PoseShapeParams, views: &[CameraView]) -> Result<Self> {
        let vertices = model.deform(&params)?;
        let visible = views
            .iter()
            .map(|v| {
                visibility_all(&vertices, model.triangles(), &v.camera)
                    .into_iter()
                    .map(|t| t.visible)
                    .collect()
            })
            .collect();
        Ok(Self {
            params,
            textures: views.iter().map(|v| v.image.clone()).collect(),
            vertices,
            visible,
        })
    }

    fn color(&self, views: &[CameraView], cam: usize, tri: &[u32; 3], bary: [f64; 3]) -> Option<[f64; 3]> {
        let p = surface_point(&self.vertices, tri, bary);
        let px = views[cam].camera.project(p).ok()?;
        Some(self.textures.get(cam)?.bilinear(px[0], px[1]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyTerms {
    pub total: f64,
    pub landmark: f64,
    pub image: f64,
    pub regularizer: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub step_norm: f64,
    pub backtracks: usize,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct FrameFit {
    pub params: PoseShapeParams,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub log: Vec<IterationRecord>,
}

/// Barycentric sample points: centroids of the sub-triangles of an
/// `m`-fold subdivision, `m = ceil(sqrt(k))`, first `k` taken.
pub fn sample_barycentrics(k: usize) -> Vec<[f64; 3]> {
    let m = (k as f64).sqrt().ceil().max(1.0) as usize;
    let mf = m as f64;
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m - i {
            let (u, v) = ((i as f64 + 1.0 / 3.0) / mf, (j as f64 + 1.0 / 3.0) / mf);
            out.push([1.0 - u - v, u, v]);
            if i + j + 1 < m {
                let (u, v) = ((i as f64 + 2.0 / 3.0) / mf, (j as f64 + 2.0 / 3.0) / mf);
                out.push([1.0 - u - v, u, v]);
            }
        }
    }
    out.truncate(k);
    out
}

fn surface_point(vertices: &[[f64; 3]], tri: &[u32; 3], bary: [f64; 3]) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (k, &v) in tri.iter().enumerate() {
        for (a, pa) in p.iter_mut().enumerate() {
            *pa += bary[k] * vertices[v as usize][a];
        }
    }
    p
}

/// `(camera, triangle)` pairs contributing photometric residuals.
fn photometric_set(
    model: &ShapeModel,
    vertices: &[[f64; 3]],
    views: &[CameraView],
    reference: Option<&ReferenceFrame>,
) -> Vec<(usize, usize)> {
    let Some(reference) = reference else {
        return Vec::new();
    };
    let mut set = Vec::new();
    for (c, view) in views.iter().enumerate() {
        let Some(ref_vis) = reference.visible.get(c) else {
            continue;
        };
        for (t, vis) in visibility_all(vertices, model.triangles(), &view.camera).iter().enumerate() {
            if vis.visible && ref_vis[t] {
                set.push((c, t));
            }
        }
    }
    set
}

fn validate_landmarks(model: &ShapeModel, views: &[CameraView]) -> Result<()> {
    let n = model.num_vertices();
    for (c, view) in views.iter().enumerate() {
        if let Some(l) = view.landmarks.iter().find(|l| l.vertex >= n) {
            return Err(Error::Invalid(format!("camera {c}: landmark vertex {} >= {n}", l.vertex)));
        }
    }
    Ok(())
}

/// Residual vector whose squared norm is the total energy, for a fixed
/// photometric sample set.
struct Residuals<'a> {
    model: &'a ShapeModel,
    views: &'a [CameraView],
    reference: Option<&'a ReferenceFrame>,
    config: &'a TrackerConfig,
    samples: Vec<(usize, usize)>,
    bary: Vec<[f64; 3]>,
}

impl Residuals<'_> {
    fn eval(&self, params: &PoseShapeParams) -> Result<Vec<f64>> {
        let vertices = self.model.deform(params)?;
        let mut r = Vec::new();
        let sl = self.config.lambda.sqrt();
        for view in self.views {
            for l in &view.landmarks {
                let p = view.camera.project(vertices[l.vertex])?;
                r.push(sl * (p[0] - l.x));
                r.push(sl * (p[1] - l.y));
            }
        }
        if let Some(reference) = self.reference {
            let tris = self.model.triangles();
            for &(c, t) in &self.samples {
                for &bary in &self.bary {
                    let Some(target) = reference.color(self.views, c, &tris[t], bary) else {
                        continue;
                    };
                    let p = self.views[c].camera.project(surface_point(&vertices, &tris[t], bary))?;
                    let got = self.views[c].image.bilinear(p[0], p[1]);
                    for ch in 0..3 {
                        r.push(got[ch] - target[ch]);
                    }
                }
            }
        }
        let sg = self.config.gamma.sqrt();
        r.extend(params.b.iter().map(|b| sg * b));
        Ok(r)
    }

    fn jacobian(&self, params: &PoseShapeParams, rows: usize) -> Result<DMatrix<f64>> {
        let x = params.to_vec();
        let h = self.config.fd_step;
        let mut jac = DMatrix::zeros(rows, x.len());
        for k in 0..x.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[k] += h;
            minus[k] -= h;
            let rp = self.eval(&PoseShapeParams::from_slice(&plus))?;
            let rm = self.eval(&PoseShapeParams::from_slice(&minus))?;
            if rp.len() != rows || rm.len() != rows {
                return Err(Error::Degenerate("photometric samples left the reference view".into()));
            }
            for i in 0..rows {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

/// Energy terms at `params`. Without a reference the image term is 0.
pub fn energy(
    model: &ShapeModel,
    params: &PoseShapeParams,
    views: &[CameraView],
    reference: Option<&ReferenceFrame>,
    config: &TrackerConfig,
) -> Result<EnergyTerms> {
    validate_landmarks(model, views)?;
    let vertices = model.deform(params)?;
    let samples = photometric_set(model, &vertices, views, reference);
    let bary = sample_barycentrics(config.samples_per_triangle);
    let mut landmark = 0.0;
    let mut count = 0usize;
    for view in views {
        for l in &view.landmarks {
            let p = view.camera.project(vertices[l.vertex])?;
            landmark += (p[0] - l.x).powi(2) + (p[1] - l.y).powi(2);
            count += 1;
        }
    }
    let mut image = 0.0;
    if let Some(reference) = reference {
        let tris = model.triangles();
        for &(c, t) in &samples {
            for &bc in &bary {
                let Some(target) = reference.color(views, c, &tris[t], bc) else {
                    continue;
                };
                let p = views[c].camera.project(surface_point(&vertices, &tris[t], bc))?;
                let got = views[c].image.bilinear(p[0], p[1]);
                image += (0..3).map(|ch| (got[ch] - target[ch]).powi(2)).sum::<f64>();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::UndefinedEnergy);
    }
    let regularizer: f64 = params.b.iter().map(|b| b * b).sum();
    Ok(EnergyTerms {
        total: image + config.lambda * landmark + config.gamma * regularizer,
        landmark,
        image,
        regularizer,
    })
}

fn gauss_newton(
    model: &ShapeModel,
    views: &[CameraView],
    reference: Option<&ReferenceFrame>,
    config: &TrackerConfig,
    init: PoseShapeParams,
) -> Result<FrameFit> {
    config.validate()?;
    let total = |p: &PoseShapeParams| energy(model, p, views, reference, config).map(|e| e.total);
    let mut params = init;
    let initial_energy = total(&params)?;
    let mut current = initial_energy;
    let mut log = Vec::new();
    let bary = sample_barycentrics(config.samples_per_triangle);
    for iteration in 0..config.max_iterations {
        let vertices = model.deform(&params)?;
        let residuals = Residuals {
            model,
            views,
            reference,
            config,
            samples: photometric_set(model, &vertices, views, reference),
            bary: bary.clone(),
        };
        let r = DVector::from_vec(residuals.eval(&params)?);
        let jac = residuals.jacobian(&params, r.len())?;
        let normal = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let eig = normal.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.max();
        if !(eig.eigenvalues.min() > 1e-12 * max_eig.max(1e-300)) {
            return Err(Error::Degenerate(format!(
                "normal equations are rank deficient (eigenvalues {:.3e} .. {:.3e})",
                eig.eigenvalues.min(),
                max_eig
            )));
        }
        let step = normal
            .cholesky()
            .ok_or_else(|| Error::Degenerate("normal equations are not positive definite".into()))?
            .solve(&(-grad));
        let base = params.to_vec();
        let mut scale = 1.0;
        let mut accepted = None;
        let mut backtracks = 0;
        for _ in 0..=config.backtracking_steps {
            let trial: Vec<f64> = base.iter().zip(step.iter()).map(|(x, d)| x + scale * d).collect();
            let trial = PoseShapeParams::from_slice(&trial);
            if let Ok(e) = total(&trial) {
                if e <= current {
                    accepted = Some((trial, e));
                    break;
                }
            }
            scale *= 0.5;
            backtracks += 1;
        }
        let step_norm = scale * step.norm();
        match accepted {
            Some((trial, e)) => {
                log.push(IterationRecord {
                    iteration,
                    energy_before: current,
                    energy_after: e,
                    step_norm,
                    backtracks,
                    accepted: true,
                });
                log::debug!("GN iteration {iteration}: energy {current:.6e} -> {e:.6e}, step {step_norm:.3e}");
                params = trial;
                current = e;
                if step_norm < config.tolerance {
                    break;
                }
            }
            None => {
                log.push(IterationRecord {
                    iteration,
                    energy_before: current,
                    energy_after: current,
                    step_norm: 0.0,
                    backtracks,
                    accepted: false,
                });
                break;
            }
        }
    }
    Ok(FrameFit {
        params,
        initial_energy,
        final_energy: current,
        log,
    })
}

/// Registers the model to the neutral frame using landmarks and shape
/// regularization only.
pub fn register_neutral(model: &ShapeModel, views: &[CameraView], config: &TrackerConfig) -> Result<FrameFit> {
    validate_landmarks(model, views)?;
    let total: usize = views.iter().map(|v| v.landmarks.len()).sum();
    if total < 6 {
        return Err(Error::Degenerate(format!("{total} landmark correspondences, at least 6 needed")));
    }
    gauss_newton(model, views, None, config, PoseShapeParams::zero(model.num_basis()))
}

/// Landmark and photometric refinement of one frame from `init`.
pub fn fit_frame(
    model: &ShapeModel,
    views: &[CameraView],
    reference: &ReferenceFrame,
    config: &TrackerConfig,
    init: PoseShapeParams,
) -> Result<FrameFit> {
    validate_landmarks(model, views)?;
    gauss_newton(model, views, Some(reference), config, init)
}

/// Tracks frames in order, warm-starting each from the previous solution
/// (the first from the reference registration).
pub fn track_sequence(
    model: &ShapeModel,
    frames: &[Vec<CameraView>],
    reference: &ReferenceFrame,
    config: &TrackerConfig,
) -> Result<Vec<FrameFit>> {
    let mut out: Vec<FrameFit> = Vec::with_capacity(frames.len());
    for (index, views) in frames.iter().enumerate() {
        let init = out.last().map_or_else(|| reference.params.clone(), |f| f.params.clone());
        let fit = fit_frame(model, views, reference, config, init).map_err(|e| e.at_frame(index))?;
        log::info!(
            "frame {index}: energy {:.6e} -> {:.6e} in {} iterations",
            fit.initial_energy,
            fit.final_energy,
            fit.log.len()
        );
        out.push(fit);
    }
    Ok(out)
}

/// One landmark record of the per-frame landmark JSON.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkRecord {
    pub camera: usize,
    pub vertex: usize,
    pub x: f64,
    pub y: f64,
}

/// Groups landmark records by camera.
pub fn landmarks_by_camera(records: &[LandmarkRecord], cameras: usize) -> Result<Vec<Vec<Landmark>>> {
    let mut out = vec![Vec::new(); cameras];
    for r in records {
        let slot = out
            .get_mut(r.camera)
            .ok_or_else(|| Error::Invalid(format!("landmark refers to camera {} of {cameras}", r.camera)))?;
        slot.push(Landmark {
            vertex: r.vertex,
            x: r.x,
            y: r.y,
        });
    }
    Ok(out)
}
