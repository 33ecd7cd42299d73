//! Fitting the articulated body model to a target sequence, followed by a
//! free-form refinement that yields the registered mesh of every frame.

mod correspond;
mod energy;
mod nearest;
mod refine;

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use correspond::{build_correspondences, reverse_correspondences, supersample, uv_sphere, Correspondence, Stage, SurfaceSample};
pub use energy::{energy, Energy, EnergyTerms};
pub use nearest::{closest_point_on_triangle, Hit, NearestIndex, Target};

use crate::body::{BodyModel, PoseParams, ShapeParams};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::geometry::Vec3;
use crate::mesh::Mesh;
use energy::{Problem, ResolvedLimit};
use refine::RefineParams;

pub const ANCHORS_FORMAT: &str = "eigen-avatar/anchors";
pub const REPORT_FORMAT: &str = "eigen-avatar/registration-report";
pub const FILE_VERSION: u32 = 1;

/// A model vertex pinned to a target position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub vertex: usize,
    pub point: Vec3,
}

/// Allowed range of the axis-angle components of one named joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub joint: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub alpha: f64,
    pub beta: f64,
    pub limit_weight: f64,
    pub joint_limits: Vec<JointLimit>,
    pub temporal_weight: f64,
    pub shape_weight: f64,
    pub smoothness_weight: f64,
    pub max_iterations: usize,
    /// Relative energy change below which an optimization stops.
    pub tolerance: f64,
    /// Subdivisions per triangle edge in the supersampled stage.
    pub density: usize,
    /// Confidence of the model-sample pairs in the supersampled stage.
    /// Every target point is also paired with its closest model surface
    /// point at confidence 1.
    pub sample_confidence: f64,
    pub rebuild_every: usize,
    pub refine_rounds: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 1.0,
            limit_weight: 10.0,
            joint_limits: Vec::new(),
            temporal_weight: 1e-3,
            shape_weight: 1e-4,
            smoothness_weight: 0.5,
            max_iterations: 100,
            tolerance: 1e-8,
            density: 2,
            sample_confidence: 0.1,
            rebuild_every: 5,
            refine_rounds: 3,
        }
    }
}

impl RegistrationConfig {
    /// Default weights plus elbow and knee limits for the standard
    /// procedural body (see [`crate::synth`]).
    pub fn with_standard_limits() -> Self {
        let lim = |joint: &str, min: [f64; 3], max: [f64; 3]| JointLimit {
            joint: joint.into(),
            min,
            max,
        };
        Self {
            joint_limits: vec![
                lim("l_knee", [-0.05, -0.05, -0.05], [2.6, 0.05, 0.05]),
                lim("r_knee", [-0.05, -0.05, -0.05], [2.6, 0.05, 0.05]),
                lim("l_elbow", [-0.05, -2.6, -0.05], [0.05, 0.05, 0.05]),
                lim("r_elbow", [-0.05, -0.05, -0.05], [0.05, 2.6, 0.05]),
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("limit_weight", self.limit_weight),
            ("temporal_weight", self.temporal_weight),
            ("shape_weight", self.shape_weight),
            ("smoothness_weight", self.smoothness_weight),
            ("sample_confidence", self.sample_confidence),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Configuration(format!("{name} must be a finite value >= 0, got {w}")));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Configuration(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 || self.density == 0 || self.rebuild_every == 0 {
            return Err(Error::Configuration(
                "max_iterations, density and rebuild_every must be >= 1".into(),
            ));
        }
        for l in &self.joint_limits {
            if (0..3).any(|c| !(l.min[c] <= l.max[c])) {
                return Err(Error::Configuration(format!("joint limit for {} has min > max", l.joint)));
            }
        }
        Ok(())
    }

    pub(crate) fn resolve_limits(&self, model: &BodyModel) -> Result<Vec<ResolvedLimit>> {
        self.joint_limits
            .iter()
            .map(|l| {
                let joint = model
                    .skeleton()
                    .joint_index(&l.joint)
                    .ok_or_else(|| Error::Configuration(format!("joint limit names unknown joint {:?}", l.joint)))?;
                Ok(ResolvedLimit {
                    joint,
                    min: l.min,
                    max: l.max,
                })
            })
            .collect()
    }
}

/// Energies of one optimization stage. `energies[0]` is the starting
/// energy; every further entry is an accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: String,
    pub energies: Vec<f64>,
    pub terms: EnergyTerms,
    pub iterations: usize,
    pub converged: bool,
}

impl StageTrace {
    pub fn is_non_increasing(&self) -> bool {
        self.energies.windows(2).all(|w| w[1] <= w[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub frame: usize,
    pub stages: Vec<StageTrace>,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub poses: Vec<PoseParams>,
    pub shape: ShapeParams,
    pub meshes: Vec<Mesh>,
    pub traces: Vec<FrameTrace>,
}

impl RegistrationResult {
    pub fn all_traces_non_increasing(&self) -> bool {
        self.traces.iter().flat_map(|f| &f.stages).all(StageTrace::is_non_increasing)
    }
}

struct Optimizer<'a> {
    model: &'a BodyModel,
    config: &'a RegistrationConfig,
    frame: usize,
    anchors: &'a [Anchor],
    prev: Option<&'a PoseParams>,
    optimize_shape: bool,
}

type Rebuild<'r> = &'r mut dyn FnMut(&Mesh) -> Result<Vec<Correspondence>>;

impl Optimizer<'_> {
    fn eval(
        &self,
        pose: &PoseParams,
        shape: &ShapeParams,
        corr: &[Correspondence],
        jac: bool,
    ) -> Result<(EnergyTerms, Option<energy::Normal>)> {
        let p = Problem::new(self.model, self.anchors, corr, self.prev, self.config)?;
        Ok(p.evaluate(pose, shape, jac))
    }

    fn failure(&self, message: &str, trace: &[f64]) -> Error {
        Error::OptimizationFailure {
            frame: self.frame,
            message: message.to_string(),
            trace: trace.to_vec(),
        }
    }

    /// Damped Gauss-Newton with multiplicative damping updates.
    /// Correspondences, when a rebuild function is given, are refreshed every
    /// `rebuild_every` iterations and before convergence is accepted; a
    /// refresh that would raise the energy is discarded.
    fn run(
        &self,
        stage: &str,
        pose: PoseParams,
        shape: ShapeParams,
        mut rebuild: Option<Rebuild<'_>>,
    ) -> Result<(PoseParams, ShapeParams, StageTrace)> {
        let layout = self.model.layout();
        let n = layout.len();
        let mut x = layout.pack(&pose, &shape);
        let mut corr = match rebuild.as_mut() {
            Some(f) => f(&self.model.pose_vertices_unchecked(&pose, &shape))?,
            None => Vec::new(),
        };
        let (mut terms, normal) = self.eval(&pose, &shape, &corr, true)?;
        let mut normal = normal.expect("jacobian");
        let mut e = terms.total();
        let mut trace = vec![e];
        if !e.is_finite() {
            return Err(self.failure("non-finite starting energy", &trace));
        }
        let frozen: Vec<usize> = if self.optimize_shape {
            Vec::new()
        } else {
            (0..layout.shapes).map(|m| layout.shape(m)).collect()
        };
        let mut lambda = 1e-3;
        let mut converged = false;
        let mut iterations = 0;
        let mut since_rebuild = 0;
        while iterations < self.config.max_iterations {
            iterations += 1;
            if e <= 1e-30 {
                converged = true;
                break;
            }
            let mut a = normal.jtj.clone();
            let mut g = -normal.jtr.clone();
            let dmax = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-12);
            for i in 0..n {
                let d = a[(i, i)].max(1e-9 * dmax);
                a[(i, i)] += lambda * d;
            }
            for &i in &frozen {
                for j in 0..n {
                    a[(i, j)] = 0.0;
                    a[(j, i)] = 0.0;
                }
                a[(i, i)] = 1.0;
                g[i] = 0.0;
            }
            let step: Option<DVector<f64>> = a.cholesky().map(|c| c.solve(&g));
            let mut accepted = false;
            if let Some(step) = step {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let (tp, ts) = layout.unpack(&trial);
                let (tt, _) = self.eval(&tp, &ts, &corr, false)?;
                let te = tt.total();
                if te.is_finite() && te <= e {
                    let rel = (e - te) / e.max(1e-300);
                    x = trial;
                    e = te;
                    trace.push(e);
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    let (t2, n2) = self.eval(&tp, &ts, &corr, true)?;
                    terms = t2;
                    normal = n2.expect("jacobian");
                    since_rebuild += 1;
                    if rel < self.config.tolerance {
                        converged = true;
                    }
                }
            }
            if !accepted {
                lambda *= 4.0;
                if lambda > 1e12 {
                    // No descent step at any damping: treat as a stationary
                    // point of the current correspondence set.
                    converged = true;
                }
            }
            let refresh = rebuild.is_some() && (converged || since_rebuild >= self.config.rebuild_every);
            if refresh {
                since_rebuild = 0;
                let (p, s) = layout.unpack(&x);
                let fresh = rebuild.as_mut().expect("rebuild")(&self.model.pose_vertices_unchecked(&p, &s))?;
                let (ft, fnorm) = self.eval(&p, &s, &fresh, true)?;
                let fe = ft.total();
                if fe.is_finite() && fe <= e {
                    let rel = (e - fe) / e.max(1e-300);
                    corr = fresh;
                    if fe < e {
                        trace.push(fe);
                    }
                    e = fe;
                    terms = ft;
                    normal = fnorm.expect("jacobian");
                    if converged && rel >= self.config.tolerance {
                        converged = false;
                        lambda = lambda.min(1e-3);
                    }
                }
            }
            if converged {
                break;
            }
        }
        if !e.is_finite() {
            return Err(self.failure("energy became non-finite", &trace));
        }
        let (pose, shape) = layout.unpack(&x);
        log::debug!("frame {} {stage}: {} iterations, energy {e:.3e}", self.frame, iterations);
        Ok((
            pose,
            shape,
            StageTrace {
                stage: stage.to_string(),
                energies: trace,
                terms,
                iterations,
                converged,
            },
        ))
    }
}

fn check_anchors(model: &BodyModel, anchors: &[Anchor]) -> Result<()> {
    let n = model.template().vertex_count();
    if let Some(a) = anchors.iter().find(|a| a.vertex >= n) {
        return Err(Error::param(format!("anchor vertex {} >= {n}", a.vertex)));
    }
    if anchors.len() < 3 {
        return Err(Error::DegenerateInput(format!("{} anchors; at least 3 are needed", anchors.len())));
    }
    let pts: Vec<Vec3> = anchors.iter().map(|a| a.point).collect();
    let scale = crate::geometry::bbox_diagonal(&pts);
    let p0 = pts[0];
    let p1 = *pts
        .iter()
        .max_by(|a, b| (*a - p0).norm().total_cmp(&(*b - p0).norm()))
        .expect("non-empty");
    let axis = p1 - p0;
    let spread = pts
        .iter()
        .map(|p| {
            if axis.norm() > 0.0 {
                (p - p0).cross(&axis).norm() / axis.norm()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    if !(scale > 0.0) || spread <= 1e-9 * scale {
        return Err(Error::DegenerateInput("anchors are collinear".into()));
    }
    Ok(())
}

fn initial_fit_traced(model: &BodyModel, anchors: &[Anchor], config: &RegistrationConfig) -> Result<(PoseParams, ShapeParams, StageTrace)> {
    config.validate()?;
    check_anchors(model, anchors)?;
    let rest = model.template().vertices();
    let k = anchors.len() as f64;
    let target_c = anchors.iter().map(|a| a.point).sum::<Vec3>() / k;
    let model_c = anchors.iter().map(|a| rest[a.vertex]).sum::<Vec3>() / k;
    let mut pose = PoseParams::identity(model.joint_count());
    pose.translation = target_c - model_c;
    let opt = Optimizer {
        model,
        config,
        frame: 0,
        anchors,
        prev: None,
        optimize_shape: true,
    };
    opt.run("anchors", pose, ShapeParams::zeros(model.shape_count()), None)
}

/// Pose and shape minimizing the anchor term plus the limit and shape
/// penalties, starting from the rest pose translated onto the anchors.
pub fn initial_fit(model: &BodyModel, anchors: &[Anchor], config: &RegistrationConfig) -> Result<(PoseParams, ShapeParams)> {
    let (p, s, _) = initial_fit_traced(model, anchors, config)?;
    Ok((p, s))
}

/// Linear extrapolation of the two previous poses, used as a warm start.
fn predict(prev: &PoseParams, before: Option<&PoseParams>) -> PoseParams {
    match before {
        None => prev.clone(),
        Some(b) => PoseParams {
            rotations: prev.rotations.iter().zip(&b.rotations).map(|(p, q)| p * 2.0 - q).collect(),
            translation: prev.translation * 2.0 - b.translation,
        },
    }
}

fn dense_correspondences(mesh: &Mesh, index: &NearestIndex, config: &RegistrationConfig) -> Result<Vec<Correspondence>> {
    let mut out = build_correspondences(mesh, index, Stage::Supersampled, config.density)?;
    for c in &mut out {
        c.confidence = config.sample_confidence;
    }
    out.extend(reverse_correspondences(mesh, index.target())?);
    Ok(out)
}

/// Registers every target frame. Frame 0 runs the anchor fit, the
/// boundary stage and the supersampled stage with the shape free; later
/// frames start from the previous poses, keep the shape fixed and run the
/// supersampled stage with the temporal term. Each frame ends with a
/// free-form refinement.
pub fn register_sequence(
    model: &BodyModel,
    targets: &[Target],
    anchors: &[Anchor],
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    config.validate()?;
    if targets.is_empty() {
        return Err(Error::param("empty target sequence"));
    }
    config.resolve_limits(model)?;
    let mut poses: Vec<PoseParams> = Vec::with_capacity(targets.len());
    let mut meshes = Vec::with_capacity(targets.len());
    let mut traces = Vec::with_capacity(targets.len());
    let mut shape = ShapeParams::zeros(model.shape_count());
    let refine_params = RefineParams {
        beta: config.beta.max(1e-12),
        smoothness: config.smoothness_weight,
        rounds: config.refine_rounds,
    };
    for (f, target) in targets.iter().enumerate() {
        let index = NearestIndex::new(target.clone())?;
        let mut stages = Vec::new();
        let pose = if f == 0 {
            let (p, s, t) = initial_fit_traced(model, anchors, config)?;
            stages.push(t);
            let opt = Optimizer {
                model,
                config,
                frame: 0,
                anchors,
                prev: None,
                optimize_shape: true,
            };
            let mut boundary = |m: &Mesh| build_correspondences(m, &index, Stage::Boundary, 1);
            let (p, s, t) = opt.run("boundary", p, s, Some(&mut boundary))?;
            stages.push(t);
            let mut dense = |m: &Mesh| dense_correspondences(m, &index, config);
            let (p, s, t) = opt.run("supersampled", p, s, Some(&mut dense))?;
            stages.push(t);
            shape = s;
            p
        } else {
            let prev = &poses[f - 1];
            let start = predict(prev, if f >= 2 { Some(&poses[f - 2]) } else { None });
            let opt = Optimizer {
                model,
                config,
                frame: f,
                anchors: &[],
                prev: Some(prev),
                optimize_shape: false,
            };
            let mut dense = |m: &Mesh| dense_correspondences(m, &index, config);
            let (p, _, t) = opt.run("supersampled", start, shape.clone(), Some(&mut dense))?;
            stages.push(t);
            p
        };
        let naked = model.pose_vertices_unchecked(&pose, &shape);
        let (registered, energies, smooth) = refine::refine(&naked, &index, refine_params);
        stages.push(StageTrace {
            stage: "refine".into(),
            terms: EnergyTerms {
                correspondence: energies.last().copied().unwrap_or(0.0) - smooth,
                smoothness: smooth,
                ..EnergyTerms::default()
            },
            iterations: energies.len().saturating_sub(1),
            energies,
            converged: true,
        });
        log::info!("registered frame {f}");
        poses.push(pose.canonical());
        meshes.push(registered);
        traces.push(FrameTrace { frame: f, stages });
    }
    Ok(RegistrationResult {
        poses,
        shape,
        meshes,
        traces,
    })
}

/// Deterministic anchor choice: `per_part` vertices of each part by
/// farthest-point sampling on the template, seeded with the vertex
/// farthest from the part centroid.
pub fn select_anchor_vertices(model: &BodyModel, per_part: usize) -> Vec<usize> {
    let verts = model.template().vertices();
    let mut out = Vec::new();
    for part in model.template().part_vertices(model.part_count()) {
        if part.is_empty() || per_part == 0 {
            continue;
        }
        let c = part.iter().map(|&v| verts[v]).sum::<Vec3>() / part.len() as f64;
        let far = |from: &dyn Fn(usize) -> f64| {
            part.iter()
                .copied()
                .max_by(|&a, &b| from(a).total_cmp(&from(b)).then(b.cmp(&a)))
                .expect("non-empty part")
        };
        let mut chosen = vec![far(&|v| (verts[v] - c).norm())];
        while chosen.len() < per_part.min(part.len()) {
            let next = far(&|v| chosen.iter().map(|&u| (verts[v] - verts[u]).norm()).fold(f64::INFINITY, f64::min));
            chosen.push(next);
        }
        out.extend(chosen);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct AnchorFile {
    format: String,
    version: u32,
    anchors: Vec<Anchor>,
}

pub fn save_anchors(anchors: &[Anchor], path: &Path) -> Result<()> {
    fsutil::write_json(
        path,
        &AnchorFile {
            format: ANCHORS_FORMAT.into(),
            version: FILE_VERSION,
            anchors: anchors.to_vec(),
        },
        "anchor file",
    )
}

pub fn load_anchors(path: &Path) -> Result<Vec<Anchor>> {
    let text = fsutil::read_to_string(path, "anchor file")?;
    let file: AnchorFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if file.format != ANCHORS_FORMAT {
        return Err(Error::Format(format!("{} is not an anchor file", path.display())));
    }
    if file.version != FILE_VERSION {
        return Err(Error::VersionMismatch {
            found: file.version,
            expected: FILE_VERSION,
        });
    }
    Ok(file.anchors)
}

#[derive(Serialize)]
struct ReportFrame<'a> {
    frame: usize,
    pose: &'a PoseParams,
    stages: &'a [StageTrace],
}

#[derive(Serialize)]
struct Report<'a> {
    format: &'static str,
    version: u32,
    shape: &'a ShapeParams,
    frames: Vec<ReportFrame<'a>>,
}

/// Per-frame energy traces and final parameters as JSON.
pub fn write_report(result: &RegistrationResult, path: &Path) -> Result<()> {
    let report = Report {
        format: REPORT_FORMAT,
        version: FILE_VERSION,
        shape: &result.shape,
        frames: result
            .traces
            .iter()
            .zip(&result.poses)
            .map(|(t, pose)| ReportFrame {
                frame: t.frame,
                pose,
                stages: &t.stages,
            })
            .collect(),
    };
    fsutil::write_json(path, &report, "registration report")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::tests::two_bone_model;

    #[test]
    fn too_few_anchors_are_degenerate() {
        let m = two_bone_model();
        let v = m.template().vertices();
        let two: Vec<Anchor> = (0..2).map(|i| Anchor { vertex: i, point: v[i] }).collect();
        assert!(matches!(
            initial_fit(&m, &two, &RegistrationConfig::default()),
            Err(Error::DegenerateInput(_))
        ));
        let line: Vec<Anchor> = (0..3)
            .map(|i| Anchor {
                vertex: i,
                point: Vec3::new(i as f64, 0.0, 0.0),
            })
            .collect();
        assert!(matches!(
            initial_fit(&m, &line, &RegistrationConfig::default()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn rest_anchors_give_identity() {
        let m = two_bone_model();
        let v = m.template().vertices();
        let anchors: Vec<Anchor> = (0..5).map(|i| Anchor { vertex: i, point: v[i] }).collect();
        let (pose, shape) = initial_fit(&m, &anchors, &RegistrationConfig::default()).unwrap();
        for r in &pose.rotations {
            assert!(r.norm() < 1e-6);
        }
        assert!(pose.translation.norm() < 1e-6);
        assert!(shape.coeffs[0].abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        let mut c = RegistrationConfig::default();
        c.tolerance = 0.0;
        assert!(matches!(c.validate(), Err(Error::Configuration(_))));
        let mut c = RegistrationConfig::default();
        c.alpha = -1.0;
        assert!(c.validate().is_err());
        let c: RegistrationConfig = serde_json::from_str(r#"{"alpha": 3.0}"#).unwrap();
        assert_eq!(c.alpha, 3.0);
        assert_eq!(c.beta, 1.0);
        let m = two_bone_model();
        let mut c = RegistrationConfig::default();
        c.joint_limits.push(JointLimit {
            joint: "nope".into(),
            min: [0.0; 3],
            max: [0.0; 3],
        });
        assert!(matches!(c.resolve_limits(&m), Err(Error::Configuration(_))));
    }

    #[test]
    fn anchor_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let anchors = vec![Anchor {
            vertex: 3,
            point: Vec3::new(0.1, 0.2, 0.3),
        }];
        save_anchors(&anchors, &path).unwrap();
        assert_eq!(load_anchors(&path).unwrap(), anchors);
    }
}
