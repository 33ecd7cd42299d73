//! Registration energy as a sum of squared residuals with analytic
//! Jacobians over the packed `(translation, rotations, shape)` vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Anchor, Correspondence, RegistrationConfig};
use crate::body::{BodyModel, ParamLayout, PoseParams, ShapeParams};
use crate::error::{Error, Result};
use crate::geometry::{exp_so3, log_so3, right_jacobian, right_jacobian_inv, Vec3};

/// Per-term breakdown of the energy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub anchor: f64,
    pub correspondence: f64,
    pub limits: f64,
    pub temporal: f64,
    pub shape: f64,
    pub smoothness: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.anchor + self.correspondence + self.limits + self.temporal + self.shape + self.smoothness
    }
}

#[derive(Debug, Clone)]
pub struct Energy {
    pub value: f64,
    pub terms: EnergyTerms,
    /// Gradient in [`ParamLayout`] order.
    pub gradient: Vec<f64>,
}

/// Limit on the three axis-angle components of one joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ResolvedLimit {
    pub joint: usize,
    pub min: [f64; 3],
    pub max: [f64; 3],
}

pub(crate) struct Problem<'a> {
    pub model: &'a BodyModel,
    pub anchors: &'a [Anchor],
    pub correspondences: &'a [Correspondence],
    pub prev: Option<&'a PoseParams>,
    pub limits: Vec<ResolvedLimit>,
    pub config: &'a RegistrationConfig,
}

/// Normal equations `J^T J`, `J^T r` accumulated row by row.
pub(crate) struct Normal {
    pub jtj: DMatrix<f64>,
    pub jtr: DVector<f64>,
}

impl Normal {
    fn new(n: usize) -> Self {
        Self {
            jtj: DMatrix::zeros(n, n),
            jtr: DVector::zeros(n),
        }
    }

    fn add_row(&mut self, entries: &[(usize, f64)], r: f64) {
        for &(a, va) in entries {
            self.jtr[a] += va * r;
            for &(b, vb) in entries {
                self.jtj[(a, b)] += va * vb;
            }
        }
    }
}

/// Hinge residual of `value` against `[lo, hi]`.
fn hinge(value: f64, lo: f64, hi: f64) -> f64 {
    if value > hi {
        value - hi
    } else if value < lo {
        value - lo
    } else {
        0.0
    }
}

impl<'a> Problem<'a> {
    pub fn new(
        model: &'a BodyModel,
        anchors: &'a [Anchor],
        correspondences: &'a [Correspondence],
        prev: Option<&'a PoseParams>,
        config: &'a RegistrationConfig,
    ) -> Result<Self> {
        let n = model.template().vertex_count();
        if let Some(a) = anchors.iter().find(|a| a.vertex >= n) {
            return Err(Error::param(format!("anchor vertex {} >= {n}", a.vertex)));
        }
        for c in correspondences {
            if c.vertices.iter().any(|&v| v >= n) {
                return Err(Error::param(format!("correspondence vertex out of range {:?}", c.vertices)));
            }
        }
        if let Some(p) = prev {
            if p.joint_count() != model.joint_count() {
                return Err(Error::param("previous pose has the wrong joint count"));
            }
        }
        let limits = config.resolve_limits(model)?;
        Ok(Self {
            model,
            anchors,
            correspondences,
            prev,
            limits,
            config,
        })
    }

    pub fn layout(&self) -> ParamLayout {
        self.model.layout()
    }

    /// Energy terms and, on request, the normal equations.
    pub fn evaluate(&self, pose: &PoseParams, shape: &ShapeParams, jacobian: bool) -> (EnergyTerms, Option<Normal>) {
        let layout = self.layout();
        let cfg = self.config;
        let mut terms = EnergyTerms::default();
        let mut normal = jacobian.then(|| Normal::new(layout.len()));
        let lin = if jacobian {
            Some(self.model.linearize(pose, shape, true))
        } else {
            None
        };
        let positions: Vec<Vec3> = match &lin {
            Some(l) => l.positions.clone(),
            None => self.model.pose_vertices_unchecked(pose, shape).vertices().to_vec(),
        };

        let mut row: Vec<(usize, f64)> = Vec::new();
        let sa = cfg.alpha.sqrt();
        for a in self.anchors {
            let d = positions[a.vertex] - a.point;
            terms.anchor += cfg.alpha * d.norm_squared();
            if let (Some(nm), Some(l)) = (normal.as_mut(), &lin) {
                for c in 0..3 {
                    row.clear();
                    row.extend(l.columns[a.vertex].iter().map(|(i, v)| (*i, sa * v[c])));
                    nm.add_row(&row, sa * d[c]);
                }
            }
        }

        // Pairs are folded onto their vertices: the gradient stays exact and
        // the curvature uses the lumped bound sum_v D_v A_v^T A_v, which
        // dominates the exact J^T J of barycentric rows.
        let n_verts = positions.len();
        let mut lump = if jacobian { vec![0.0; n_verts] } else { Vec::new() };
        let mut pull = if jacobian { vec![Vec3::zeros(); n_verts] } else { Vec::new() };
        for c in self.correspondences {
            let y = c.surface_point(&positions);
            let d = y - c.target;
            let cw = cfg.beta * c.confidence;
            terms.correspondence += cw * d.norm_squared();
            if jacobian {
                for (&v, &w) in c.vertices.iter().zip(&c.weights) {
                    lump[v] += cw * w;
                    pull[v] += d * (cw * w);
                }
            }
        }
        if let (Some(nm), Some(l)) = (normal.as_mut(), &lin) {
            for v in 0..n_verts {
                if lump[v] == 0.0 {
                    continue;
                }
                let cols = &l.columns[v];
                for (a, (i, ci)) in cols.iter().enumerate() {
                    nm.jtr[*i] += ci.dot(&pull[v]);
                    for (j, cj) in &cols[a..] {
                        let h = lump[v] * ci.dot(cj);
                        nm.jtj[(*i, *j)] += h;
                        if i != j {
                            nm.jtj[(*j, *i)] += h;
                        }
                    }
                }
            }
        }

        let sl = cfg.limit_weight.sqrt();
        for lim in &self.limits {
            for c in 0..3 {
                let h = hinge(pose.rotations[lim.joint][c], lim.min[c], lim.max[c]);
                if h != 0.0 {
                    terms.limits += cfg.limit_weight * h * h;
                    if let Some(nm) = normal.as_mut() {
                        nm.add_row(&[(layout.rotation(lim.joint, c), sl)], sl * h);
                    }
                }
            }
        }

        if let Some(prev) = self.prev {
            let st = cfg.temporal_weight.sqrt();
            for (j, w) in pose.rotations.iter().enumerate() {
                let phi = log_so3(&(exp_so3(&prev.rotations[j]).transpose() * exp_so3(w)));
                terms.temporal += cfg.temporal_weight * phi.norm_squared();
                if let Some(nm) = normal.as_mut() {
                    let jac = right_jacobian_inv(&phi) * right_jacobian(w);
                    for c in 0..3 {
                        row.clear();
                        row.extend((0..3).map(|d| (layout.rotation(j, d), st * jac[(c, d)])));
                        nm.add_row(&row, st * phi[c]);
                    }
                }
            }
        }

        let ss = cfg.shape_weight.sqrt();
        for (m, v) in shape.coeffs.iter().enumerate() {
            terms.shape += cfg.shape_weight * v * v;
            if let Some(nm) = normal.as_mut() {
                nm.add_row(&[(layout.shape(m), ss)], ss * v);
            }
        }
        (terms, normal)
    }
}

/// Registration energy and its gradient with respect to `(Θ, v)`. The
/// free-form offsets are zero here, so the smoothness term vanishes.
pub fn energy(
    model: &BodyModel,
    pose: &PoseParams,
    shape: &ShapeParams,
    anchors: &[Anchor],
    correspondences: &[Correspondence],
    prev: Option<&PoseParams>,
    config: &RegistrationConfig,
) -> Result<Energy> {
    model.check_params(pose, shape)?;
    config.validate()?;
    let problem = Problem::new(model, anchors, correspondences, prev, config)?;
    let (terms, normal) = problem.evaluate(pose, shape, true);
    let normal = normal.expect("jacobian requested");
    Ok(Energy {
        value: terms.total(),
        terms,
        gradient: normal.jtr.iter().map(|g| 2.0 * g).collect(),
    })
}
