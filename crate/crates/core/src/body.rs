//! Articulated body model: skeleton, linear blend skinning, shape blendshapes.
//!
//! Joint `j` owns body part `j`. Joint rest positions are the cumulative sums
//! of rest offsets along the parent chain and do not depend on shape.
//!
//! A model on disk is three files sharing a stem: `model.obj` (rest
//! template), `model.parts.json` (part labels) and `model.model.json`:
//!
//! ```json
//! {
//!   "format": "eigen-avatar/body-model", "version": 1,
//!   "joints": [ { "name": "pelvis", "parent": null, "offset": [0, 1, 0] }, ... ],
//!   "weights": [ [[0, 1.0]], [[0, 0.6], [1, 0.4]], ... ],
//!   "blendshapes": [ [dx0, dy0, dz0, dx1, ...], ... ]
//! }
//! ```
//! `weights[v]` lists `(joint, weight)` pairs of vertex `v`; each blendshape is
//! a flat per-vertex xyz offset array.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::geometry::{exp_so3, left_jacobian, Mat3, RigidTransform, Vec3};
use crate::mesh::{load_mesh, save_mesh, Mesh};

pub const MODEL_FORMAT: &str = "eigen-avatar/body-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Rest offset from the parent joint (from the origin for the root).
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
    rest_positions: Vec<Vec3>,
    children: Vec<Vec<usize>>,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::param("skeleton needs at least one joint"));
        }
        let mut rest_positions: Vec<Vec3> = Vec::with_capacity(joints.len());
        let mut children = vec![Vec::new(); joints.len()];
        for (j, joint) in joints.iter().enumerate() {
            if !joint.offset.iter().all(|x| x.is_finite()) {
                return Err(Error::param(format!("joint {j} has a non-finite offset")));
            }
            let pos = match joint.parent {
                None if j == 0 => joint.offset,
                None => return Err(Error::param(format!("joint {j} has no parent; only joint 0 may be the root"))),
                Some(p) if p < j => {
                    children[p].push(j);
                    rest_positions[p] + joint.offset
                }
                Some(p) => return Err(Error::param(format!("joint {j} has parent {p}; parents must precede children"))),
            };
            rest_positions.push(pos);
        }
        Ok(Self {
            joints,
            rest_positions,
            children,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.joints[j].parent
    }

    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    pub fn rest_positions(&self) -> &[Vec3] {
        &self.rest_positions
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// `j` followed by its ancestors up to the root.
    pub fn chain(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(j), move |&k| self.joints[k].parent)
    }

    /// Posed global bone transforms (bone-local to world).
    pub fn forward_kinematics(&self, pose: &PoseParams) -> Vec<RigidTransform> {
        let mut out: Vec<RigidTransform> = Vec::with_capacity(self.joints.len());
        for (j, joint) in self.joints.iter().enumerate() {
            let local = exp_so3(&pose.rotations[j]);
            let g = match joint.parent {
                None => RigidTransform::new(local, self.rest_positions[j] + pose.translation),
                Some(p) => {
                    let gp = &out[p];
                    RigidTransform::new(
                        gp.rotation * local,
                        gp.rotation * (self.rest_positions[j] - self.rest_positions[p]) + gp.translation,
                    )
                }
            };
            out.push(g);
        }
        out
    }
}

/// Per-joint axis-angle rotations plus a global translation of the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub rotations: Vec<Vec3>,
    #[serde(default = "Vec3::zeros")]
    pub translation: Vec3,
}

impl PoseParams {
    pub fn identity(joint_count: usize) -> Self {
        Self {
            rotations: vec![Vec3::zeros(); joint_count],
            translation: Vec3::zeros(),
        }
    }

    pub fn joint_count(&self) -> usize {
        self.rotations.len()
    }

    pub fn local_rotation(&self, j: usize) -> Mat3 {
        exp_so3(&self.rotations[j])
    }

    /// Same rotations with every axis-angle norm in `[0, pi]`.
    pub fn canonical(&self) -> Self {
        Self {
            rotations: self.rotations.iter().map(crate::geometry::canonical_axis_angle).collect(),
            translation: self.translation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rotations
            .iter()
            .chain(std::iter::once(&self.translation))
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub coeffs: Vec<f64>,
}

impl ShapeParams {
    pub fn zeros(n: usize) -> Self {
        Self { coeffs: vec![0.0; n] }
    }

    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }
}

/// Sparse convex skinning weights, `(joint, weight)` per vertex.
pub type SkinWeights = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    template: Mesh,
    skeleton: Skeleton,
    weights: SkinWeights,
    blendshapes: Vec<Vec<Vec3>>,
}

/// Layout of the registration parameter vector: root translation, then three
/// axis-angle components per joint, then shape coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub joints: usize,
    pub shapes: usize,
}

impl ParamLayout {
    pub fn translation(&self, c: usize) -> usize {
        c
    }

    pub fn rotation(&self, j: usize, c: usize) -> usize {
        3 + 3 * j + c
    }

    pub fn shape(&self, m: usize) -> usize {
        3 + 3 * self.joints + m
    }

    pub fn len(&self) -> usize {
        3 + 3 * self.joints + self.shapes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pack(&self, pose: &PoseParams, shape: &ShapeParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend(pose.translation.iter());
        for r in &pose.rotations {
            x.extend(r.iter());
        }
        x.extend(shape.coeffs.iter());
        x
    }

    pub fn unpack(&self, x: &[f64]) -> (PoseParams, ShapeParams) {
        let translation = Vec3::new(x[0], x[1], x[2]);
        let rotations = (0..self.joints)
            .map(|j| Vec3::new(x[3 + 3 * j], x[4 + 3 * j], x[5 + 3 * j]))
            .collect();
        let coeffs = x[3 + 3 * self.joints..].to_vec();
        (PoseParams { rotations, translation }, ShapeParams { coeffs })
    }
}

/// Posed vertex positions with sparse derivatives with respect to the packed
/// parameters (see [`ParamLayout`]).
#[derive(Debug, Clone)]
pub struct PoseLinearization {
    pub positions: Vec<Vec3>,
    pub columns: Vec<Vec<(usize, Vec3)>>,
}

impl BodyModel {
    /// Builds a model and relabels the template parts by the argmax skinning
    /// weight of each vertex (ties go to the lower joint index).
    pub fn new(template: Mesh, skeleton: Skeleton, weights: SkinWeights, blendshapes: Vec<Vec<Vec3>>) -> Result<Self> {
        let n = template.vertex_count();
        let jc = skeleton.joint_count();
        if weights.len() != n {
            return Err(Error::param(format!("{} weight rows for {} vertices", weights.len(), n)));
        }
        for (v, row) in weights.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, w) in row {
                if j >= jc {
                    return Err(Error::param(format!("vertex {v} weights joint {j} >= {jc}")));
                }
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::param(format!("vertex {v} has invalid weight {w}")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("vertex {v} weights sum to {sum}")));
            }
        }
        for (b, shape) in blendshapes.iter().enumerate() {
            if shape.len() != n {
                return Err(Error::param(format!(
                    "blendshape {b} has {} offsets for {} vertices",
                    shape.len(),
                    n
                )));
            }
        }
        let parts = weights
            .iter()
            .map(|row| {
                let mut best = (usize::MAX, f64::NEG_INFINITY);
                for &(j, w) in row {
                    if w > best.1 || (w == best.1 && j < best.0) {
                        best = (j, w);
                    }
                }
                best.0
            })
            .collect();
        let template = template.with_parts(parts)?;
        template.validate(Some(jc))?;
        Ok(Self {
            template,
            skeleton,
            weights,
            blendshapes,
        })
    }

    pub fn template(&self) -> &Mesh {
        &self.template
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn weights(&self) -> &SkinWeights {
        &self.weights
    }

    pub fn blendshapes(&self) -> &[Vec<Vec3>] {
        &self.blendshapes
    }

    pub fn joint_count(&self) -> usize {
        self.skeleton.joint_count()
    }

    pub fn part_count(&self) -> usize {
        self.skeleton.joint_count()
    }

    pub fn shape_count(&self) -> usize {
        self.blendshapes.len()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            joints: self.joint_count(),
            shapes: self.shape_count(),
        }
    }

    pub fn check_params(&self, pose: &PoseParams, shape: &ShapeParams) -> Result<()> {
        if pose.rotations.len() != self.joint_count() {
            return Err(Error::param(format!(
                "pose has {} rotations, model has {} joints",
                pose.rotations.len(),
                self.joint_count()
            )));
        }
        if shape.coeffs.len() != self.shape_count() {
            return Err(Error::param(format!(
                "shape has {} coefficients, model has {} blendshapes",
                shape.coeffs.len(),
                self.shape_count()
            )));
        }
        if !pose.is_finite() || !shape.coeffs.iter().all(|x| x.is_finite()) {
            return Err(Error::param("non-finite pose or shape parameter"));
        }
        Ok(())
    }

    /// Template plus the weighted blendshapes, before skinning.
    pub fn shaped_vertices(&self, shape: &ShapeParams) -> Vec<Vec3> {
        let mut out = self.template.vertices().to_vec();
        for (coeff, offsets) in shape.coeffs.iter().zip(&self.blendshapes) {
            if *coeff != 0.0 {
                for (v, d) in out.iter_mut().zip(offsets) {
                    *v += d * *coeff;
                }
            }
        }
        out
    }

    /// Per-joint skinning transforms: posed bone transform composed with the
    /// inverse rest bone transform.
    pub fn skinning_transforms(&self, pose: &PoseParams) -> Vec<RigidTransform> {
        self.skeleton
            .forward_kinematics(pose)
            .iter()
            .zip(self.skeleton.rest_positions())
            .map(|(g, t)| g.compose(&RigidTransform::from_translation(-t)))
            .collect()
    }

    /// Linear blend skinning of `shaped` with explicit per-joint transforms.
    pub fn skin_with(&self, transforms: &[RigidTransform], shaped: &[Vec3]) -> Vec<Vec3> {
        shaped
            .iter()
            .zip(&self.weights)
            .map(|(s, row)| {
                row.iter()
                    .fold(Vec3::zeros(), |acc, &(j, w)| acc + transforms[j].apply_point(s) * w)
            })
            .collect()
    }

    /// The statistic-model mesh M′ for pose and shape.
    pub fn pose_model(&self, pose: &PoseParams, shape: &ShapeParams) -> Result<Mesh> {
        self.check_params(pose, shape)?;
        Ok(self.pose_vertices_unchecked(pose, shape))
    }

    pub(crate) fn pose_vertices_unchecked(&self, pose: &PoseParams, shape: &ShapeParams) -> Mesh {
        let shaped = self.shaped_vertices(shape);
        let verts = self.skin_with(&self.skinning_transforms(pose), &shaped);
        self.template.with_vertices(verts).expect("vertex count preserved")
    }

    /// `H_l` for every part: the inverse posed bone transform, mapping world
    /// coordinates into the bone's local frame.
    pub fn part_frames(&self, pose: &PoseParams) -> Result<Vec<RigidTransform>> {
        if pose.rotations.len() != self.joint_count() {
            return Err(Error::param(format!(
                "pose has {} rotations, model has {} joints",
                pose.rotations.len(),
                self.joint_count()
            )));
        }
        Ok(self.skeleton.forward_kinematics(pose).iter().map(RigidTransform::inverse).collect())
    }

    /// Posed positions and analytic derivatives for every vertex. Shape
    /// columns are included only when `with_shape` is set.
    pub fn linearize(&self, pose: &PoseParams, shape: &ShapeParams, with_shape: bool) -> PoseLinearization {
        let layout = self.layout();
        let jc = self.joint_count();
        let globals = self.skeleton.forward_kinematics(pose);
        let rest = self.skeleton.rest_positions();
        // Columns of D_k: world-frame angular velocity per axis-angle component.
        let d: Vec<Mat3> = (0..jc)
            .map(|k| {
                let parent_rot = match self.skeleton.parent(k) {
                    Some(p) => globals[p].rotation,
                    None => Mat3::identity(),
                };
                parent_rot * left_jacobian(&pose.rotations[k])
            })
            .collect();
        let shaped = self.shaped_vertices(shape);
        let mut positions = Vec::with_capacity(shaped.len());
        let mut columns = Vec::with_capacity(shaped.len());
        let mut lever = vec![Vec3::zeros(); jc];
        let mut touched: Vec<usize> = Vec::with_capacity(jc);
        for (i, s) in shaped.iter().enumerate() {
            let mut x = Vec3::zeros();
            touched.clear();
            for &(j, w) in &self.weights[i] {
                let a = globals[j].rotation * (s - rest[j]) + globals[j].translation;
                x += a * w;
                for k in self.skeleton.chain(j) {
                    if !touched.contains(&k) {
                        touched.push(k);
                        lever[k] = Vec3::zeros();
                    }
                    lever[k] += (a - globals[k].translation) * w;
                }
            }
            touched.sort_unstable();
            let mut cols = Vec::with_capacity(3 + 3 * touched.len() + layout.shapes);
            for c in 0..3 {
                let mut e = Vec3::zeros();
                e[c] = 1.0;
                cols.push((layout.translation(c), e));
            }
            for &k in &touched {
                for c in 0..3 {
                    let axis: Vec3 = d[k].column(c).into();
                    cols.push((layout.rotation(k, c), axis.cross(&lever[k])));
                }
            }
            if with_shape {
                for (m, offsets) in self.blendshapes.iter().enumerate() {
                    let dv = self.weights[i]
                        .iter()
                        .fold(Vec3::zeros(), |acc, &(j, w)| acc + globals[j].rotation * offsets[i] * w);
                    cols.push((layout.shape(m), dv));
                }
            }
            positions.push(x);
            columns.push(cols);
        }
        PoseLinearization { positions, columns }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelSidecar {
    format: String,
    version: u32,
    joints: Vec<Joint>,
    weights: SkinWeights,
    blendshapes: Vec<Vec<f64>>,
}

/// `foo.obj` -> `foo.model.json`.
pub fn model_sidecar_path(obj_path: &Path) -> PathBuf {
    obj_path.with_extension("model.json")
}

pub fn save_body_model(model: &BodyModel, obj_path: &Path) -> Result<()> {
    save_mesh(model.template(), obj_path)?;
    let sidecar = ModelSidecar {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        joints: model.skeleton.joints().to_vec(),
        weights: model.weights.clone(),
        blendshapes: model
            .blendshapes
            .iter()
            .map(|b| b.iter().flat_map(|v| [v.x, v.y, v.z]).collect())
            .collect(),
    };
    fsutil::write_json(&model_sidecar_path(obj_path), &sidecar, "body model sidecar")
}

pub fn load_body_model(obj_path: &Path) -> Result<BodyModel> {
    let template = load_mesh(obj_path)?;
    let path = model_sidecar_path(obj_path);
    let sidecar: ModelSidecar = serde_json::from_str(&fsutil::read_to_string(&path, "body model sidecar")?)?;
    if sidecar.format != MODEL_FORMAT || sidecar.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported body model {} v{}",
            sidecar.format, sidecar.version
        )));
    }
    let blendshapes = sidecar
        .blendshapes
        .iter()
        .map(|flat| {
            if flat.len() != 3 * template.vertex_count() {
                return Err(Error::param("blendshape length does not match the template"));
            }
            Ok(flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    BodyModel::new(template, Skeleton::new(sidecar.joints)?, sidecar.weights, blendshapes)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two joints along +x; vertices 0..2 on the root, 2..4 on the child,
    /// vertex 4 blended.
    pub(crate) fn two_bone_model() -> BodyModel {
        let joints = vec![
            Joint {
                name: "root".into(),
                parent: None,
                offset: Vec3::zeros(),
            },
            Joint {
                name: "child".into(),
                parent: Some(0),
                offset: Vec3::new(1.0, 0.0, 0.0),
            },
        ];
        let vertices = vec![
            Vec3::new(0.2, 0.1, 0.0),
            Vec3::new(0.5, -0.1, 0.0),
            Vec3::new(1.5, 0.1, 0.0),
            Vec3::new(2.0, -0.1, 0.1),
            Vec3::new(1.0, 0.0, 0.1),
        ];
        let triangles = vec![[0, 1, 4], [4, 2, 3], [0, 4, 3]];
        let template = Mesh::unlabelled(vertices, triangles).unwrap();
        let weights = vec![
            vec![(0, 1.0)],
            vec![(0, 1.0)],
            vec![(1, 1.0)],
            vec![(1, 1.0)],
            vec![(0, 0.5), (1, 0.5)],
        ];
        let blend = vec![Vec3::new(0.0, 0.1, 0.0); 5];
        BodyModel::new(template, Skeleton::new(joints).unwrap(), weights, vec![blend]).unwrap()
    }

    fn random_pose(rng: &mut impl Rng, joints: usize, scale: f64) -> PoseParams {
        PoseParams {
            rotations: (0..joints)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-scale..scale),
                        rng.gen_range(-scale..scale),
                        rng.gen_range(-scale..scale),
                    )
                })
                .collect(),
            translation: Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        }
    }

    #[test]
    fn identity_pose_is_the_template() {
        let m = two_bone_model();
        let posed = m.pose_model(&PoseParams::identity(2), &ShapeParams::zeros(1)).unwrap();
        assert_eq!(posed.vertices(), m.template().vertices());
        assert_eq!(posed.part_of_vertex(), &[0, 0, 1, 1, 0]);
    }

    #[test]
    fn child_rotation_matches_hand_kinematics() {
        let m = two_bone_model();
        let mut pose = PoseParams::identity(2);
        pose.rotations[1] = Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let posed = m.pose_model(&pose, &ShapeParams::zeros(1)).unwrap();
        // (2, -0.1, 0.1) about the child joint at (1, 0, 0): offset (1, -0.1, 0.1) -> (0.1, 1, 0.1).
        assert_relative_eq!(posed.vertices()[3], Vec3::new(1.1, 1.0, 0.1), epsilon = 1e-12);
        assert_relative_eq!(posed.vertices()[0], m.template().vertices()[0], epsilon = 1e-15);
    }

    #[test]
    fn first_blendshape_at_rest() {
        let m = two_bone_model();
        let posed = m.pose_model(&PoseParams::identity(2), &ShapeParams::new(vec![1.0])).unwrap();
        for (p, t) in posed.vertices().iter().zip(m.template().vertices()) {
            assert_relative_eq!(*p, t + Vec3::new(0.0, 0.1, 0.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = two_bone_model();
        assert!(m.pose_model(&PoseParams::identity(3), &ShapeParams::zeros(1)).is_err());
        assert!(m.pose_model(&PoseParams::identity(2), &ShapeParams::zeros(2)).is_err());
        assert!(m.part_frames(&PoseParams::identity(1)).is_err());
    }

    #[test]
    fn skeleton_rejects_unordered_parents() {
        let joints = vec![
            Joint {
                name: "a".into(),
                parent: None,
                offset: Vec3::zeros(),
            },
            Joint {
                name: "b".into(),
                parent: Some(2),
                offset: Vec3::x(),
            },
            Joint {
                name: "c".into(),
                parent: Some(0),
                offset: Vec3::x(),
            },
        ];
        assert!(Skeleton::new(joints).is_err());
    }

    #[test]
    fn weights_must_be_convex() {
        let m = two_bone_model();
        let mut w = m.weights().clone();
        w[4] = vec![(0, 0.5), (1, 0.6)];
        assert!(BodyModel::new(m.template().clone(), m.skeleton().clone(), w, vec![]).is_err());
    }

    #[test]
    fn argmax_ties_go_to_lower_joint() {
        let m = two_bone_model();
        assert_eq!(m.template().part_of_vertex()[4], 0);
    }

    #[test]
    fn part_frames_at_identity_are_negative_rest_translations() {
        let m = two_bone_model();
        let h = m.part_frames(&PoseParams::identity(2)).unwrap();
        assert_relative_eq!(h[1].translation, Vec3::new(-1.0, 0.0, 0.0));
        assert_relative_eq!(h[1].rotation, Mat3::identity());
    }

    #[test]
    fn root_rotation_rotates_every_frame() {
        // Three-joint chain along x.
        let joints = vec![
            Joint {
                name: "a".into(),
                parent: None,
                offset: Vec3::new(0.0, 1.0, 0.0),
            },
            Joint {
                name: "b".into(),
                parent: Some(0),
                offset: Vec3::new(1.0, 0.0, 0.0),
            },
            Joint {
                name: "c".into(),
                parent: Some(1),
                offset: Vec3::new(1.0, 0.0, 0.0),
            },
        ];
        let sk = Skeleton::new(joints).unwrap();
        let template = Mesh::unlabelled(
            vec![Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(2.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let m = BodyModel::new(template, sk, vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)]], vec![]).unwrap();
        let w = Vec3::new(0.0, 0.0, 0.7);
        let mut pose = PoseParams::identity(3);
        pose.rotations[0] = w;
        let rest = m.part_frames(&PoseParams::identity(3)).unwrap();
        let posed = m.part_frames(&pose).unwrap();
        // Rotating the root by R about its joint c0 = (0,1,0) gives
        // H_l' = H_l ∘ (x -> R^T (x - c0) + c0).
        let c0 = Vec3::new(0.0, 1.0, 0.0);
        let rt = exp_so3(&w).transpose();
        let undo = RigidTransform::new(rt, c0 - rt * c0);
        for l in 0..3 {
            let expect = rest[l].compose(&undo);
            assert_relative_eq!(posed[l].rotation, expect.rotation, epsilon = 1e-14);
            assert_relative_eq!(posed[l].translation, expect.translation, epsilon = 1e-14);
        }
    }

    #[test]
    fn part_frames_are_rigid_for_random_poses() {
        let m = two_bone_model();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let pose = random_pose(&mut rng, 2, 4.0);
            for h in m.part_frames(&pose).unwrap() {
                assert!(h.is_valid(1e-9));
                let id = h.compose(&h.inverse());
                assert!((id.rotation - Mat3::identity()).abs().max() < 1e-12);
                assert!(id.translation.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn skinning_commutes_with_rigid_motion() {
        let m = two_bone_model();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shaped = m.shaped_vertices(&ShapeParams::new(vec![0.3]));
        for _ in 0..50 {
            let pose = random_pose(&mut rng, 2, 2.0);
            let motion = RigidTransform::from_axis_angle(
                &Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                Vec3::new(rng.gen(), rng.gen(), rng.gen()),
            );
            let base = m.skin_with(&m.skinning_transforms(&pose), &shaped);
            let moved_t: Vec<_> = m.skinning_transforms(&pose).iter().map(|t| motion.compose(t)).collect();
            let moved = m.skin_with(&moved_t, &shaped);
            for (a, b) in base.iter().zip(&moved) {
                assert!((motion.apply_point(a) - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let m = two_bone_model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = m.layout();
        for _ in 0..10 {
            let pose = random_pose(&mut rng, 2, 1.5);
            let shape = ShapeParams::new(vec![rng.gen_range(-1.0..1.0)]);
            let lin = m.linearize(&pose, &shape, true);
            let x0 = layout.pack(&pose, &shape);
            let h = 1e-6;
            for p in 0..layout.len() {
                let mut xp = x0.clone();
                let mut xm = x0.clone();
                xp[p] += h;
                xm[p] -= h;
                let (pp, sp) = layout.unpack(&xp);
                let (pm, sm) = layout.unpack(&xm);
                let vp = m.pose_model(&pp, &sp).unwrap();
                let vm = m.pose_model(&pm, &sm).unwrap();
                for i in 0..m.template().vertex_count() {
                    let fd = (vp.vertices()[i] - vm.vertices()[i]) / (2.0 * h);
                    let an = lin.columns[i]
                        .iter()
                        .filter(|(q, _)| *q == p)
                        .fold(Vec3::zeros(), |a, (_, c)| a + c);
                    assert!((fd - an).norm() < 1e-7, "param {p} vertex {i}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.obj");
        let m = two_bone_model();
        save_body_model(&m, &path).unwrap();
        assert_eq!(load_body_model(&path).unwrap(), m);
    }
}
