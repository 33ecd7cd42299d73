//! Eigen-texture: one PCA subspace per triangle over the frames in which the
//! triangle was seen, synthesis from coefficients, and per-part regressors
//! from joint rotations to texture coefficients.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{Precision, Reader, Writer};
use crate::body::PoseParams;
use crate::error::{Error, Result};
use crate::geometry::vectorize_row_major;
use crate::mesh::Mesh;
use crate::raster::{self, Camera, Image, TriangleTexture};
use crate::regress::{self, GroupRegressor, HeadData, TrainConfig};
use crate::subspace::{self, EigenSubspace, Rank, SampleMatrix};

pub const SECTION_VERSION: u32 = 1;
pub const DEFAULT_SIDE: usize = 16;
pub const DEFAULT_RANK: Rank = Rank::AtMost(10);

const NO_VIEW: u8 = u8::MAX;

/// Observed textures of one triangle, ascending by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureTrack {
    pub triangle: usize,
    pub side: usize,
    pub textures: Vec<TriangleTexture>,
}

impl TextureTrack {
    pub fn is_empty(&self) -> bool {
        self.textures.is_empty()
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.textures.iter().map(|t| t.frame)
    }

    /// A never-seen triangle gets its texture from a neighbour or a regressor only.
    pub fn regression_only(&self) -> bool {
        self.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.textures.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(Error::param(format!("track {}: frames not strictly increasing", self.triangle)));
        }
        if self.textures.iter().any(|t| t.side != self.side || t.triangle != self.triangle) {
            return Err(Error::param(format!("track {}: mixed texel sides or triangles", self.triangle)));
        }
        Ok(())
    }
}

/// Per frame and triangle, the camera a visible triangle is sampled from:
/// among the cameras passing the visibility test, the one where it has the
/// largest projected area.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewAssignment {
    frames: usize,
    triangles: usize,
    view: Vec<u8>,
}

impl ViewAssignment {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn triangles(&self) -> usize {
        self.triangles
    }

    pub fn camera(&self, frame: usize, triangle: usize) -> Option<usize> {
        let v = self.view[frame * self.triangles + triangle];
        (v != NO_VIEW).then_some(v as usize)
    }

    pub fn visible_frames(&self, triangle: usize) -> Vec<usize> {
        (0..self.frames).filter(|&f| self.camera(f, triangle).is_some()).collect()
    }

    /// Triangles seen in at least one frame.
    pub fn coverage(&self) -> usize {
        (0..self.triangles)
            .filter(|&t| (0..self.frames).any(|f| self.camera(f, t).is_some()))
            .count()
    }
}

fn check_sequence(meshes: &[Mesh], cameras: &[Camera]) -> Result<()> {
    let first = meshes.first().ok_or_else(|| Error::param("empty mesh sequence"))?;
    if meshes.iter().any(|m| !m.same_topology(first)) {
        return Err(Error::param("meshes differ in topology"));
    }
    if cameras.is_empty() || cameras.len() >= NO_VIEW as usize {
        return Err(Error::param(format!("{} cameras (need 1..{})", cameras.len(), NO_VIEW)));
    }
    Ok(())
}

pub fn assign_views(meshes: &[Mesh], cameras: &[Camera], eps: f64) -> Result<ViewAssignment> {
    check_sequence(meshes, cameras)?;
    let triangles = meshes[0].triangle_count();
    let rows: Vec<Vec<u8>> = meshes
        .par_iter()
        .map(|mesh| {
            let mut best = vec![(NO_VIEW, 0.0); triangles];
            for (k, cam) in cameras.iter().enumerate() {
                let (depth, ids) = raster::rasterize(mesh, cam);
                let vis = raster::triangle_visibility(mesh, cam, &depth, &ids, eps);
                for (t, _) in vis.iter().enumerate().filter(|(_, v)| **v) {
                    let area = raster::projected_area(mesh, cam, t);
                    if best[t].0 == NO_VIEW || area > best[t].1 {
                        best[t] = (k as u8, area);
                    }
                }
            }
            best.into_iter().map(|(k, _)| k).collect()
        })
        .collect();
    Ok(ViewAssignment {
        frames: meshes.len(),
        triangles,
        view: rows.concat(),
    })
}

fn check_images(images: &[Vec<Image>], meshes: &[Mesh], cameras: &[Camera]) -> Result<()> {
    if images.len() != meshes.len() {
        return Err(Error::param(format!("{} image frames for {} meshes", images.len(), meshes.len())));
    }
    for (f, frame) in images.iter().enumerate() {
        if frame.len() != cameras.len() {
            return Err(Error::param(format!(
                "frame {f}: {} images for {} cameras",
                frame.len(),
                cameras.len()
            )));
        }
        for (im, cam) in frame.iter().zip(cameras) {
            if im.width() != cam.width || im.height() != cam.height {
                return Err(Error::param(format!("frame {f}: image size does not match its camera")));
            }
        }
    }
    Ok(())
}

fn extract_track(
    views: &ViewAssignment,
    triangle: usize,
    meshes: &[Mesh],
    cameras: &[Camera],
    images: &[Vec<Image>],
    side: usize,
) -> Result<TextureTrack> {
    let textures = (0..views.frames)
        .filter_map(|f| views.camera(f, triangle).map(|k| (f, k)))
        .map(|(f, k)| raster::sample_texture(&meshes[f], &cameras[k], &images[f][k], triangle, side, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(TextureTrack { triangle, side, textures })
}

/// Visibility then extraction for every frame; `images[frame][camera]`.
pub fn build_tracks(meshes: &[Mesh], cameras: &[Camera], images: &[Vec<Image>], eps: f64, side: usize) -> Result<Vec<TextureTrack>> {
    let views = assign_views(meshes, cameras, eps)?;
    tracks_for(&views, meshes, cameras, images, side)
}

pub fn tracks_for(
    views: &ViewAssignment,
    meshes: &[Mesh],
    cameras: &[Camera],
    images: &[Vec<Image>],
    side: usize,
) -> Result<Vec<TextureTrack>> {
    check_images(images, meshes, cameras)?;
    if side == 0 {
        return Err(Error::param("texel side must be positive"));
    }
    (0..views.triangles)
        .into_par_iter()
        .map(|t| extract_track(views, t, meshes, cameras, images, side))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum TriangleModel {
    Observed(EigenSubspace),
    /// Never seen: uses the mean texture of this observed triangle.
    Borrowed(usize),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureModel {
    side: usize,
    frame_count: usize,
    triangles: Vec<TriangleModel>,
    /// Per triangle, per frame.
    visibility: Vec<Vec<bool>>,
}

fn fit_track(track: &TextureTrack, rank: Rank) -> Result<EigenSubspace> {
    let cols: Vec<Vec<f64>> = track.textures.iter().map(TriangleTexture::to_f64).collect();
    let samples = SampleMatrix::from_columns(&cols)?;
    subspace::fit_rank(&samples, rank).map_err(|e| match e {
        Error::Parameter(m) => Error::Parameter(format!("triangle {}: {m}", track.triangle)),
        e => e,
    })
}

/// Per-triangle PCA over each track's textures; empty tracks are `Missing`
/// until [`TextureModel::assign_fallbacks`].
pub fn fit_texture_model(tracks: &[TextureTrack], rank: Rank, frame_count: usize) -> Result<TextureModel> {
    let side = tracks.first().map_or(DEFAULT_SIDE, |t| t.side);
    for (i, tr) in tracks.iter().enumerate() {
        tr.validate()?;
        if tr.triangle != i || tr.side != side {
            return Err(Error::param(format!("track {i}: wrong triangle index or texel side")));
        }
        if tr.textures.last().is_some_and(|t| t.frame >= frame_count) {
            return Err(Error::param(format!("track {i}: frame beyond {frame_count}")));
        }
    }
    let triangles = tracks
        .par_iter()
        .map(|tr| {
            if tr.is_empty() {
                Ok(TriangleModel::Missing)
            } else {
                fit_track(tr, rank).map(TriangleModel::Observed)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let visibility = tracks
        .iter()
        .map(|tr| {
            let mut v = vec![false; frame_count];
            for f in tr.frames() {
                v[f] = true;
            }
            v
        })
        .collect();
    Ok(TextureModel {
        side,
        frame_count,
        triangles,
        visibility,
    })
}

/// Per triangle, the coefficients of each observed frame, ascending.
pub type TextureCoefficients = Vec<Vec<Vec<f64>>>;

/// Extracts, fits and embeds one triangle at a time, so only one track is in
/// memory per worker. Gives the same model as [`tracks_for`] followed by
/// [`fit_texture_model`].
pub fn fit_streaming(
    views: &ViewAssignment,
    meshes: &[Mesh],
    cameras: &[Camera],
    images: &[Vec<Image>],
    side: usize,
    rank: Rank,
) -> Result<(TextureModel, TextureCoefficients)> {
    check_images(images, meshes, cameras)?;
    if side == 0 {
        return Err(Error::param("texel side must be positive"));
    }
    let fitted = (0..views.triangles)
        .into_par_iter()
        .map(|t| {
            let track = extract_track(views, t, meshes, cameras, images, side)?;
            if track.is_empty() {
                return Ok((TriangleModel::Missing, Vec::new()));
            }
            let s = fit_track(&track, rank)?;
            let coeffs = track.textures.iter().map(|x| s.embed(&x.to_f64())).collect::<Result<Vec<_>>>()?;
            Ok((TriangleModel::Observed(s), coeffs))
        })
        .collect::<Result<Vec<_>>>()?;
    let (triangles, coeffs): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let visibility = (0..views.triangles)
        .map(|t| (0..views.frames).map(|f| views.camera(f, t).is_some()).collect())
        .collect();
    Ok((
        TextureModel {
            side,
            frame_count: views.frames,
            triangles,
            visibility,
        },
        coeffs,
    ))
}

impl TextureModel {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, t: usize) -> Option<&TriangleModel> {
        self.triangles.get(t)
    }

    pub fn subspace(&self, t: usize) -> Option<&EigenSubspace> {
        match self.triangles.get(t) {
            Some(TriangleModel::Observed(s)) => Some(s),
            _ => None,
        }
    }

    /// Coefficient count of triangle `t` (zero unless observed).
    pub fn rank(&self, t: usize) -> usize {
        self.subspace(t).map_or(0, EigenSubspace::rank)
    }

    pub fn is_visible(&self, t: usize, frame: usize) -> bool {
        self.visibility.get(t).and_then(|v| v.get(frame)).copied().unwrap_or(false)
    }

    pub fn visible_frames(&self, t: usize) -> Vec<usize> {
        self.visibility[t].iter().enumerate().filter(|(_, v)| **v).map(|(f, _)| f).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.triangles.iter().filter(|t| matches!(t, TriangleModel::Observed(_))).count()
    }

    /// Points every unseen triangle at the observed triangle of the same part
    /// whose rest-pose centroid is nearest.
    pub fn assign_fallbacks(&mut self, rest: &Mesh) -> Result<()> {
        if rest.triangle_count() != self.triangles.len() {
            return Err(Error::param("rest mesh does not match the texture model"));
        }
        let observed: Vec<usize> = (0..self.triangles.len())
            .filter(|&t| matches!(self.triangles[t], TriangleModel::Observed(_)))
            .collect();
        for t in 0..self.triangles.len() {
            if matches!(self.triangles[t], TriangleModel::Observed(_)) {
                continue;
            }
            let (part, c) = (rest.triangle_part(t), rest.triangle_centroid(t));
            let donor = observed
                .iter()
                .filter(|&&o| rest.triangle_part(o) == part)
                .map(|&o| (o, (rest.triangle_centroid(o) - c).norm_squared()))
                .fold(None, |best: Option<(usize, f64)>, x| match best {
                    Some(b) if b.1 <= x.1 => Some(b),
                    _ => Some(x),
                });
            self.triangles[t] = donor.map_or(TriangleModel::Missing, |(o, _)| TriangleModel::Borrowed(o));
        }
        Ok(())
    }

    /// `E c + p̄` before clamping.
    pub fn reconstruct(&self, t: usize, c: &[f64]) -> Result<Vec<f64>> {
        match self.triangles.get(t) {
            Some(TriangleModel::Observed(s)) => s.reconstruct(c),
            Some(TriangleModel::Borrowed(o)) => {
                if !c.is_empty() {
                    return Err(Error::param(format!("triangle {t} takes no coefficients")));
                }
                let s = self.subspace(*o).ok_or(Error::NoTexture(t))?;
                Ok(s.mean().iter().copied().collect())
            }
            Some(TriangleModel::Missing) => Err(Error::NoTexture(t)),
            None => Err(Error::param(format!("triangle {t} out of range"))),
        }
    }

    pub fn embed(&self, texture: &TriangleTexture) -> Result<Vec<f64>> {
        let s = self.subspace(texture.triangle).ok_or(Error::NoTexture(texture.triangle))?;
        s.embed(&texture.to_f64())
    }

    /// Coefficients of every texture in `tracks`, aligned with the tracks.
    pub fn embed_tracks(&self, tracks: &[TextureTrack]) -> Result<TextureCoefficients> {
        tracks
            .iter()
            .map(|tr| tr.textures.iter().map(|x| self.embed(x)).collect())
            .collect()
    }

    pub fn quantized(&self, p: Precision) -> Self {
        Self {
            triangles: self
                .triangles
                .iter()
                .map(|t| match t {
                    TriangleModel::Observed(s) => TriangleModel::Observed(s.quantized(p)),
                    other => other.clone(),
                })
                .collect(),
            ..self.clone()
        }
    }

    /// Version, texel side, frame and triangle counts, then per triangle a
    /// tag, its payload and a bit-packed visibility row.
    pub fn write_to(&self, w: &mut Writer, p: Precision) {
        w.u32(SECTION_VERSION);
        w.len_u64(self.side);
        w.len_u64(self.frame_count);
        w.len_u64(self.triangles.len());
        for (t, m) in self.triangles.iter().enumerate() {
            match m {
                TriangleModel::Missing => w.u8(0),
                TriangleModel::Borrowed(o) => {
                    w.u8(1);
                    w.len_u64(*o);
                }
                TriangleModel::Observed(s) => {
                    w.u8(2);
                    s.write_to(w, p);
                }
            }
            w.bytes(&pack_bits(&self.visibility[t]));
        }
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        let version = r.u32()?;
        if version != SECTION_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: SECTION_VERSION,
            });
        }
        let side = r.len_u64()?;
        let frame_count = r.len_u64()?;
        let n = r.len_u64()?;
        let dim = 3 * raster::texel_count(side);
        let mut triangles = Vec::with_capacity(n.min(1 << 20));
        let mut visibility = Vec::with_capacity(n.min(1 << 20));
        for t in 0..n {
            let m = match r.u8()? {
                0 => TriangleModel::Missing,
                1 => TriangleModel::Borrowed(r.len_u64()?),
                2 => {
                    let s = EigenSubspace::read_from(r)?;
                    if s.dim() != dim {
                        return Err(Error::Format(format!("triangle {t}: subspace dim {} != {dim}", s.dim())));
                    }
                    TriangleModel::Observed(s)
                }
                tag => return Err(Error::Format(format!("triangle {t}: unknown tag {tag}"))),
            };
            triangles.push(m);
            visibility.push(unpack_bits(r.bytes(frame_count.div_ceil(8))?, frame_count));
        }
        for (t, m) in triangles.iter().enumerate() {
            if let TriangleModel::Borrowed(o) = m {
                if !matches!(triangles.get(*o), Some(TriangleModel::Observed(_))) {
                    return Err(Error::Format(format!("triangle {t} borrows from unobserved {o}")));
                }
            }
        }
        Ok(Self {
            side,
            frame_count,
            triangles,
            visibility,
        })
    }
}

pub(crate) fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub(crate) fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

/// Reconstructs triangle `t` from `c` and clamps every channel into `[0, 1]`.
pub fn synthesize_texture(model: &TextureModel, t: usize, c: &[f64], frame: usize) -> Result<TriangleTexture> {
    let values = model.reconstruct(t, c)?;
    TriangleTexture::from_f64_clamped(t, frame, model.side, &values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorMode {
    /// One shared hidden layer per part, one output head per triangle.
    #[default]
    PerPart,
    PerTriangle,
}

/// Regressors from the driving joint's rotation to texture coefficients.
/// A triangle is driven by the joint of the part owning most of its
/// vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureRegressors {
    pub groups: Vec<GroupRegressor>,
    pub joint_of_group: Vec<usize>,
    /// `(group, head)` per triangle; `None` for triangles without coefficients.
    pub head_of_triangle: Vec<Option<(usize, usize)>>,
}

/// Trains on the frames flagged in `train_frames`, using each triangle's
/// observed frames only.
pub fn fit_texture_regressors(
    model: &TextureModel,
    coeffs: &TextureCoefficients,
    poses: &[PoseParams],
    train_frames: &[bool],
    rest: &Mesh,
    mode: RegressorMode,
    config: &TrainConfig,
) -> Result<TextureRegressors> {
    let n = model.triangle_count();
    if coeffs.len() != n || rest.triangle_count() != n {
        return Err(Error::param("coefficients, mesh and texture model disagree"));
    }
    if poses.len() != model.frame_count || train_frames.len() != model.frame_count {
        return Err(Error::param("pose and training-frame counts must match the texture model"));
    }
    let joints = poses.first().map_or(0, PoseParams::joint_count);
    let frames: Vec<usize> = (0..model.frame_count).filter(|&f| train_frames[f]).collect();
    if frames.is_empty() {
        return Err(Error::param("no training frames"));
    }
    let mut column_of = vec![usize::MAX; model.frame_count];
    for (k, &f) in frames.iter().enumerate() {
        column_of[f] = k;
    }
    let active: Vec<usize> = (0..n).filter(|&t| model.rank(t) > 0).collect();
    let mut groups_spec: Vec<(usize, Vec<usize>)> = Vec::new();
    match mode {
        RegressorMode::PerPart => {
            for j in 0..joints {
                let members: Vec<usize> = active.iter().copied().filter(|&t| rest.triangle_part(t) == j).collect();
                if !members.is_empty() {
                    groups_spec.push((j, members));
                }
            }
        }
        RegressorMode::PerTriangle => groups_spec.extend(active.iter().map(|&t| (rest.triangle_part(t), vec![t]))),
    }
    if let Some((j, _)) = groups_spec.iter().find(|(j, _)| *j >= joints) {
        return Err(Error::Configuration(format!("no joint {j} drives texture")));
    }
    let fitted = groups_spec
        .par_iter()
        .map(|(j, members)| {
            let inputs = DMatrix::from_fn(regress::INPUT_DIM, frames.len(), |r, k| {
                vectorize_row_major(&poses[frames[k]].local_rotation(*j))[r]
            });
            let heads: Vec<HeadData> = members
                .iter()
                .map(|&t| HeadData {
                    samples: model
                        .visible_frames(t)
                        .into_iter()
                        .zip(&coeffs[t])
                        .filter(|(f, _)| column_of[*f] != usize::MAX)
                        .map(|(f, c)| (column_of[f], c.as_slice()))
                        .collect(),
                    output_dim: model.rank(t),
                })
                .collect();
            let feature_rank = members.iter().map(|&t| model.rank(t)).max().unwrap_or(1).min(config.hidden);
            regress::fit_group(&inputs, &heads, config, feature_rank)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut head_of_triangle = vec![None; n];
    for (g, (_, members)) in groups_spec.iter().enumerate() {
        for (h, &t) in members.iter().enumerate() {
            head_of_triangle[t] = Some((g, h));
        }
    }
    Ok(TextureRegressors {
        groups: fitted,
        joint_of_group: groups_spec.iter().map(|(j, _)| *j).collect(),
        head_of_triangle,
    })
}

impl TextureRegressors {
    /// Regressed coefficients of every triangle for one pose (empty for
    /// triangles without coefficients).
    pub fn predict_frame(&self, pose: &PoseParams) -> Result<Vec<Vec<f64>>> {
        let hidden = self
            .groups
            .iter()
            .zip(&self.joint_of_group)
            .map(|(g, &j)| {
                if j >= pose.joint_count() {
                    return Err(Error::Configuration(format!("pose has no joint {j}")));
                }
                g.hidden(&vectorize_row_major(&pose.local_rotation(j)))
            })
            .collect::<Result<Vec<_>>>()?;
        self.head_of_triangle
            .iter()
            .map(|h| match h {
                Some((g, k)) => self.groups[*g].predict_head(*k, &hidden[*g]),
                None => Ok(Vec::new()),
            })
            .collect()
    }

    pub fn quantized(&self, p: Precision) -> Self {
        Self {
            groups: self.groups.iter().map(|g| g.quantized(p)).collect(),
            ..self.clone()
        }
    }

    pub fn write_to(&self, w: &mut Writer, p: Precision) {
        w.u32(regress::SECTION_VERSION);
        w.u8(p.tag());
        w.len_u64(self.groups.len());
        for (g, j) in self.groups.iter().zip(&self.joint_of_group) {
            w.len_u64(*j);
            g.write_to(w, p);
        }
        w.len_u64(self.head_of_triangle.len());
        for h in &self.head_of_triangle {
            match h {
                None => w.u8(0),
                Some((g, k)) => {
                    w.u8(1);
                    w.u32(*g as u32);
                    w.u32(*k as u32);
                }
            }
        }
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        let version = r.u32()?;
        if version != regress::SECTION_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: regress::SECTION_VERSION,
            });
        }
        let p = Precision::from_tag(r.u8()?)?;
        let n = r.len_u64()?;
        let mut groups = Vec::with_capacity(n.min(1 << 20));
        let mut joint_of_group = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            joint_of_group.push(r.len_u64()?);
            groups.push(GroupRegressor::read_from(r, p)?);
        }
        let m = r.len_u64()?;
        let mut head_of_triangle = Vec::with_capacity(m.min(1 << 20));
        for t in 0..m {
            head_of_triangle.push(match r.u8()? {
                0 => None,
                1 => {
                    let (g, k) = (r.u32()? as usize, r.u32()? as usize);
                    if groups.get(g).is_none_or(|gr| k >= gr.head_count()) {
                        return Err(Error::Format(format!("triangle {t}: no regressor head ({g}, {k})")));
                    }
                    Some((g, k))
                }
                tag => return Err(Error::Format(format!("triangle {t}: unknown head tag {tag}"))),
            });
        }
        Ok(Self {
            groups,
            joint_of_group,
            head_of_triangle,
        })
    }
}

/// Bytes of `mean + bases + per-observed-frame coefficients`, all as 32-bit
/// floats, and of the raw observed textures at the same width.
pub fn storage_bytes(model: &TextureModel) -> (usize, usize) {
    let mut compact = 0;
    let mut raw = 0;
    for t in 0..model.triangle_count() {
        let frames = model.visible_frames(t).len();
        if let Some(s) = model.subspace(t) {
            compact += 4 * (s.dim() * (1 + s.rank()) + frames * s.rank());
            raw += 4 * s.dim() * frames;
        }
    }
    (compact, raw)
}
