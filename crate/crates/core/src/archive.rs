//! Sectioned little-endian container for an encoded sequence.
//!
//! ```text
//! "EIGAVTR1"  u32 format version  u32 section count
//! per section: [u8; 4] tag, u64 payload length, u32 CRC32 of payload, payload
//! ```
//!
//! Sections, in order: `MANI` (JSON manifest), `BODY` (body model, f64),
//! `POSE` (shape and per-frame pose, f64), `DEFM` / `DCOF` (deformation
//! subspaces and per-frame coefficients), then the optional `TEXM` / `TCOF`
//! (texture subspaces and per-observed-frame coefficients), `REGD` and
//! `REGT` (deformation and texture regressors).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{Precision, Reader, Writer};
use crate::body::{BodyModel, Joint, PoseParams, ShapeParams, Skeleton};
use crate::deform::DeformModel;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::geometry::Vec3;
use crate::mesh::Mesh;
use crate::regress::Regressor;
use crate::texture::{TextureCoefficients, TextureModel, TextureRegressors};

pub const MAGIC: &[u8; 8] = b"EIGAVTR1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub frame_count: usize,
    pub vertex_count: usize,
    pub triangle_count: usize,
    pub units: String,
    pub texel_side: usize,
    pub epsilon: f64,
    pub precision: Precision,
    /// Frame ranges `[start, end)` left out of regressor training.
    pub holdout: Vec<(usize, usize)>,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub manifest: Manifest,
    pub body: BodyModel,
    pub shape: ShapeParams,
    pub poses: Vec<PoseParams>,
    pub deform: DeformModel,
    /// `[frame][part]`.
    pub deform_coeffs: Vec<Vec<Vec<f64>>>,
    pub texture: Option<TextureModel>,
    pub texture_coeffs: TextureCoefficients,
    /// One per part; `None` for parts without coefficients.
    pub deform_regressors: Option<Vec<Option<Regressor>>>,
    pub texture_regressors: Option<TextureRegressors>,
}

fn write_body(w: &mut Writer, body: &BodyModel) {
    let t = body.template();
    w.len_u64(t.vertex_count());
    for v in t.vertices() {
        w.floats(Precision::F64, v.iter().copied());
    }
    w.len_u64(t.triangle_count());
    for tri in t.triangles() {
        for &i in tri {
            w.u32(i as u32);
        }
    }
    let joints = body.skeleton().joints();
    w.len_u64(joints.len());
    for j in joints {
        w.len_u64(j.name.len());
        w.bytes(j.name.as_bytes());
        w.u32(j.parent.map_or(u32::MAX, |p| p as u32));
        w.floats(Precision::F64, j.offset.iter().copied());
    }
    for row in body.weights() {
        w.u32(row.len() as u32);
        for &(j, x) in row {
            w.u32(j as u32);
            w.f64(x);
        }
    }
    w.len_u64(body.blendshapes().len());
    for b in body.blendshapes() {
        for v in b {
            w.floats(Precision::F64, v.iter().copied());
        }
    }
}

fn read_vec3(r: &mut Reader<'_>) -> Result<Vec3> {
    Ok(Vec3::new(r.f64()?, r.f64()?, r.f64()?))
}

fn read_body(r: &mut Reader<'_>) -> Result<BodyModel> {
    let n = r.len_u64()?;
    let verts = (0..n).map(|_| read_vec3(r)).collect::<Result<Vec<_>>>()?;
    let nt = r.len_u64()?;
    let tris = (0..nt)
        .map(|_| Ok([r.u32()? as usize, r.u32()? as usize, r.u32()? as usize]))
        .collect::<Result<Vec<_>>>()?;
    let nj = r.len_u64()?;
    let mut joints = Vec::with_capacity(nj.min(1 << 16));
    for _ in 0..nj {
        let len = r.len_u64()?;
        let name = String::from_utf8(r.bytes(len)?.to_vec()).map_err(|_| Error::Format("joint name is not UTF-8".into()))?;
        let parent = match r.u32()? {
            u32::MAX => None,
            p => Some(p as usize),
        };
        joints.push(Joint {
            name,
            parent,
            offset: read_vec3(r)?,
        });
    }
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let k = r.u32()? as usize;
        weights.push((0..k).map(|_| Ok((r.u32()? as usize, r.f64()?))).collect::<Result<Vec<_>>>()?);
    }
    let nb = r.len_u64()?;
    let shapes = (0..nb)
        .map(|_| (0..n).map(|_| read_vec3(r)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    BodyModel::new(Mesh::unlabelled(verts, tris)?, Skeleton::new(joints)?, weights, shapes)
}

fn write_poses(w: &mut Writer, shape: &ShapeParams, poses: &[PoseParams]) {
    w.len_u64(shape.coeffs.len());
    w.floats(Precision::F64, shape.coeffs.iter().copied());
    w.len_u64(poses.len());
    w.len_u64(poses.first().map_or(0, PoseParams::joint_count));
    for p in poses {
        w.floats(Precision::F64, p.translation.iter().copied());
        for r in &p.rotations {
            w.floats(Precision::F64, r.iter().copied());
        }
    }
}

fn read_poses(r: &mut Reader<'_>) -> Result<(ShapeParams, Vec<PoseParams>)> {
    let m = r.len_u64()?;
    let shape = ShapeParams::new(r.floats(Precision::F64, m)?);
    let (f, j) = (r.len_u64()?, r.len_u64()?);
    let mut poses = Vec::with_capacity(f.min(1 << 20));
    for _ in 0..f {
        let translation = read_vec3(r)?;
        let rotations = (0..j).map(|_| read_vec3(r)).collect::<Result<Vec<_>>>()?;
        poses.push(PoseParams { rotations, translation });
    }
    Ok((shape, poses))
}

fn write_deform_coeffs(w: &mut Writer, p: Precision, coeffs: &[Vec<Vec<f64>>]) {
    w.len_u64(coeffs.len());
    for frame in coeffs {
        for c in frame {
            w.floats(p, c.iter().copied());
        }
    }
}

fn read_deform_coeffs(r: &mut Reader<'_>, p: Precision, ranks: &[usize]) -> Result<Vec<Vec<Vec<f64>>>> {
    let f = r.len_u64()?;
    (0..f).map(|_| ranks.iter().map(|&l| r.floats(p, l)).collect()).collect()
}

fn write_texture_coeffs(w: &mut Writer, p: Precision, coeffs: &TextureCoefficients) {
    for tri in coeffs {
        for c in tri {
            w.floats(p, c.iter().copied());
        }
    }
}

fn read_texture_coeffs(r: &mut Reader<'_>, p: Precision, model: &TextureModel) -> Result<TextureCoefficients> {
    (0..model.triangle_count())
        .map(|t| {
            let (frames, l) = (model.visible_frames(t).len(), model.rank(t));
            if model.subspace(t).is_none() {
                return Ok(Vec::new());
            }
            (0..frames).map(|_| r.floats(p, l)).collect()
        })
        .collect()
}

fn write_deform_regressors(w: &mut Writer, p: Precision, regs: &[Option<Regressor>]) {
    w.u8(p.tag());
    w.len_u64(regs.len());
    for reg in regs {
        match reg {
            None => w.u8(0),
            Some(reg) => {
                w.u8(1);
                reg.write_to(w, p);
            }
        }
    }
}

fn read_deform_regressors(r: &mut Reader<'_>) -> Result<Vec<Option<Regressor>>> {
    let p = Precision::from_tag(r.u8()?)?;
    let n = r.len_u64()?;
    (0..n)
        .map(|_| match r.u8()? {
            0 => Ok(None),
            1 => Regressor::read_from(r, p).map(Some),
            t => Err(Error::Format(format!("unknown regressor tag {t}"))),
        })
        .collect()
}

/// Round-trip copies of every float the archive stores at `precision`.
pub fn quantize_coeffs(c: &[Vec<f64>], p: Precision) -> Vec<Vec<f64>> {
    c.iter().map(|v| v.iter().map(|&x| p.quantize(x)).collect()).collect()
}

impl Archive {
    fn sections(&self) -> Vec<([u8; 4], Vec<u8>)> {
        let p = self.manifest.precision;
        let mut out = Vec::new();
        let mut add = |tag: &[u8; 4], f: &dyn Fn(&mut Writer)| {
            let mut w = Writer::new();
            f(&mut w);
            out.push((*tag, w.into_bytes()));
        };
        add(b"MANI", &|w| {
            w.bytes(serde_json::to_string(&self.manifest).expect("manifest serializes").as_bytes())
        });
        add(b"BODY", &|w| write_body(w, &self.body));
        add(b"POSE", &|w| write_poses(w, &self.shape, &self.poses));
        add(b"DEFM", &|w| self.deform.write_to(w, p));
        add(b"DCOF", &|w| write_deform_coeffs(w, p, &self.deform_coeffs));
        if let Some(t) = &self.texture {
            add(b"TEXM", &|w| t.write_to(w, p));
            add(b"TCOF", &|w| write_texture_coeffs(w, p, &self.texture_coeffs));
        }
        if let Some(regs) = &self.deform_regressors {
            add(b"REGD", &|w| write_deform_regressors(w, p, regs));
        }
        if let Some(regs) = &self.texture_regressors {
            add(b"REGT", &|w| regs.write_to(w, p));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sections = self.sections();
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(sections.len() as u32);
        for (tag, payload) in &sections {
            w.bytes(tag);
            w.len_u64(payload.len());
            w.u32(crc32fast::hash(payload));
            w.bytes(payload);
        }
        w.into_bytes()
    }

    /// Payload bytes per section tag, in file order.
    pub fn section_sizes(&self) -> Vec<(String, usize)> {
        self.sections()
            .into_iter()
            .map(|(tag, p)| (String::from_utf8_lossy(&tag).into_owned(), p.len()))
            .collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "archive");
        if r.bytes(8).map_err(|_| Error::Format("not an archive (too short)".into()))? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = r.u32()?;
        let mut sections: BTreeMap<String, &[u8]> = BTreeMap::new();
        for _ in 0..count {
            let tag = String::from_utf8_lossy(r.bytes(4)?).into_owned();
            let len = r.len_u64()?;
            let crc = r.u32()?;
            let payload = r.bytes(len)?;
            if crc32fast::hash(payload) != crc {
                return Err(Error::Checksum { section: tag });
            }
            if sections.insert(tag.clone(), payload).is_some() {
                return Err(Error::Format(format!("duplicate section {tag}")));
            }
        }
        r.finish()?;
        let section = |tag: &str| sections.get(tag).copied();
        let need = |tag: &str| section(tag).ok_or_else(|| Error::Format(format!("missing section {tag}")));
        let parse = |tag: &'static str, payload: &[u8], f: &mut dyn FnMut(&mut Reader<'_>) -> Result<()>| -> Result<()> {
            let mut r = Reader::new(payload, tag);
            f(&mut r).and_then(|_| r.finish()).map_err(|e| e.in_stage(tag))
        };

        let manifest: Manifest = serde_json::from_slice(need("MANI")?).map_err(|e| Error::from(e).in_stage("MANI"))?;
        let p = manifest.precision;
        let mut body = None;
        parse("BODY", need("BODY")?, &mut |r| {
            body = Some(read_body(r)?);
            Ok(())
        })?;
        let mut poses = None;
        parse("POSE", need("POSE")?, &mut |r| {
            poses = Some(read_poses(r)?);
            Ok(())
        })?;
        let mut deform = None;
        parse("DEFM", need("DEFM")?, &mut |r| {
            deform = Some(DeformModel::read_from(r)?);
            Ok(())
        })?;
        let deform = deform.expect("parsed");
        let mut deform_coeffs = Vec::new();
        parse("DCOF", need("DCOF")?, &mut |r| {
            deform_coeffs = read_deform_coeffs(r, p, &deform.ranks())?;
            Ok(())
        })?;
        let mut texture = None;
        let mut texture_coeffs = Vec::new();
        if let Some(payload) = section("TEXM") {
            parse("TEXM", payload, &mut |r| {
                texture = Some(TextureModel::read_from(r)?);
                Ok(())
            })?;
            let model = texture.as_ref().expect("parsed");
            parse("TCOF", need("TCOF")?, &mut |r| {
                texture_coeffs = read_texture_coeffs(r, p, model)?;
                Ok(())
            })?;
        }
        let mut deform_regressors = None;
        if let Some(payload) = section("REGD") {
            parse("REGD", payload, &mut |r| {
                deform_regressors = Some(read_deform_regressors(r)?);
                Ok(())
            })?;
        }
        let mut texture_regressors = None;
        if let Some(payload) = section("REGT") {
            parse("REGT", payload, &mut |r| {
                texture_regressors = Some(TextureRegressors::read_from(r)?);
                Ok(())
            })?;
        }
        let (shape, poses) = poses.expect("parsed");
        let archive = Self {
            manifest,
            body: body.expect("parsed"),
            shape,
            poses,
            deform,
            deform_coeffs,
            texture,
            texture_coeffs,
            deform_regressors,
            texture_regressors,
        };
        archive.validate()?;
        Ok(archive)
    }

    /// Cross-section consistency.
    pub fn validate(&self) -> Result<()> {
        let f = self.manifest.frame_count;
        if self.poses.len() != f || self.deform_coeffs.len() != f {
            return Err(Error::Format(format!("frame count {f} disagrees with POSE/DCOF")));
        }
        if self.poses.iter().any(|p| p.joint_count() != self.body.joint_count()) || self.shape.coeffs.len() != self.body.shape_count() {
            return Err(Error::Format("poses or shape do not fit the body model".into()));
        }
        if self.deform.part_count() != self.body.part_count() {
            return Err(Error::Format("deformation parts do not match the body".into()));
        }
        if let Some(t) = &self.texture {
            if t.triangle_count() != self.body.template().triangle_count() || t.frame_count() != f {
                return Err(Error::Format("texture model does not match the body or frame count".into()));
            }
        }
        if let Some(r) = &self.deform_regressors {
            if r.len() != self.deform.part_count() {
                return Err(Error::Format("one deformation regressor slot per part required".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes(), "archive")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fsutil::read_bytes(path, "archive")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::{displacement_field, fit_deform_model};
    use crate::subspace::Rank;
    use crate::synth::standard_body;

    fn small_archive(p: Precision) -> Archive {
        let (body, _) = standard_body(3, 5).unwrap();
        let shape = ShapeParams::new(vec![0.1, -0.2, 0.0, 0.3]);
        let poses: Vec<PoseParams> = (0..4)
            .map(|f| {
                let mut pose = PoseParams::identity(16);
                pose.rotations[5] = Vec3::new(0.0, 0.2 * f as f64, 0.0);
                pose
            })
            .collect();
        let mut fields = Vec::new();
        for pose in &poses {
            let m = body.pose_model(pose, &shape).unwrap();
            let frames = body.part_frames(pose).unwrap();
            let shifted = m.with_vertices(m.vertices().iter().map(|v| v * 1.01).collect()).unwrap();
            fields.push(displacement_field(&shifted, &m, &frames).unwrap());
        }
        let pv = body.template().part_vertices(16);
        let deform = fit_deform_model(&fields, &pv, Rank::AtMost(10)).unwrap().quantized(p);
        let deform_coeffs = fields.iter().map(|f| quantize_coeffs(&deform.embed(f).unwrap(), p)).collect();
        Archive {
            manifest: Manifest {
                tool: "eigen-avatar".into(),
                tool_version: "0".into(),
                frame_count: 4,
                vertex_count: body.template().vertex_count(),
                triangle_count: body.template().triangle_count(),
                units: "m".into(),
                texel_side: 4,
                epsilon: 1e-3,
                precision: p,
                holdout: vec![(1, 2)],
                seeds: BTreeMap::from([("synth".to_string(), 7)]),
                notes: BTreeMap::new(),
            },
            body,
            shape,
            poses,
            deform,
            deform_coeffs,
            texture: None,
            texture_coeffs: Vec::new(),
            deform_regressors: Some(vec![None; 16]),
            texture_regressors: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for p in [Precision::F32, Precision::F64] {
            let a = small_archive(p);
            let bytes = a.to_bytes();
            let b = Archive::from_bytes(&bytes).unwrap();
            assert_eq!(a, b);
            assert_eq!(b.to_bytes(), bytes);
        }
    }

    #[test]
    fn corruption_is_detected_per_section() {
        let a = small_archive(Precision::F32);
        let mut bytes = a.to_bytes();
        let n = bytes.len();
        bytes[n - 3] ^= 0x40;
        match Archive::from_bytes(&bytes) {
            Err(Error::Checksum { section }) => assert_eq!(section, "REGD"),
            other => panic!("{other:?}"),
        }
        let mut bad = a.to_bytes();
        bad[8] = 9;
        assert!(matches!(Archive::from_bytes(&bad), Err(Error::VersionMismatch { found: 9, .. })));
        assert!(matches!(Archive::from_bytes(b"EIGAVTR0"), Err(Error::Format(_))));
        let good = a.to_bytes();
        assert!(Archive::from_bytes(&good[..good.len() - 1]).is_err());
    }

    #[test]
    fn unwritable_target_names_the_archive() {
        let a = small_archive(Precision::F32);
        let err = a.save(Path::new("/nonexistent-dir/x.eav")).unwrap_err();
        assert!(err.to_string().contains("archive"), "{err}");
    }
}
