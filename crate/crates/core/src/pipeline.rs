//! Encode a registered sequence into an [`Archive`] and decode frames or
//! arbitrary poses back into textured meshes.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{quantize_coeffs, Archive, Manifest};
use crate::binio::Precision;
use crate::body::{BodyModel, PoseParams, ShapeParams};
use crate::deform::{apply_displacements, displacement_field, fit_deform_model, DisplacementField};
use crate::error::{Error, Result};
use crate::geometry::vectorize_row_major;
use crate::mesh::Mesh;
use crate::raster::{self, Camera, Image, TriangleTexture};
use crate::regress::{self, Batch, Regressor, TrainConfig};
use crate::subspace::Rank;
use crate::texture::{self, RegressorMode, TriangleModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub deform_rank: Rank,
    pub texture_rank: Rank,
    pub texel_side: usize,
    /// Visibility depth tolerance; `None` uses 1e-3 of the first mesh's
    /// bounding-box diagonal.
    pub epsilon: Option<f64>,
    pub precision: Precision,
    /// Frame ranges `[start, end)` excluded from regressor training.
    pub holdout: Vec<(usize, usize)>,
    pub train: TrainConfig,
    pub regressor_mode: RegressorMode,
    pub regressors: bool,
    pub textures: bool,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            deform_rank: Rank::AtMost(10),
            texture_rank: texture::DEFAULT_RANK,
            texel_side: texture::DEFAULT_SIDE,
            epsilon: None,
            precision: Precision::F32,
            holdout: Vec::new(),
            train: TrainConfig::default(),
            regressor_mode: RegressorMode::PerPart,
            regressors: true,
            textures: true,
        }
    }
}

impl EncodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.texel_side == 0 {
            return Err(Error::Configuration("texel_side must be >= 1".into()));
        }
        if self.epsilon.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::Configuration("epsilon must be > 0".into()));
        }
        if self.holdout.iter().any(|(a, b)| a >= b) {
            return Err(Error::Configuration("holdout ranges must be non-empty [start, end)".into()));
        }
        self.train.validate()
    }

    pub fn is_training_frame(&self, f: usize) -> bool {
        !self.holdout.iter().any(|&(a, b)| f >= a && f < b)
    }
}

/// A registered sequence: body, shape, per-frame poses and meshes, and the
/// views the meshes were captured from (`images[frame][camera]`, may be
/// empty).
pub struct EncodeInput<'a> {
    pub body: &'a BodyModel,
    pub shape: &'a ShapeParams,
    pub poses: &'a [PoseParams],
    pub meshes: &'a [Mesh],
    pub cameras: &'a [Camera],
    pub images: &'a [Vec<Image>],
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compression {
    pub archive_bytes: usize,
    pub raw_vertex_bytes: usize,
    pub raw_texture_bytes: usize,
    /// `archive_bytes / (raw_vertex_bytes + raw_texture_bytes)`.
    pub ratio: f64,
    /// `DEFM + DCOF` payload bytes.
    pub deformation_bytes: usize,
    /// `deformation_bytes / raw_vertex_bytes`.
    pub deformation_ratio: f64,
    /// `TEXM + TCOF` payload bytes.
    pub texture_bytes: usize,
    pub texture_ratio: f64,
    pub sections: Vec<(String, usize)>,
    pub formula: String,
}

pub const COMPRESSION_FORMULA: &str = "raw = 4 bytes x 3 coords x vertices x frames + 4 bytes x 3N texels x (triangle, frame) pairs that passed visibility; ratio = archive bytes / raw";

/// Archive size against the raw baseline of 32-bit vertex positions for
/// every frame plus 32-bit texels for every observed triangle texture.
pub fn compression(archive: &Archive) -> Compression {
    let m = &archive.manifest;
    let raw_vertex_bytes = 4 * 3 * m.vertex_count * m.frame_count;
    let raw_texture_bytes = archive.texture.as_ref().map_or(0, |t| {
        let d = 3 * raster::texel_count(t.side());
        (0..t.triangle_count()).map(|i| 4 * d * t.visible_frames(i).len()).sum()
    });
    let archive_bytes = archive.to_bytes().len();
    let sections = archive.section_sizes();
    let size = |tags: &[&str]| {
        sections
            .iter()
            .filter(|(t, _)| tags.contains(&t.as_str()))
            .map(|(_, n)| n)
            .sum::<usize>()
    };
    let deformation_bytes = size(&["DEFM", "DCOF"]);
    let texture_bytes = size(&["TEXM", "TCOF"]);
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Compression {
        archive_bytes,
        raw_vertex_bytes,
        raw_texture_bytes,
        ratio: div(archive_bytes, raw_vertex_bytes + raw_texture_bytes),
        deformation_bytes,
        deformation_ratio: div(deformation_bytes, raw_vertex_bytes),
        texture_bytes,
        texture_ratio: div(texture_bytes, raw_texture_bytes),
        sections,
        formula: COMPRESSION_FORMULA.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeReport {
    pub compression: Compression,
    pub deform_ranks: Vec<usize>,
    pub deform_contribution: Vec<f64>,
    pub textured_triangles: usize,
    pub never_observed: usize,
    /// Final training loss per part regressor.
    pub deform_losses: Vec<Option<f64>>,
    pub seconds: BTreeMap<String, f64>,
}

fn check_input(input: &EncodeInput<'_>) -> Result<()> {
    let f = input.poses.len();
    if f == 0 || input.meshes.len() != f {
        return Err(Error::param(format!("{} poses for {} meshes", f, input.meshes.len())));
    }
    input.body.check_params(&input.poses[0], input.shape)?;
    let template = input.body.template();
    if input
        .meshes
        .iter()
        .any(|m| m.vertex_count() != template.vertex_count() || m.triangles() != template.triangles())
    {
        return Err(Error::param("registered meshes must share the body template's topology"));
    }
    Ok(())
}

/// Per-frame local displacement fields between the registered meshes and the
/// posed body.
pub fn displacement_fields(body: &BodyModel, shape: &ShapeParams, poses: &[PoseParams], meshes: &[Mesh]) -> Result<Vec<DisplacementField>> {
    poses
        .par_iter()
        .zip(meshes)
        .map(|(pose, m)| {
            let naked = body.pose_model(pose, shape)?;
            let frames = body.part_frames(pose)?;
            let labelled = m.with_parts(naked.part_of_vertex().to_vec())?;
            displacement_field(&labelled, &naked, &frames)
        })
        .collect()
}

fn train_deform_regressors(
    poses: &[PoseParams],
    coeffs: &[Vec<Vec<f64>>],
    ranks: &[usize],
    config: &EncodeConfig,
) -> Result<Vec<Option<(Regressor, f64)>>> {
    let frames: Vec<usize> = (0..poses.len()).filter(|&f| config.is_training_frame(f)).collect();
    if frames.is_empty() {
        return Err(Error::Configuration("every frame is held out".into()));
    }
    ranks
        .par_iter()
        .enumerate()
        .map(|(l, &rank)| {
            if rank == 0 {
                return Ok(None);
            }
            let inputs: Vec<[f64; 9]> = frames.iter().map(|&f| vectorize_row_major(&poses[f].local_rotation(l))).collect();
            let targets: Vec<&[f64]> = frames.iter().map(|&f| coeffs[f][l].as_slice()).collect();
            let (reg, trace) = regress::fit(&Batch::new(&inputs, &targets)?, &config.train, true)?;
            Ok(Some((reg, *trace.last().unwrap_or(&f64::NAN))))
        })
        .collect()
}

/// Fits the deformation and texture models, trains the regressors on the
/// non-held-out frames and packs everything into an archive.
pub fn encode(input: &EncodeInput<'_>, config: &EncodeConfig) -> Result<(Archive, EncodeReport)> {
    config.validate()?;
    check_input(input)?;
    let p = config.precision;
    let mut seconds = BTreeMap::new();
    let clock = Instant::now();
    let fields = displacement_fields(input.body, input.shape, input.poses, input.meshes).map_err(|e| e.in_stage("deformation"))?;
    let part_vertices = input.body.template().part_vertices(input.body.part_count());
    let deform = fit_deform_model(&fields, &part_vertices, config.deform_rank)
        .map_err(|e| e.in_stage("deformation"))?
        .quantized(p);
    let deform_coeffs: Vec<Vec<Vec<f64>>> = fields
        .iter()
        .map(|f| deform.embed(f).map(|c| quantize_coeffs(&c, p)))
        .collect::<Result<_>>()?;
    seconds.insert("deformation".to_string(), clock.elapsed().as_secs_f64());

    let eps = config.epsilon.unwrap_or_else(|| raster::default_epsilon(&input.meshes[0]));
    let clock = Instant::now();
    let textured = config.textures && !input.cameras.is_empty() && !input.images.is_empty();
    let (texture, texture_coeffs) = if textured {
        let views = texture::assign_views(input.meshes, input.cameras, eps).map_err(|e| e.in_stage("texture"))?;
        let (mut model, coeffs) = texture::fit_streaming(
            &views,
            input.meshes,
            input.cameras,
            input.images,
            config.texel_side,
            config.texture_rank,
        )
        .map_err(|e| e.in_stage("texture"))?;
        model.assign_fallbacks(input.body.template())?;
        let model = model.quantized(p);
        let coeffs: Vec<Vec<Vec<f64>>> = coeffs.iter().map(|c| quantize_coeffs(c, p)).collect();
        (Some(model), coeffs)
    } else {
        (None, Vec::new())
    };
    seconds.insert("texture".to_string(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let mut deform_losses = vec![None; deform.part_count()];
    let (deform_regressors, texture_regressors) = if config.regressors {
        let trained =
            train_deform_regressors(input.poses, &deform_coeffs, &deform.ranks(), config).map_err(|e| e.in_stage("regression"))?;
        let regs = trained
            .into_iter()
            .enumerate()
            .map(|(l, r)| {
                r.map(|(reg, loss)| {
                    deform_losses[l] = Some(loss);
                    reg.quantized(p)
                })
            })
            .collect();
        let tex_regs = match &texture {
            Some(model) => {
                let train: Vec<bool> = (0..input.poses.len()).map(|f| config.is_training_frame(f)).collect();
                Some(
                    texture::fit_texture_regressors(
                        model,
                        &texture_coeffs,
                        input.poses,
                        &train,
                        input.body.template(),
                        config.regressor_mode,
                        &config.train,
                    )
                    .map_err(|e| e.in_stage("regression"))?
                    .quantized(p),
                )
            }
            None => None,
        };
        (Some(regs), tex_regs)
    } else {
        (None, None)
    };
    seconds.insert("regression".to_string(), clock.elapsed().as_secs_f64());

    let template = input.body.template();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        frame_count: input.poses.len(),
        vertex_count: template.vertex_count(),
        triangle_count: template.triangle_count(),
        units: "scene units (meters)".into(),
        texel_side: config.texel_side,
        epsilon: eps,
        precision: p,
        holdout: config.holdout.clone(),
        seeds: input
            .seeds
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .chain([("train".to_string(), config.train.seed)])
            .collect(),
        notes: BTreeMap::new(),
    };
    let archive = Archive {
        manifest,
        body: input.body.clone(),
        shape: input.shape.clone(),
        poses: input.poses.to_vec(),
        deform,
        deform_coeffs,
        texture,
        texture_coeffs,
        deform_regressors,
        texture_regressors,
    };
    archive.validate()?;
    let report = EncodeReport {
        compression: compression(&archive),
        deform_ranks: archive.deform.ranks(),
        deform_contribution: archive.deform.subspaces().iter().map(|s| s.contribution_ratio()).collect(),
        textured_triangles: archive.texture.as_ref().map_or(0, |t| t.observed_count()),
        never_observed: archive.texture.as_ref().map_or(0, |t| t.triangle_count() - t.observed_count()),
        deform_losses,
        seconds,
    };
    Ok((archive, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    /// Coefficients stored for a training frame; unseen triangles fall back
    /// to regression.
    Stored,
    /// Everything predicted from the pose.
    Regressed,
}

/// Deformation coefficients for a pose.
pub fn deform_coefficients(archive: &Archive, pose: &PoseParams, frame: Option<usize>, source: CoefficientSource) -> Result<Vec<Vec<f64>>> {
    match source {
        CoefficientSource::Stored => {
            let f = frame.ok_or_else(|| Error::param("stored coefficients need a frame index"))?;
            archive
                .deform_coeffs
                .get(f)
                .cloned()
                .ok_or_else(|| Error::param(format!("frame {f} not in archive ({} frames)", archive.deform_coeffs.len())))
        }
        CoefficientSource::Regressed => {
            let regs = archive
                .deform_regressors
                .as_ref()
                .ok_or_else(|| Error::Configuration("archive has no deformation regressors".into()))?;
            archive
                .deform
                .ranks()
                .iter()
                .enumerate()
                .map(|(l, &rank)| match regs.get(l).and_then(Option::as_ref) {
                    _ if rank == 0 => Ok(Vec::new()),
                    Some(reg) => reg.predict(&vectorize_row_major(&pose.local_rotation(l))),
                    None => Err(Error::Configuration(format!("no regressor for part {l}"))),
                })
                .collect()
        }
    }
}

/// The clothed mesh `M` for a pose: posed body plus decoded displacements.
pub fn decode_mesh(archive: &Archive, pose: &PoseParams, frame: Option<usize>, source: CoefficientSource) -> Result<Mesh> {
    let coeffs = deform_coefficients(archive, pose, frame, source)?;
    let naked = archive.body.pose_model(pose, &archive.shape)?;
    let frames = archive.body.part_frames(pose)?;
    apply_displacements(&naked, &coeffs, &archive.deform, &frames)
}

/// Every triangle's texture for a pose; `None` where no texture exists.
pub fn decode_textures(
    archive: &Archive,
    pose: &PoseParams,
    frame: Option<usize>,
    source: CoefficientSource,
) -> Result<Vec<Option<TriangleTexture>>> {
    let model = archive
        .texture
        .as_ref()
        .ok_or_else(|| Error::Configuration("archive has no texture model".into()))?;
    let label = frame.unwrap_or(usize::MAX);
    if source == CoefficientSource::Stored && frame.is_none_or(|f| f >= model.frame_count()) {
        return Err(Error::param("stored coefficients need a frame index inside the archive"));
    }
    let predicted = match &archive.texture_regressors {
        Some(r) => Some(r.predict_frame(pose)?),
        None if source == CoefficientSource::Regressed => {
            return Err(Error::Configuration("archive has no texture regressors".into()));
        }
        None => None,
    };
    (0..model.triangle_count())
        .map(|t| {
            let c = match model.triangle(t) {
                Some(TriangleModel::Missing) | None => return Ok(None),
                Some(TriangleModel::Borrowed(_)) => Vec::new(),
                Some(TriangleModel::Observed(s)) => {
                    let stored = match (source, frame) {
                        (CoefficientSource::Stored, Some(f)) if model.is_visible(t, f) => {
                            let k = model.visible_frames(t).binary_search(&f).expect("visible frame");
                            Some(archive.texture_coeffs[t][k].clone())
                        }
                        _ => None,
                    };
                    match (stored, &predicted) {
                        (Some(c), _) => c,
                        (None, Some(pred)) if pred[t].len() == s.rank() => pred[t].clone(),
                        _ => vec![0.0; s.rank()],
                    }
                }
            };
            texture::synthesize_texture(model, t, &c, label).map(Some)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DecodedFrame {
    pub mesh: Mesh,
    pub textures: Vec<Option<TriangleTexture>>,
}

/// Mesh and (if the archive has them) textures for a stored frame.
pub fn decode_frame(archive: &Archive, frame: usize, source: CoefficientSource) -> Result<DecodedFrame> {
    let pose = archive
        .poses
        .get(frame)
        .ok_or_else(|| Error::param(format!("frame {frame} not in archive")))?;
    decode_pose(archive, pose, Some(frame), source)
}

pub fn decode_pose(archive: &Archive, pose: &PoseParams, frame: Option<usize>, source: CoefficientSource) -> Result<DecodedFrame> {
    let mesh = decode_mesh(archive, pose, frame, source).map_err(|e| e.in_stage("decode mesh"))?;
    let textures = if archive.texture.is_some() {
        decode_textures(archive, pose, frame, source).map_err(|e| e.in_stage("decode textures"))?
    } else {
        Vec::new()
    };
    Ok(DecodedFrame { mesh, textures })
}

/// Renders a decoded frame: textured triangles where available, gray elsewhere.
pub fn render_decoded(decoded: &DecodedFrame, camera: &Camera) -> Image {
    let (_, ids) = raster::rasterize(&decoded.mesh, camera);
    let mut image = Image::filled(camera.width, camera.height, [0, 0, 0]);
    for y in 0..camera.height {
        for x in 0..camera.width {
            if ids.get(x, y).is_some() {
                image.set(x, y, [128, 128, 128]);
            }
        }
    }
    for tex in decoded.textures.iter().flatten() {
        raster::render_texture(&mut image, &decoded.mesh, camera, &ids, tex);
    }
    image
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::vertex_rmse;
    use crate::synth::{generate, SynthConfig};

    fn small() -> SynthConfig {
        SynthConfig {
            frames: 24,
            rings: 3,
            segments: 5,
            image_size: 64,
            excursion: (0, 0),
            ..SynthConfig::default()
        }
    }

    fn input(s: &crate::synth::SynthSequence) -> EncodeInput<'_> {
        EncodeInput {
            body: &s.model,
            shape: &s.shape,
            poses: &s.poses,
            meshes: &s.meshes,
            cameras: &s.cameras,
            images: &s.images,
            seeds: BTreeMap::from([("synth".to_string(), s.config.seed)]),
        }
    }

    fn quick() -> EncodeConfig {
        EncodeConfig {
            texel_side: 4,
            train: TrainConfig {
                iterations: 300,
                ..TrainConfig::default()
            },
            ..EncodeConfig::default()
        }
    }

    #[test]
    fn full_rank_is_lossless_on_training_frames() {
        let s = generate(&SynthConfig {
            render_images: false,
            ..small()
        })
        .unwrap();
        let cfg = EncodeConfig {
            deform_rank: Rank::Full,
            precision: Precision::F64,
            regressors: false,
            ..quick()
        };
        let (a, _) = encode(&input(&s), &cfg).unwrap();
        for f in 0..s.meshes.len() {
            let m = decode_mesh(&a, &s.poses[f], Some(f), CoefficientSource::Stored).unwrap();
            let rel = vertex_rmse(&m, &s.meshes[f]) / s.meshes[f].bbox_diagonal();
            assert!(rel < 1e-8, "frame {f}: {rel}");
        }
        assert!(matches!(
            decode_mesh(&a, &s.poses[0], None, CoefficientSource::Regressed),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn encode_is_deterministic_and_decodes_after_reload() {
        let s = generate(&small()).unwrap();
        let cfg = EncodeConfig {
            holdout: vec![(10, 14)],
            ..quick()
        };
        let (a, report) = encode(&input(&s), &cfg).unwrap();
        let (b, _) = encode(&input(&s), &cfg).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(bytes, b.to_bytes());
        let back = Archive::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert!(report.compression.ratio > 0.0);
        for source in [CoefficientSource::Stored, CoefficientSource::Regressed] {
            let d = decode_frame(&back, 11, source).unwrap();
            assert_eq!(d.mesh.vertex_count(), s.meshes[11].vertex_count());
            assert_eq!(d.textures.len(), s.meshes[11].triangle_count());
            assert!(d.textures.iter().flatten().all(|t| t.data.iter().all(|x| (0.0..=1.0).contains(x))));
            let rel = vertex_rmse(&d.mesh, &s.meshes[11]) / s.meshes[11].bbox_diagonal();
            assert!(rel < 0.02, "{source:?}: {rel}");
        }
        let img = render_decoded(&decode_frame(&back, 3, CoefficientSource::Stored).unwrap(), &s.cameras[0]);
        assert_eq!(img.width(), 64);
    }

    #[test]
    fn stored_textures_match_the_observed_ones() {
        let s = generate(&small()).unwrap();
        let cfg = EncodeConfig {
            texture_rank: Rank::Full,
            precision: Precision::F64,
            regressors: false,
            ..quick()
        };
        let (a, _) = encode(&input(&s), &cfg).unwrap();
        let tracks = texture::build_tracks(&s.meshes, &s.cameras, &s.images, a.manifest.epsilon, 4).unwrap();
        let d = decode_frame(&a, 5, CoefficientSource::Stored).unwrap();
        let mut checked = 0;
        for tr in &tracks {
            if let Some(obs) = tr.textures.iter().find(|t| t.frame == 5) {
                let got = d.textures[tr.triangle].as_ref().unwrap();
                let err = got.data.iter().zip(&obs.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
                assert!(err < 1e-5, "{err}");
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn mismatched_input_is_rejected() {
        let s = generate(&SynthConfig {
            render_images: false,
            ..small()
        })
        .unwrap();
        let mut i = input(&s);
        i.meshes = &s.meshes[..3];
        assert!(matches!(encode(&i, &quick()), Err(Error::Parameter(_))));
        let bad = EncodeConfig {
            holdout: vec![(5, 5)],
            ..quick()
        };
        assert!(matches!(encode(&input(&s), &bad), Err(Error::Configuration(_))));
    }
}
