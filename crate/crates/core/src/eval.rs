//! Reconstruction error reports: per-vertex / per-part / per-frame RMSE,
//! pseudo-color error heatmaps, contribution and coefficient tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::deform::{fit_deform_model, part_rmse, vertex_rmse, DeformModel, DisplacementField};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::pipeline::{self, CoefficientSource};
use crate::raster::{self, heat_color, Camera, Image};
use crate::subspace::Rank;

/// Default heatmap range as a fraction of the bounding-box diagonal.
pub const DEFAULT_HEAT_RANGE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldoutSpec {
    pub interpolation: Vec<(usize, usize)>,
    pub extrapolation: Vec<(usize, usize)>,
}

impl Default for HoldoutSpec {
    fn default() -> Self {
        Self {
            interpolation: vec![(40, 44), (100, 104), (160, 164), (380, 384), (440, 444)],
            extrapolation: vec![(220, 320)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameClass {
    Training,
    Interpolation,
    Extrapolation,
}

impl HoldoutSpec {
    pub fn ranges(&self) -> Vec<(usize, usize)> {
        self.interpolation.iter().chain(&self.extrapolation).copied().collect()
    }

    pub fn class(&self, f: usize) -> FrameClass {
        let inside = |r: &[(usize, usize)]| r.iter().any(|&(a, b)| f >= a && f < b);
        if inside(&self.extrapolation) {
            FrameClass::Extrapolation
        } else if inside(&self.interpolation) {
            FrameClass::Interpolation
        } else {
            FrameClass::Training
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame: usize,
    pub class: FrameClass,
    pub rmse: f64,
    pub part_rmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: FrameClass,
    pub frames: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source: CoefficientSource,
    pub bbox_diagonal: f64,
    pub frames: Vec<FrameError>,
    pub summary: Vec<ClassSummary>,
    /// `contribution[part][L-1]`: cumulative contribution of the first `L`
    /// eigenvectors.
    pub contribution: Vec<Vec<f64>>,
    pub compression: pipeline::Compression,
    pub seconds: f64,
}

impl EvalReport {
    pub fn rmse_of(&self, class: FrameClass) -> Option<f64> {
        self.summary.iter().find(|s| s.class == class && s.frames > 0).map(|s| s.rmse)
    }
}

/// Distance per vertex.
pub fn vertex_errors(a: &Mesh, b: &Mesh) -> Result<Vec<f64>> {
    if a.vertex_count() != b.vertex_count() {
        return Err(Error::param("meshes differ in vertex count"));
    }
    Ok(a.vertices().iter().zip(b.vertices()).map(|(x, y)| (x - y).norm()).collect())
}

/// Cumulative contribution ratios of every part for `L = 1..=rank`.
pub fn contribution_table(deform: &DeformModel) -> Vec<Vec<f64>> {
    deform
        .subspaces()
        .iter()
        .map(|s| {
            let total = s.total_variance();
            let mut acc = 0.0;
            s.eigenvalues()
                .iter()
                .map(|l| {
                    acc += l;
                    if total > 0.0 {
                        (acc / total).clamp(0.0, 1.0)
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Decodes `frames` and compares them with `truth[frame]`.
pub fn evaluate(
    archive: &Archive,
    truth: &[Mesh],
    frames: &[usize],
    holdout: &HoldoutSpec,
    source: CoefficientSource,
) -> Result<EvalReport> {
    let clock = std::time::Instant::now();
    let pv = archive.deform.part_vertices().to_vec();
    let mut rows = Vec::with_capacity(frames.len());
    for &f in frames {
        let gt = truth
            .get(f)
            .ok_or_else(|| Error::param(format!("no ground truth for frame {f} ({} meshes)", truth.len())))?;
        let pose = archive
            .poses
            .get(f)
            .ok_or_else(|| Error::param(format!("frame {f} not in archive")))?;
        let m = pipeline::decode_mesh(archive, pose, Some(f), source)?;
        if m.vertex_count() != gt.vertex_count() {
            return Err(Error::param(format!("frame {f}: ground truth has a different vertex count")));
        }
        rows.push(FrameError {
            frame: f,
            class: holdout.class(f),
            rmse: vertex_rmse(&m, gt),
            part_rmse: part_rmse(&m, gt, &pv),
        });
    }
    let summary = [FrameClass::Training, FrameClass::Interpolation, FrameClass::Extrapolation]
        .into_iter()
        .map(|class| {
            let sel: Vec<f64> = rows.iter().filter(|r| r.class == class).map(|r| r.rmse).collect();
            let rmse = if sel.is_empty() {
                0.0
            } else {
                (sel.iter().map(|x| x * x).sum::<f64>() / sel.len() as f64).sqrt()
            };
            ClassSummary {
                class,
                frames: sel.len(),
                rmse,
            }
        })
        .collect();
    Ok(EvalReport {
        source,
        bbox_diagonal: truth.first().map_or(0.0, Mesh::bbox_diagonal),
        frames: rows,
        summary,
        contribution: contribution_table(&archive.deform),
        compression: pipeline::compression(archive),
        seconds: clock.elapsed().as_secs_f64(),
    })
}

/// RMSE per part of reconstructing every field at each rank in `ranks`
/// (nested truncations of one fit): `out[i][part]`.
pub fn rank_sweep(fields: &[DisplacementField], part_vertices: &[Vec<usize>], ranks: &[usize]) -> Result<Vec<Vec<f64>>> {
    let max = ranks.iter().copied().max().ok_or_else(|| Error::param("empty rank list"))?;
    let full = fit_deform_model(fields, part_vertices, Rank::AtMost(max))?;
    ranks
        .iter()
        .map(|&l| {
            let m = full.truncated(l)?;
            let mut sq = vec![0.0; part_vertices.len()];
            for f in fields {
                let back = m.decode(&m.embed(f)?)?;
                for (l, (a, b)) in back.parts.iter().zip(&f.parts).enumerate() {
                    sq[l] += a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
                }
            }
            Ok(sq
                .iter()
                .zip(part_vertices)
                .map(|(s, idx)| {
                    if idx.is_empty() {
                        0.0
                    } else {
                        (s / (fields.len() * idx.len()) as f64).sqrt()
                    }
                })
                .collect())
        })
        .collect()
}

/// Renders per-vertex `errors` as colors interpolated over each triangle,
/// blue at 0 and red at `range`; background black.
pub fn heatmap(mesh: &Mesh, errors: &[f64], camera: &Camera, range: f64) -> Result<Image> {
    if errors.len() != mesh.vertex_count() {
        return Err(Error::param("one error value per vertex required"));
    }
    if !(range > 0.0) {
        return Err(Error::param("heatmap range must be > 0"));
    }
    let (_, ids) = raster::rasterize(mesh, camera);
    let mut im = Image::new(camera.width, camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let Some(t) = ids.get(x, y) else { continue };
            let b = raster::pixel_barycentrics(mesh, camera, t, (x as f64 + 0.5, y as f64 + 0.5));
            let [i, j, k] = mesh.triangles()[t];
            let e = b[0] * errors[i] + b[1] * errors[j] + b[2] * errors[k];
            im.set_f64(x, y, heat_color(e / range));
        }
    }
    Ok(im)
}

/// `frame class rmse part0 part1 ...`
pub fn frames_tsv(report: &EvalReport) -> String {
    let parts = report.frames.first().map_or(0, |r| r.part_rmse.len());
    let mut out = String::from("frame\tclass\trmse");
    for l in 0..parts {
        let _ = write!(out, "\tpart{l}");
    }
    out.push('\n');
    for r in &report.frames {
        let _ = write!(out, "{}\t{}\t{:.9e}", r.frame, class_name(r.class), r.rmse);
        for x in &r.part_rmse {
            let _ = write!(out, "\t{x:.9e}");
        }
        out.push('\n');
    }
    out
}

fn class_name(c: FrameClass) -> &'static str {
    match c {
        FrameClass::Training => "training",
        FrameClass::Interpolation => "interpolation",
        FrameClass::Extrapolation => "extrapolation",
    }
}

/// `part L ratio`, one row per part and rank.
pub fn contribution_tsv(table: &[Vec<f64>]) -> String {
    let mut out = String::from("part\tL\tcumulative_contribution\n");
    for (p, row) in table.iter().enumerate() {
        for (l, r) in row.iter().enumerate() {
            let _ = writeln!(out, "{p}\t{}\t{r:.9}", l + 1);
        }
    }
    out
}

/// Stored and regressed deformation coefficients of one part per frame.
pub fn coefficient_tsv(archive: &Archive, part: usize, frames: &[usize]) -> Result<String> {
    let rank = *archive
        .deform
        .ranks()
        .get(part)
        .ok_or_else(|| Error::param(format!("no part {part}")))?;
    let mut out = String::from("frame");
    for k in 0..rank {
        let _ = write!(out, "\tstored{k}");
    }
    for k in 0..rank {
        let _ = write!(out, "\tregressed{k}");
    }
    out.push('\n');
    for &f in frames {
        let pose = archive
            .poses
            .get(f)
            .ok_or_else(|| Error::param(format!("frame {f} not in archive")))?;
        let stored = pipeline::deform_coefficients(archive, pose, Some(f), CoefficientSource::Stored)?;
        let regressed = pipeline::deform_coefficients(archive, pose, Some(f), CoefficientSource::Regressed)?;
        let _ = write!(out, "{f}");
        for x in stored[part].iter().chain(&regressed[part]) {
            let _ = write!(out, "\t{x:.9e}");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{encode, EncodeConfig, EncodeInput};
    use crate::regress::TrainConfig;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn identical_meshes_give_an_all_zero_heatmap() {
        let s = generate(&SynthConfig {
            frames: 1,
            rings: 3,
            segments: 5,
            image_size: 48,
            render_images: false,
            ..SynthConfig::default()
        })
        .unwrap();
        let m = &s.meshes[0];
        let e = vertex_errors(m, m).unwrap();
        assert!(e.iter().all(|&x| x == 0.0));
        let im = heatmap(m, &e, &s.cameras[0], DEFAULT_HEAT_RANGE * m.bbox_diagonal()).unwrap();
        let cold = raster::to_u8(heat_color(0.0)[0]);
        let mut covered = 0;
        for y in 0..48 {
            for x in 0..48 {
                let px = im.get(x, y);
                if px != [0, 0, 0] {
                    covered += 1;
                    assert_eq!(px, heat_color(0.0).map(raster::to_u8));
                    assert_eq!(px[0], cold);
                }
            }
        }
        assert!(covered > 20);
    }

    #[test]
    fn sweep_is_monotone_and_report_has_classes() {
        let s = generate(&SynthConfig {
            frames: 40,
            rings: 3,
            segments: 5,
            render_images: false,
            excursion: (30, 40),
            ..SynthConfig::default()
        })
        .unwrap();
        let fields = pipeline::displacement_fields(&s.model, &s.shape, &s.poses, &s.meshes).unwrap();
        let pv = s.model.template().part_vertices(16);
        let sweep = rank_sweep(&fields, &pv, &[1, 3, 5]).unwrap();
        for l in 0..16 {
            assert!(sweep[0][l] >= sweep[1][l] - 1e-12 && sweep[1][l] >= sweep[2][l] - 1e-12);
        }
        let holdout = HoldoutSpec {
            interpolation: vec![(10, 12)],
            extrapolation: vec![(30, 40)],
        };
        let cfg = EncodeConfig {
            holdout: holdout.ranges(),
            textures: false,
            train: TrainConfig {
                iterations: 200,
                ..TrainConfig::default()
            },
            ..EncodeConfig::default()
        };
        let input = EncodeInput {
            body: &s.model,
            shape: &s.shape,
            poses: &s.poses,
            meshes: &s.meshes,
            cameras: &[],
            images: &[],
            seeds: Default::default(),
        };
        let (a, _) = encode(&input, &cfg).unwrap();
        let frames: Vec<usize> = (0..40).collect();
        let r = evaluate(&a, &s.meshes, &frames, &holdout, CoefficientSource::Regressed).unwrap();
        assert_eq!(r.frames.len(), 40);
        assert_eq!(r.summary.iter().map(|c| c.frames).collect::<Vec<_>>(), vec![28, 2, 10]);
        assert!(r.frames.iter().all(|f| f.rmse >= 0.0));
        assert!(frames_tsv(&r).lines().count() == 41);
        assert!(contribution_tsv(&r.contribution).starts_with("part\tL"));
        assert_eq!(coefficient_tsv(&a, 4, &[0, 1]).unwrap().lines().count(), 3);
        assert!(evaluate(&a, &s.meshes[..5], &frames, &holdout, CoefficientSource::Stored).is_err());
    }
}
