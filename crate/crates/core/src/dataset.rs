//! Sequences on disk.
//!
//! ```text
//! <dir>/sequence.json        cameras, poses, shape, anchors, generator config
//! <dir>/body.obj             body model (+ body.parts.json, body.model.json)
//! <dir>/meshes/00000.obj     per-frame meshes (+ .parts.json)
//! <dir>/images/00000_0.ppm   per-frame, per-camera images
//! ```
//!
//! A registration output directory has the same layout without `images/`
//! and without the body model.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::body::{load_body_model, save_body_model, BodyModel, PoseParams, ShapeParams};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::mesh::{load_mesh, save_mesh, Mesh};
use crate::raster::{Camera, Image};
use crate::registration::{Anchor, FrameTrace, RegistrationResult};
use crate::synth::{SynthConfig, SynthSequence};

pub const SEQUENCE_FORMAT: &str = "eigen-avatar/sequence";
pub const SEQUENCE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFile {
    pub format: String,
    pub version: u32,
    pub frames: usize,
    pub cameras: Vec<Camera>,
    pub poses: Vec<PoseParams>,
    pub shape: ShapeParams,
    #[serde(default)]
    pub anchors: Vec<Anchor>,
    #[serde(default)]
    pub images: bool,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub traces: Vec<FrameTrace>,
}

/// A loaded sequence: meshes with their poses, and optionally a body model
/// and images.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub body: Option<BodyModel>,
    pub file: SequenceFile,
    pub meshes: Vec<Mesh>,
    pub images: Vec<Vec<Image>>,
}

fn mesh_path(dir: &Path, f: usize) -> PathBuf {
    dir.join("meshes").join(format!("{f:05}.obj"))
}

fn image_path(dir: &Path, f: usize, c: usize) -> PathBuf {
    dir.join("images").join(format!("{f:05}_{c}.ppm"))
}

pub fn body_path(dir: &Path) -> PathBuf {
    dir.join("body.obj")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, "creating directory", e))
}

fn write_common(dir: &Path, file: &SequenceFile, meshes: &[Mesh]) -> Result<()> {
    create_dir(&dir.join("meshes"))?;
    for (f, m) in meshes.iter().enumerate() {
        save_mesh(m, &mesh_path(dir, f))?;
    }
    fsutil::write_json(&dir.join("sequence.json"), file, "sequence")
}

pub fn save_synth(seq: &SynthSequence, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    save_body_model(&seq.model, &body_path(dir))?;
    if !seq.images.is_empty() {
        create_dir(&dir.join("images"))?;
        for (f, frame) in seq.images.iter().enumerate() {
            for (c, im) in frame.iter().enumerate() {
                im.save_ppm(&image_path(dir, f, c))?;
            }
        }
    }
    let file = SequenceFile {
        format: SEQUENCE_FORMAT.into(),
        version: SEQUENCE_VERSION,
        frames: seq.meshes.len(),
        cameras: seq.cameras.clone(),
        poses: seq.poses.clone(),
        shape: seq.shape.clone(),
        anchors: seq.anchors.clone(),
        images: !seq.images.is_empty(),
        synth: Some(seq.config.clone()),
        traces: Vec::new(),
    };
    write_common(dir, &file, &seq.meshes)
}

pub fn save_registration(result: &RegistrationResult, cameras: &[Camera], dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let file = SequenceFile {
        format: SEQUENCE_FORMAT.into(),
        version: SEQUENCE_VERSION,
        frames: result.meshes.len(),
        cameras: cameras.to_vec(),
        poses: result.poses.clone(),
        shape: result.shape.clone(),
        anchors: Vec::new(),
        images: false,
        synth: None,
        traces: result.traces.clone(),
    };
    write_common(dir, &file, &result.meshes)
}

/// Loads `dir`; `max_frames` truncates the sequence.
pub fn load(dir: &Path, max_frames: Option<usize>) -> Result<Sequence> {
    let file: SequenceFile = serde_json::from_str(&fsutil::read_to_string(&dir.join("sequence.json"), "sequence")?)?;
    if file.format != SEQUENCE_FORMAT || file.version != SEQUENCE_VERSION {
        return Err(Error::Format(format!("unsupported sequence {} v{}", file.format, file.version)));
    }
    if file.poses.len() != file.frames {
        return Err(Error::Format(format!("{} poses for {} frames", file.poses.len(), file.frames)));
    }
    let n = max_frames.map_or(file.frames, |m| m.min(file.frames));
    let body = if body_path(dir).exists() {
        Some(load_body_model(&body_path(dir))?)
    } else {
        None
    };
    let meshes = (0..n).map(|f| load_mesh(&mesh_path(dir, f))).collect::<Result<Vec<_>>>()?;
    let images = if file.images {
        (0..n)
            .map(|f| (0..file.cameras.len()).map(|c| Image::load_ppm(&image_path(dir, f, c))).collect())
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let mut file = file;
    file.frames = n;
    file.poses.truncate(n);
    Ok(Sequence {
        body,
        file,
        meshes,
        images,
    })
}
