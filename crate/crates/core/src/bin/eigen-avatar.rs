use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eigen_avatar::archive::Archive;
use eigen_avatar::body::PoseParams;
use eigen_avatar::dataset;
use eigen_avatar::eval::{self, HoldoutSpec};
use eigen_avatar::mesh::save_mesh;
use eigen_avatar::pipeline::{self, CoefficientSource, EncodeConfig, EncodeInput};
use eigen_avatar::raster::{Atlas, Camera};
use eigen_avatar::registration::{register_sequence, RegistrationConfig, Target};
use eigen_avatar::run::{load_config, parse_frames, RunManifest};
use eigen_avatar::synth::{self, SynthConfig};
use eigen_avatar::{Error, Result};

/// Pose-driven mesh and texture codec for animated bodies.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.iterations=2000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Stored,
    Regressed,
}

impl From<Source> for CoefficientSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Stored => CoefficientSource::Stored,
            Source::Regressed => CoefficientSource::Regressed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic capture: body, meshes, poses, camera images.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        no_images: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fit the body model to every mesh of a sequence.
    Register {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Build an archive from a sequence (and optionally a registration).
    Encode {
        #[arg(long)]
        input: PathBuf,
        /// Registration output; defaults to the poses and meshes stored in `--input`.
        #[arg(long)]
        registration: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write textured OBJ files for stored frames or a pose file.
    Decode {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Frame list like `0,5,10-20`.
        #[arg(long, conflicts_with = "pose")]
        frames: Option<String>,
        /// JSON pose (`{"rotations": [[x,y,z], ...], "translation": [x,y,z]}`).
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "stored")]
        source: Source,
    },
    /// Compare decoded frames against ground-truth meshes.
    Eval {
        #[arg(long)]
        archive: PathBuf,
        /// Sequence holding the meshes that were encoded.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<String>,
        #[arg(long, value_enum, default_value = "regressed")]
        source: Source,
        /// Frames to render error heatmaps for.
        #[arg(long)]
        heatmaps: Option<String>,
        #[arg(long, default_value_t = 0)]
        camera: usize,
        /// Heatmap saturation as a fraction of the bounding-box diagonal.
        #[arg(long, default_value_t = eval::DEFAULT_HEAT_RANGE)]
        range: f64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render decoded frames to PPM images.
    Render {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sequence whose cameras to use; default is the generator's rig.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, conflicts_with = "pose")]
        frames: Option<String>,
        #[arg(long)]
        pose: Option<PathBuf>,
        /// Camera indices like `0,2`; default all.
        #[arg(long)]
        cameras: Option<String>,
        #[arg(long, value_enum, default_value = "regressed")]
        source: Source,
    },
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        context: "creating output directory".into(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        context: "writing".into(),
        source: e,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn read_pose(path: &Path) -> Result<PoseParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        context: "reading pose".into(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn synth_cmd(out: &Path, seed: Option<u64>, frames: Option<usize>, no_images: bool, cfg: &ConfigArgs) -> Result<RunManifest> {
    let mut config: SynthConfig = load_config(cfg.config.as_deref(), &cfg.set)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(f) = frames {
        config.frames = f;
    }
    if no_images {
        config.render_images = false;
    }
    let seq = synth::generate(&config)?;
    dataset::save_synth(&seq, out)?;
    let mut m = RunManifest::new("synth", &config)?;
    m.seeds.insert("synth".into(), config.seed);
    m.outputs.push(path_str(out));
    log::info!(
        "{} frames, {} vertices written to {}",
        seq.meshes.len(),
        seq.model.template().vertex_count(),
        out.display()
    );
    Ok(m)
}

fn register_cmd(input: &Path, out: &Path, frames: Option<usize>, cfg: &ConfigArgs) -> Result<RunManifest> {
    let config: RegistrationConfig = load_config(cfg.config.as_deref(), &cfg.set)?;
    let seq = dataset::load(input, frames)?;
    let body = seq
        .body
        .as_ref()
        .ok_or_else(|| Error::Precondition(format!("{} has no body model", input.display())))?;
    let targets: Vec<Target> = seq.meshes.iter().cloned().map(Target::Mesh).collect();
    let result = register_sequence(body, &targets, &seq.file.anchors, &config)?;
    dataset::save_registration(&result, &seq.file.cameras, out)?;
    let mut m = RunManifest::new("register", &config)?;
    if let Some(s) = &seq.file.synth {
        m.seeds.insert("synth".into(), s.seed);
    }
    m.inputs.insert("sequence".into(), path_str(input));
    m.outputs.push(path_str(out));
    if !result.all_traces_non_increasing() {
        log::warn!("some stage energies increased");
    }
    Ok(m)
}

fn encode_cmd(
    input: &Path,
    registration: Option<&Path>,
    out: &Path,
    frames: Option<usize>,
    seed: Option<u64>,
    cfg: &ConfigArgs,
) -> Result<RunManifest> {
    let mut config: EncodeConfig = load_config(cfg.config.as_deref(), &cfg.set)?;
    if let Some(s) = seed {
        config.train.seed = s;
    }
    config.validate()?;
    let seq = dataset::load(input, frames)?;
    let body = seq
        .body
        .as_ref()
        .ok_or_else(|| Error::Precondition(format!("{} has no body model", input.display())))?;
    let reg = registration.map(|r| dataset::load(r, frames)).transpose()?;
    let (poses, shape, meshes) = match &reg {
        Some(r) => (&r.file.poses, &r.file.shape, &r.meshes),
        None => (&seq.file.poses, &seq.file.shape, &seq.meshes),
    };
    let mut seeds = BTreeMap::new();
    if let Some(s) = &seq.file.synth {
        seeds.insert("synth".to_string(), s.seed);
    }
    let enc = EncodeInput {
        body,
        shape,
        poses,
        meshes,
        cameras: &seq.file.cameras,
        images: &seq.images,
        seeds: seeds.clone(),
    };
    let (archive, report) = pipeline::encode(&enc, &config)?;
    mkdir(out)?;
    let path = out.join("archive.eav");
    archive.save(&path)?;
    write_json(&out.join("report.json"), &report)?;
    log::info!(
        "archive {} bytes, {:.2}% of raw ({:.2}% deformation only)",
        report.compression.archive_bytes,
        100.0 * report.compression.ratio,
        100.0 * report.compression.deformation_ratio
    );
    let mut m = RunManifest::new("encode", &config)?;
    m.seeds = archive.manifest.seeds.clone();
    m.inputs.insert("sequence".into(), path_str(input));
    if let Some(r) = registration {
        m.inputs.insert("registration".into(), path_str(r));
    }
    m.outputs.extend([path_str(&path), path_str(&out.join("report.json"))]);
    Ok(m)
}

/// `(label, pose, frame)` for every requested decode target.
fn targets(archive: &Archive, frames: Option<&str>, pose: Option<&Path>) -> Result<Vec<(String, PoseParams, Option<usize>)>> {
    if let Some(p) = pose {
        return Ok(vec![("pose".into(), read_pose(p)?, None)]);
    }
    Ok(parse_frames(frames, archive.poses.len())?
        .into_iter()
        .map(|f| (format!("frame_{f:05}"), archive.poses[f].clone(), Some(f)))
        .collect())
}

fn decode_cmd(archive_path: &Path, out: &Path, frames: Option<&str>, pose: Option<&Path>, source: Source) -> Result<RunManifest> {
    let archive = Archive::load(archive_path)?;
    mkdir(out)?;
    let mut m = RunManifest::new(
        "decode",
        &serde_json::json!({ "frames": frames, "source": CoefficientSource::from(source) }),
    )?;
    m.seeds = archive.manifest.seeds.clone();
    m.inputs.insert("archive".into(), path_str(archive_path));
    if let Some(p) = pose {
        m.inputs.insert("pose".into(), path_str(p));
    }
    for (label, pose, frame) in targets(&archive, frames, pose)? {
        let d = pipeline::decode_pose(&archive, &pose, frame, source.into())?;
        let stem = out.join(&label);
        if d.textures.is_empty() {
            save_mesh(&d.mesh, &stem.with_extension("obj"))?;
        } else {
            let refs: Vec<_> = d.textures.iter().map(Option::as_ref).collect();
            Atlas::build(&refs, archive.manifest.texel_side)?.save_with_mesh(&d.mesh, &stem)?;
        }
        m.outputs.push(path_str(&stem.with_extension("obj")));
    }
    Ok(m)
}

fn eval_cmd(
    archive_path: &Path,
    input: &Path,
    out: &Path,
    frames: Option<&str>,
    source: Source,
    heatmaps: Option<&str>,
    camera: usize,
    range: f64,
    cfg: &ConfigArgs,
) -> Result<RunManifest> {
    let holdout: HoldoutSpec = load_config(cfg.config.as_deref(), &cfg.set)?;
    let archive = Archive::load(archive_path)?;
    let seq = dataset::load(input, Some(archive.poses.len()))?;
    let frames = parse_frames(frames, archive.poses.len().min(seq.meshes.len()))?;
    let report = eval::evaluate(&archive, &seq.meshes, &frames, &holdout, source.into())?;
    mkdir(out)?;
    let mut m = RunManifest::new("eval", &holdout)?;
    m.seeds = archive.manifest.seeds.clone();
    m.inputs.insert("archive".into(), path_str(archive_path));
    m.inputs.insert("sequence".into(), path_str(input));
    let emit = |name: &str, text: &str, m: &mut RunManifest| -> Result<()> {
        let p = out.join(name);
        write_text(&p, text)?;
        m.outputs.push(path_str(&p));
        Ok(())
    };
    emit("report.json", &serde_json::to_string_pretty(&report)?, &mut m)?;
    emit("frames.tsv", &eval::frames_tsv(&report), &mut m)?;
    emit("contribution.tsv", &eval::contribution_tsv(&report.contribution), &mut m)?;
    for part in 0..archive.deform.part_count() {
        emit(
            &format!("coefficients_part{part:02}.tsv"),
            &eval::coefficient_tsv(&archive, part, &frames)?,
            &mut m,
        )?;
    }
    if let Some(spec) = heatmaps {
        let cam = seq
            .file
            .cameras
            .get(camera)
            .ok_or_else(|| Error::Configuration(format!("no camera {camera}")))?;
        for f in parse_frames(Some(spec), archive.poses.len().min(seq.meshes.len()))? {
            let decoded = pipeline::decode_mesh(&archive, &archive.poses[f], Some(f), source.into())?;
            let errors = eval::vertex_errors(&decoded, &seq.meshes[f])?;
            let img = eval::heatmap(&decoded, &errors, cam, range * report.bbox_diagonal)?;
            let p = out.join(format!("heatmap_{f:05}.ppm"));
            img.save_ppm(&p)?;
            m.outputs.push(path_str(&p));
        }
    }
    for s in &report.summary {
        log::info!("{:?}: {} frames, RMSE {:.3e}", s.class, s.frames, s.rmse);
    }
    Ok(m)
}

fn render_cmd(
    archive_path: &Path,
    out: &Path,
    input: Option<&Path>,
    frames: Option<&str>,
    pose: Option<&Path>,
    cameras: Option<&str>,
    source: Source,
) -> Result<RunManifest> {
    let archive = Archive::load(archive_path)?;
    let rig: Vec<Camera> = match input {
        Some(dir) => dataset::load(dir, Some(0))?.file.cameras,
        None => {
            let c = SynthConfig::default();
            synth::standard_cameras(c.image_size, c.fov_degrees, c.camera_distance)?
        }
    };
    let cams = parse_frames(cameras, rig.len())?;
    mkdir(out)?;
    let mut m = RunManifest::new(
        "render",
        &serde_json::json!({ "frames": frames, "cameras": cams, "source": CoefficientSource::from(source) }),
    )?;
    m.seeds = archive.manifest.seeds.clone();
    m.inputs.insert("archive".into(), path_str(archive_path));
    for (label, pose, frame) in targets(&archive, frames, pose)? {
        let d = pipeline::decode_pose(&archive, &pose, frame, source.into())?;
        for &c in &cams {
            let p = out.join(format!("{label}_cam{c}.ppm"));
            pipeline::render_decoded(&d, &rig[c]).save_ppm(&p)?;
            m.outputs.push(path_str(&p));
        }
    }
    Ok(m)
}

fn run(cli: Cli) -> Result<()> {
    let clock = Instant::now();
    let (mut manifest, dir) = match &cli.command {
        Command::Synth {
            out,
            seed,
            frames,
            no_images,
            cfg,
        } => (synth_cmd(out, *seed, *frames, *no_images, cfg)?, out.clone()),
        Command::Register { input, out, frames, cfg } => (register_cmd(input, out, *frames, cfg)?, out.clone()),
        Command::Encode {
            input,
            registration,
            out,
            frames,
            seed,
            cfg,
        } => (encode_cmd(input, registration.as_deref(), out, *frames, *seed, cfg)?, out.clone()),
        Command::Decode {
            archive,
            out,
            frames,
            pose,
            source,
        } => (decode_cmd(archive, out, frames.as_deref(), pose.as_deref(), *source)?, out.clone()),
        Command::Eval {
            archive,
            input,
            out,
            frames,
            source,
            heatmaps,
            camera,
            range,
            cfg,
        } => (
            eval_cmd(
                archive,
                input,
                out,
                frames.as_deref(),
                *source,
                heatmaps.as_deref(),
                *camera,
                *range,
                cfg,
            )?,
            out.clone(),
        ),
        Command::Render {
            archive,
            out,
            input,
            frames,
            pose,
            cameras,
            source,
        } => (
            render_cmd(
                archive,
                out,
                input.as_deref(),
                frames.as_deref(),
                pose.as_deref(),
                cameras.as_deref(),
                *source,
            )?,
            out.clone(),
        ),
    };
    manifest.seconds = clock.elapsed().as_secs_f64();
    manifest.save(&dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
