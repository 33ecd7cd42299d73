// Decode a pose that was never captured: deformation and texture
// coefficients both come from the regressors. Renders one view to PPM.

use std::collections::BTreeMap;

use eigen_avatar::pipeline::{decode_pose, encode, render_decoded, CoefficientSource, EncodeConfig, EncodeInput};
use eigen_avatar::regress::TrainConfig;
use eigen_avatar::synth::{generate, standard_motion, SynthConfig};

pub fn run_example() -> eigen_avatar::Result<()> {
    let seq = generate(&SynthConfig {
        frames: 30,
        rings: 3,
        segments: 5,
        image_size: 64,
        excursion: (0, 0),
        ..SynthConfig::default()
    })?;
    let input = EncodeInput {
        body: &seq.model,
        shape: &seq.shape,
        poses: &seq.poses,
        meshes: &seq.meshes,
        cameras: &seq.cameras,
        images: &seq.images,
        seeds: BTreeMap::new(),
    };
    let config = EncodeConfig {
        texel_side: 4,
        train: TrainConfig {
            iterations: 400,
            ..TrainConfig::default()
        },
        ..EncodeConfig::default()
    };
    let (archive, _) = encode(&input, &config)?;
    let pose = standard_motion(300, (200, 340))[260].clone();
    let decoded = decode_pose(&archive, &pose, None, CoefficientSource::Regressed)?;
    let textured = decoded.textures.iter().filter(|t| t.is_some()).count();
    let image = render_decoded(&decoded, &seq.cameras[0]);
    let lit = image.raw().chunks(3).filter(|p| p.iter().any(|&v| v > 0)).count();
    println!("{textured} textured triangles, {lit} covered pixels");
    let path = std::env::temp_dir().join(format!("eigen-avatar-novel-{}.ppm", std::process::id()));
    image.save_ppm(&path)?;
    println!("wrote {}", path.display());
    let _ = std::fs::remove_file(&path);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("novel_pose");
}
