// Hold out an interpolation gap and an extrapolation block, then compare
// stored and regressed reconstructions per frame class.

use std::collections::BTreeMap;

use eigen_avatar::eval::{evaluate, heatmap, vertex_errors, FrameClass, HoldoutSpec, DEFAULT_HEAT_RANGE};
use eigen_avatar::pipeline::{decode_mesh, encode, CoefficientSource, EncodeConfig, EncodeInput};
use eigen_avatar::regress::TrainConfig;
use eigen_avatar::synth::{generate, SynthConfig};

pub fn run_example() -> eigen_avatar::Result<()> {
    let seq = generate(&SynthConfig {
        frames: 60,
        rings: 4,
        segments: 6,
        excursion: (44, 56),
        render_images: false,
        ..SynthConfig::default()
    })?;
    let holdout = HoldoutSpec {
        interpolation: vec![(20, 23)],
        extrapolation: vec![(44, 56)],
    };
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
        textures: false,
        holdout: holdout.ranges(),
        train: TrainConfig {
            iterations: 1500,
            ..TrainConfig::default()
        },
        ..EncodeConfig::default()
    };
    let (archive, _) = encode(&input, &config)?;
    let frames: Vec<usize> = (0..seq.meshes.len()).collect();
    for source in [CoefficientSource::Stored, CoefficientSource::Regressed] {
        let report = evaluate(&archive, &seq.meshes, &frames, &holdout, source)?;
        for class in [FrameClass::Training, FrameClass::Interpolation, FrameClass::Extrapolation] {
            println!("{source:?} {class:?}: RMSE {:.2e}", report.rmse_of(class).unwrap_or(f64::NAN));
        }
    }
    let f = 50;
    let m = decode_mesh(&archive, &seq.poses[f], Some(f), CoefficientSource::Regressed)?;
    let errors = vertex_errors(&m, &seq.meshes[f])?;
    let img = heatmap(&m, &errors, &seq.cameras[0], DEFAULT_HEAT_RANGE * m.bbox_diagonal())?;
    println!("heatmap {}x{}", img.width(), img.height());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("evaluation");
}
