// Train a small per-part regressor from joint rotations to deformation
// coefficients and compare training and held-out error.

use eigen_avatar::deform::fit_deform_model;
use eigen_avatar::geometry::vectorize_row_major;
use eigen_avatar::pipeline::displacement_fields;
use eigen_avatar::regress::{fit, Batch, TrainConfig};
use eigen_avatar::subspace::Rank;
use eigen_avatar::synth::{generate, SynthConfig};

pub fn run_example() -> eigen_avatar::Result<()> {
    let seq = generate(&SynthConfig {
        frames: 80,
        rings: 4,
        segments: 6,
        excursion: (0, 0),
        noise_sigma: 0.0,
        render_images: false,
        ..SynthConfig::default()
    })?;
    let fields = displacement_fields(&seq.model, &seq.shape, &seq.poses, &seq.meshes)?;
    let parts = seq.meshes[0].part_vertices(seq.model.part_count());
    let model = fit_deform_model(&fields, &parts, Rank::AtMost(6))?;
    let coeffs: Vec<Vec<Vec<f64>>> = fields.iter().map(|f| model.embed(f)).collect::<Result<_, _>>()?;
    let part = 5;
    let (train, test): (Vec<usize>, Vec<usize>) = (0..fields.len()).partition(|f| f % 7 != 3);
    let input = |f: usize| vectorize_row_major(&seq.poses[f].local_rotation(part));
    let inputs: Vec<[f64; 9]> = train.iter().map(|&f| input(f)).collect();
    let targets: Vec<&[f64]> = train.iter().map(|&f| coeffs[f][part].as_slice()).collect();
    let config = TrainConfig {
        iterations: 2000,
        ..TrainConfig::default()
    };
    let (reg, trace) = fit(&Batch::new(&inputs, &targets)?, &config, true)?;
    let rms = |frames: &[usize]| -> f64 {
        let mut s = 0.0;
        let mut n = 0;
        for &f in frames {
            let p = reg.predict(&input(f)).unwrap();
            for (a, b) in p.iter().zip(&coeffs[f][part]) {
                s += (a - b).powi(2);
                n += 1;
            }
        }
        (s / n as f64).sqrt()
    };
    println!("loss {:.3e} -> {:.3e} over {} steps", trace[0], trace[trace.len() - 1], trace.len());
    println!("coefficient RMSE: train {:.2e}, held out {:.2e}", rms(&train), rms(&test));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("pose_regression");
}
