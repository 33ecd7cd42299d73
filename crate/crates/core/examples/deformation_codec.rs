// Split each frame into skinning plus per-part displacement fields, fit the
// per-part eigen-deformation model and report error against rank.

use eigen_avatar::deform::fit_deform_model;
use eigen_avatar::eval::rank_sweep;
use eigen_avatar::pipeline::displacement_fields;
use eigen_avatar::subspace::Rank;
use eigen_avatar::synth::{generate, SynthConfig};

pub fn run_example() -> eigen_avatar::Result<()> {
    let seq = generate(&SynthConfig {
        frames: 40,
        rings: 4,
        segments: 6,
        excursion: (0, 0),
        render_images: false,
        ..SynthConfig::default()
    })?;
    let fields = displacement_fields(&seq.model, &seq.shape, &seq.poses, &seq.meshes)?;
    let parts = seq.meshes[0].part_vertices(seq.model.part_count());
    let model = fit_deform_model(&fields, &parts, Rank::AtMost(10))?;
    println!("ranks per part: {:?}", model.ranks());
    let sweep = rank_sweep(&fields, &parts, &[1, 3, 5, 10])?;
    for (l, row) in [1, 3, 5, 10].iter().zip(&sweep) {
        let worst = row.iter().copied().fold(0.0, f64::max);
        println!("L={l:2}: worst part RMSE {worst:.2e}");
    }
    let coeffs = model.embed(&fields[0])?;
    let back = model.decode(&coeffs)?;
    let err: f64 = back
        .parts
        .iter()
        .flatten()
        .zip(fields[0].parts.iter().flatten())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    println!("frame 0 displacement error after encode/decode: {err:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("deformation_codec");
}
