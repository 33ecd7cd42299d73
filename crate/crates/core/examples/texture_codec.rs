// Assign each triangle a camera per frame, fit per-triangle eigen-textures
// in one streaming pass and reconstruct the observed textures.

use eigen_avatar::raster::default_epsilon;
use eigen_avatar::subspace::Rank;
use eigen_avatar::synth::{generate, SynthConfig};
use eigen_avatar::texture::{assign_views, fit_streaming, storage_bytes, synthesize_texture, tracks_for};

pub fn run_example() -> eigen_avatar::Result<()> {
    let seq = generate(&SynthConfig {
        frames: 20,
        rings: 4,
        segments: 6,
        image_size: 96,
        excursion: (0, 0),
        ..SynthConfig::default()
    })?;
    let side = 6;
    let views = assign_views(&seq.meshes, &seq.cameras, default_epsilon(&seq.meshes[0]))?;
    println!("{} of {} triangles seen at least once", views.coverage(), views.triangles());
    let (model, coeffs) = fit_streaming(&views, &seq.meshes, &seq.cameras, &seq.images, side, Rank::AtMost(5))?;
    let tracks = tracks_for(&views, &seq.meshes, &seq.cameras, &seq.images, side)?;
    let mut worst: f64 = 0.0;
    for track in tracks.iter().filter(|t| !t.is_empty()) {
        let t = track.triangle;
        for (k, tex) in track.textures.iter().enumerate() {
            let c = &coeffs[t][k];
            let back = synthesize_texture(&model, t, c, tex.frame)?;
            let e = back
                .to_f64()
                .iter()
                .zip(tex.to_f64())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(e);
        }
    }
    let (compact, raw) = storage_bytes(&model);
    println!("worst texel error at rank 5: {worst:.3}; model {compact} bytes vs {raw} raw");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("texture_codec");
}
