// Encode a textured sequence into an archive, reload it from bytes and
// check that decoding is unchanged.

use std::collections::BTreeMap;

use eigen_avatar::archive::Archive;
use eigen_avatar::pipeline::{compression, decode_frame, encode, CoefficientSource, EncodeConfig, EncodeInput};
use eigen_avatar::regress::TrainConfig;
use eigen_avatar::synth::{generate, SynthConfig};

pub fn run_example() -> eigen_avatar::Result<()> {
    let seq = generate(&SynthConfig {
        frames: 16,
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
        seeds: BTreeMap::from([("synth".to_string(), seq.config.seed)]),
    };
    let config = EncodeConfig {
        texel_side: 6,
        train: TrainConfig {
            iterations: 300,
            ..TrainConfig::default()
        },
        ..EncodeConfig::default()
    };
    let (archive, report) = encode(&input, &config)?;
    let bytes = archive.to_bytes();
    let back = Archive::from_bytes(&bytes)?;
    for f in [0, 7, 15] {
        let a = decode_frame(&archive, f, CoefficientSource::Stored)?;
        let b = decode_frame(&back, f, CoefficientSource::Stored)?;
        assert_eq!(a.mesh.vertices(), b.mesh.vertices());
        assert_eq!(a.textures, b.textures);
    }
    for (tag, len) in archive.section_sizes() {
        println!("{tag}: {len} bytes");
    }
    let c = compression(&back);
    println!(
        "{} bytes total, {:.1}% of raw; {} textured triangles",
        bytes.len(),
        100.0 * c.ratio,
        report.textured_triangles
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("archive_roundtrip");
}
