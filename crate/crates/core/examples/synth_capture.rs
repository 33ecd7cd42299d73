// Generate a small synthetic capture and save it as a sequence directory.

use eigen_avatar::dataset;
use eigen_avatar::synth::{generate, SynthConfig};

pub fn run_example() -> eigen_avatar::Result<()> {
    let config = SynthConfig {
        frames: 12,
        rings: 4,
        segments: 6,
        image_size: 64,
        excursion: (6, 9),
        ..SynthConfig::default()
    };
    let seq = generate(&config)?;
    let body = &seq.model;
    println!(
        "{} joints, {} vertices, {} triangles, {} cameras, {} frames",
        body.joint_count(),
        body.template().vertex_count(),
        body.template().triangle_count(),
        seq.cameras.len(),
        seq.meshes.len()
    );
    let dir = std::env::temp_dir().join(format!("eigen-avatar-synth-{}", std::process::id()));
    dataset::save_synth(&seq, &dir)?;
    let back = dataset::load(&dir, None)?;
    assert_eq!(back.file.poses, seq.poses);
    println!("saved and reloaded {}", dir.display());
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("synth_capture");
}
