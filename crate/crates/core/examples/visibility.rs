// Rasterize one frame, test triangle visibility per camera and sample the
// texel lattice of a visible triangle.

use eigen_avatar::raster::{default_epsilon, extract_texture, rasterize, texel_count, triangle_visibility};
use eigen_avatar::synth::{generate, SynthConfig};

pub fn run_example() -> eigen_avatar::Result<()> {
    let seq = generate(&SynthConfig {
        frames: 1,
        rings: 4,
        segments: 6,
        image_size: 96,
        ..SynthConfig::default()
    })?;
    let mesh = &seq.meshes[0];
    let eps = default_epsilon(mesh);
    let mut seen = vec![false; mesh.triangle_count()];
    for (c, cam) in seq.cameras.iter().enumerate() {
        let (depth, ids) = rasterize(mesh, cam);
        let vis = triangle_visibility(mesh, cam, &depth, &ids, eps);
        println!(
            "camera {c}: {} of {} triangles visible",
            vis.iter().filter(|&&v| v).count(),
            vis.len()
        );
        for (s, v) in seen.iter_mut().zip(&vis) {
            *s |= v;
        }
        if c == 0 {
            let t = vis.iter().position(|&v| v).expect("something is visible");
            let tex = extract_texture(mesh, cam, &seq.images[0][0], &vis, t, 8, 0)?;
            println!("triangle {t}: {} texels, first {:?}", texel_count(8), tex.texel(0));
        }
    }
    println!("covered by some camera: {}/{}", seen.iter().filter(|&&s| s).count(), seen.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("visibility");
}
