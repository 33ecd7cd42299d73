// Fit the body model to noisy scans of itself and report the per-frame
// worst joint-angle error.

use eigen_avatar::body::ShapeParams;
use eigen_avatar::geometry::{exp_so3, geodesic_angle, Vec3};
use eigen_avatar::registration::{register_sequence, select_anchor_vertices, Anchor, RegistrationConfig, Target};
use eigen_avatar::synth::{standard_body, standard_motion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn run_example() -> eigen_avatar::Result<()> {
    let (model, _) = standard_body(10, 14)?;
    let shape = ShapeParams::new(vec![0.3, -0.2, 0.0, 0.0]);
    let poses = standard_motion(6, (0, 0));
    let sigma = 0.005 * model.template().bbox_diagonal();
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut targets = Vec::new();
    for p in &poses {
        let m = model.pose_model(p, &shape)?;
        let v: Vec<Vec3> = m
            .vertices()
            .iter()
            .map(|x| x + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
            .collect();
        targets.push(Target::Mesh(m.with_vertices(v)?));
    }
    let first = model.pose_model(&poses[0], &shape)?;
    let anchors: Vec<Anchor> = select_anchor_vertices(&model, 4)
        .into_iter()
        .map(|v| Anchor {
            vertex: v,
            point: first.vertices()[v],
        })
        .collect();
    let config = RegistrationConfig {
        temporal_weight: 0.1,
        ..RegistrationConfig::with_standard_limits()
    };
    let result = register_sequence(&model, &targets, &anchors, &config)?;
    for (f, (fit, truth)) in result.poses.iter().zip(&poses).enumerate() {
        let worst = fit
            .rotations
            .iter()
            .zip(&truth.rotations)
            .map(|(a, b)| geodesic_angle(&exp_so3(a), &exp_so3(b)).to_degrees())
            .fold(0.0, f64::max);
        println!("frame {f}: worst joint error {worst:.2} deg");
    }
    println!("recovered shape {:?}", result.shape.coeffs);
    assert!(result.all_traces_non_increasing());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("register_sequence");
}
