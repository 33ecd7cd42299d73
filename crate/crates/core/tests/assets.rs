use std::path::{Path, PathBuf};

use eigen_avatar::body::load_body_model;
use eigen_avatar::mesh::load_mesh;
use eigen_avatar::raster::{default_epsilon, Camera};
use eigen_avatar::synth::{convex_scene, standard_body};
use eigen_avatar::texture::assign_views;
use serde_json::Value;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn manifest() -> Value {
    serde_json::from_str(&std::fs::read_to_string(assets().join("manifest.json")).unwrap()).unwrap()
}

fn count(v: &Value, key: &str) -> usize {
    v[key].as_u64().unwrap_or_else(|| panic!("manifest lacks {key}")) as usize
}

#[test]
fn shipped_template_matches_the_generator() {
    let m = &manifest()["template"];
    let model = load_body_model(&assets().join("template/body.obj")).unwrap();
    assert_eq!(model.template().vertex_count(), count(m, "vertices"));
    assert_eq!(model.template().triangle_count(), count(m, "triangles"));
    assert_eq!(model.joint_count(), count(m, "joints"));
    assert_eq!(model.shape_count(), count(m, "shape_dims"));

    let (fresh, _) = standard_body(count(m, "rings"), count(m, "segments")).unwrap();
    assert_eq!(model.template().triangles(), fresh.template().triangles());
    for (a, b) in model.template().vertices().iter().zip(fresh.template().vertices()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn shipped_convex_scene_is_fully_covered() {
    let m = &manifest()["convex_scene"];
    let frames = count(m, "frames");
    let dir = assets().join("convex_scene");
    let meshes: Vec<_> = (0..frames).map(|f| load_mesh(&dir.join(format!("{f:05}.obj"))).unwrap()).collect();
    let cameras: Vec<Camera> = serde_json::from_str(&std::fs::read_to_string(dir.join("cameras.json")).unwrap()).unwrap();
    assert_eq!(cameras.len(), count(m, "cameras"));
    assert_eq!(meshes[0].triangle_count(), count(m, "triangles"));

    let (fresh, fresh_cams) = convex_scene(frames, count(m, "image_size")).unwrap();
    assert_eq!(cameras, fresh_cams);
    for (a, b) in meshes.iter().zip(&fresh) {
        assert_eq!(a.triangles(), b.triangles());
        assert!(a.vertices().iter().zip(b.vertices()).all(|(p, q)| (p - q).norm() < 1e-12));
    }

    let views = assign_views(&meshes, &cameras, default_epsilon(&meshes[0])).unwrap();
    assert_eq!(
        views.coverage(),
        views.triangles(),
        "every triangle seen in some frame by some camera"
    );
    // A single frame is not enough: two perspective views leave a band
    // around the silhouette unseen.
    let still = assign_views(&meshes[..1], &cameras, default_epsilon(&meshes[0])).unwrap();
    assert!(still.coverage() < still.triangles());
}
