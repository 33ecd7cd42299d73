//! Deterministic synthetic data: a procedural 16-joint body, smooth joint
//! motion, pose-dependent "clothing" deformation of configurable rank,
//! pose-dependent shading and two opposing cameras.
//!
//! Joint layout (parents in brackets):
//! `0 pelvis, 1 spine[0], 2 chest[1], 3 head[2], 4 l_shoulder[2],
//! 5 l_elbow[4], 6 l_wrist[5], 7 r_shoulder[2], 8 r_elbow[7], 9 r_wrist[8],
//! 10 l_hip[0], 11 l_knee[10], 12 l_ankle[11], 13 r_hip[0], 14 r_knee[13],
//! 15 r_ankle[14]`. Left is +x, up is +y, the body faces +z.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::body::{BodyModel, Joint, PoseParams, ShapeParams, Skeleton};
use crate::error::{Error, Result};
use crate::geometry::{vectorize_row_major, Vec3};
use crate::mesh::Mesh;
use crate::raster::{self, Camera, Image};
use crate::registration::{select_anchor_vertices, Anchor};

pub const JOINT_NAMES: [&str; 16] = [
    "pelvis",
    "spine",
    "chest",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_hip",
    "r_knee",
    "r_ankle",
];

const PARENTS: [Option<usize>; 16] = [
    None,
    Some(0),
    Some(1),
    Some(2),
    Some(2),
    Some(4),
    Some(5),
    Some(2),
    Some(7),
    Some(8),
    Some(0),
    Some(10),
    Some(11),
    Some(0),
    Some(13),
    Some(14),
];

const JOINT_POSITIONS: [[f64; 3]; 16] = [
    [0.0, 1.0, 0.0],
    [0.0, 1.12, 0.0],
    [0.0, 1.34, 0.0],
    [0.0, 1.58, 0.0],
    [0.17, 1.52, 0.0],
    [0.46, 1.52, 0.0],
    [0.71, 1.52, 0.0],
    [-0.17, 1.52, 0.0],
    [-0.46, 1.52, 0.0],
    [-0.71, 1.52, 0.0],
    [0.1, 0.95, 0.0],
    [0.1, 0.53, 0.0],
    [0.1, 0.11, 0.0],
    [-0.1, 0.95, 0.0],
    [-0.1, 0.53, 0.0],
    [-0.1, 0.11, 0.0],
];

/// Tube geometry of one part: axis from `start` to `end`, elliptic radii,
/// and which ends are closed with a dome.
struct Tube {
    start: [f64; 3],
    end: [f64; 3],
    radii: (f64, f64),
    dome_start: bool,
    dome_end: bool,
    upper: bool,
}

fn tubes() -> Vec<Tube> {
    let t = |start, end, radii, dome_start, dome_end, upper| Tube {
        start,
        end,
        radii,
        dome_start,
        dome_end,
        upper,
    };
    let mut v = vec![
        t([0.0, 0.86, 0.0], [0.0, 1.12, 0.0], (0.16, 0.11), true, false, false),
        t([0.0, 1.12, 0.0], [0.0, 1.34, 0.0], (0.15, 0.10), false, false, true),
        t([0.0, 1.34, 0.0], [0.0, 1.6, 0.0], (0.18, 0.11), false, false, true),
        t([0.0, 1.6, 0.0], [0.0, 1.82, 0.0], (0.075, 0.1), false, true, true),
    ];
    for s in [1.0, -1.0] {
        v.push(t([0.16 * s, 1.52, 0.0], [0.46 * s, 1.52, 0.0], (0.056, 0.04), false, false, true));
        v.push(t([0.46 * s, 1.52, 0.0], [0.71 * s, 1.52, 0.0], (0.046, 0.03), false, false, true));
        v.push(t([0.71 * s, 1.52, 0.0], [0.89 * s, 1.52, 0.0], (0.045, 0.016), false, true, true));
    }
    for s in [1.0, -1.0] {
        v.push(t([0.1 * s, 0.95, 0.0], [0.1 * s, 0.53, 0.0], (0.085, 0.062), false, false, false));
        v.push(t([0.1 * s, 0.53, 0.0], [0.1 * s, 0.11, 0.0], (0.06, 0.042), false, false, false));
        v.push(t([0.1 * s, 0.07, -0.03], [0.1 * s, 0.035, 0.17], (0.045, 0.03), false, true, false));
    }
    v
}

/// Per-vertex construction metadata of the standard body.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyLayout {
    /// Position along the part axis in `[0, 1]` (beyond for dome tips).
    pub axial: Vec<f64>,
    /// Angle around the part axis.
    pub angle: Vec<f64>,
    /// Unit outward radial direction at rest (axis direction for tips).
    pub radial: Vec<Vec3>,
    /// Unit axis direction of the owning part at rest.
    pub axis: Vec<Vec3>,
}

/// The standard procedural body: 16 joints, one elliptic tube per part
/// with `rings x segments` vertices (plus dome tips), 4 blendshapes
/// (girth, elongation, upper-body breadth, lower-body girth).
pub fn standard_body(rings: usize, segments: usize) -> Result<(BodyModel, BodyLayout)> {
    if rings < 2 || segments < 3 {
        return Err(Error::param("standard body needs >= 2 rings and >= 3 segments"));
    }
    let joints: Vec<Joint> = (0..16)
        .map(|j| {
            let p = Vec3::from(JOINT_POSITIONS[j]);
            let offset = match PARENTS[j] {
                Some(q) => p - Vec3::from(JOINT_POSITIONS[q]),
                None => p,
            };
            Joint {
                name: JOINT_NAMES[j].into(),
                parent: PARENTS[j],
                offset,
            }
        })
        .collect();
    let skeleton = Skeleton::new(joints)?;

    let mut verts = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut weights = Vec::new();
    let mut layout = BodyLayout {
        axial: Vec::new(),
        angle: Vec::new(),
        radial: Vec::new(),
        axis: Vec::new(),
    };
    let mut shapes = vec![Vec::new(); 4];
    for (j, tube) in tubes().iter().enumerate() {
        let a = Vec3::from(tube.start);
        let b = Vec3::from(tube.end);
        let d = (b - a).normalize();
        let e1 = d.cross(&Vec3::z()).try_normalize(1e-9).unwrap_or_else(Vec3::x);
        let e2 = d.cross(&e1);
        let len = (b - a).norm();
        let base = verts.len();
        let mut push = |p: Vec3, t: f64, phi: f64, radial: Vec3, verts: &mut Vec<Vec3>| {
            verts.push(p);
            layout.axial.push(t);
            layout.angle.push(phi);
            layout.radial.push(radial);
            layout.axis.push(d);
            let w_parent = match PARENTS[j] {
                Some(_) => 0.45 * (1.0 - t / 0.25).clamp(0.0, 1.0),
                None => 0.0,
            };
            weights.push(if w_parent > 0.0 {
                let p = PARENTS[j].expect("has parent");
                vec![(p, w_parent), (j, 1.0 - w_parent)]
            } else {
                vec![(j, 1.0)]
            });
            let girth = radial * 0.1 * tube.radii.0.max(tube.radii.1);
            shapes[0].push(girth);
            shapes[1].push(d * (0.08 * len * t));
            // Dome tips sit on the axis and get no breadth offset.
            let tip = radial.dot(&d).abs() > 0.5;
            let breadth = if tip {
                Vec3::zeros()
            } else {
                e1 * (0.1 * tube.radii.0 * phi.cos())
            };
            shapes[2].push(if tube.upper { breadth } else { Vec3::zeros() });
            shapes[3].push(if tube.upper { Vec3::zeros() } else { girth });
        };
        for r in 0..rings {
            let t = r as f64 / (rings - 1) as f64;
            // Gentle bulge along the tube and a phase-shifted third harmonic
            // so no cross-section is rotationally symmetric.
            let bulge = 1.0 + 0.12 * (PI * t).sin();
            for s in 0..segments {
                let phi = 2.0 * PI * s as f64 / segments as f64;
                let wobble = 1.0 + 0.08 * (3.0 * phi + j as f64).cos();
                let off = e1 * (tube.radii.0 * phi.cos()) + e2 * (tube.radii.1 * phi.sin());
                let radial = (e1 * (phi.cos() / tube.radii.0) + e2 * (phi.sin() / tube.radii.1)).normalize();
                push(a + (b - a) * t + off * (bulge * wobble), t, phi, radial, &mut verts);
            }
        }
        let ring = |r: usize, s: usize| base + r * segments + s % segments;
        for r in 0..rings - 1 {
            for s in 0..segments {
                tris.push([ring(r, s), ring(r, s + 1), ring(r + 1, s)]);
                tris.push([ring(r, s + 1), ring(r + 1, s + 1), ring(r + 1, s)]);
            }
        }
        let tip_len = 0.5 * tube.radii.0.min(tube.radii.1);
        if tube.dome_start {
            let tip = verts.len();
            push(a - d * tip_len, -tip_len / len, 0.0, -d, &mut verts);
            for s in 0..segments {
                tris.push([tip, ring(0, s), ring(0, s + 1)]);
            }
        }
        if tube.dome_end {
            let tip = verts.len();
            push(b + d * tip_len, 1.0 + tip_len / len, 0.0, d, &mut verts);
            for s in 0..segments {
                tris.push([tip, ring(rings - 1, s), ring(rings - 1, s + 1)]);
            }
        }
        // Orient every triangle of this tube outward.
        let first_tri = tris.len() - ((rings - 1) * segments * 2 + segments * (tube.dome_start as usize + tube.dome_end as usize));
        for tri in &mut tris[first_tri..] {
            let [p, q, r] = tri.map(|i| verts[i]);
            let c = (p + q + r) / 3.0;
            let along = (c - a).dot(&d).clamp(0.0, len);
            let outward = c - (a + d * along);
            if (q - p).cross(&(r - p)).dot(&outward) < 0.0 {
                tri.swap(1, 2);
            }
        }
    }
    let template = Mesh::unlabelled(verts, tris)?;
    let model = BodyModel::new(template, skeleton, weights, shapes)?;
    Ok((model, layout))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub frames: usize,
    pub rings: usize,
    pub segments: usize,
    pub shape: Vec<f64>,
    /// Modes of the clothing deformation per part.
    pub deformation_rank: usize,
    /// Peak displacement scale of each mode, in scene units.
    pub deformation_amplitude: f64,
    /// Isotropic Gaussian noise added to the registered meshes.
    pub noise_sigma: f64,
    /// Frames `[start, end)` of the motion excursion (raised arms, deeper
    /// knee bend); an empty range disables it.
    pub excursion: (usize, usize),
    pub image_size: usize,
    pub fov_degrees: f64,
    pub camera_distance: f64,
    /// Relative brightness swing of the pose-dependent shading.
    pub shading_amplitude: f64,
    pub render_images: bool,
    pub anchors_per_part: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            frames: 500,
            rings: 6,
            segments: 8,
            shape: vec![0.3, -0.2, 0.4, -0.1],
            deformation_rank: 6,
            deformation_amplitude: 0.015,
            noise_sigma: 0.0005,
            excursion: (200, 340),
            image_size: 160,
            fov_degrees: 36.0,
            camera_distance: 3.5,
            shading_amplitude: 0.25,
            render_images: true,
            anchors_per_part: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Configuration("frames must be >= 1".into()));
        }
        if self.shape.len() != 4 {
            return Err(Error::Configuration("shape needs 4 coefficients".into()));
        }
        if !(self.deformation_amplitude >= 0.0 && self.noise_sigma >= 0.0 && self.shading_amplitude >= 0.0) {
            return Err(Error::Configuration("amplitudes and noise must be >= 0".into()));
        }
        if self.shading_amplitude > 0.5 {
            return Err(Error::Configuration("shading_amplitude must be <= 0.5".into()));
        }
        if self.image_size < 8 || !(self.fov_degrees > 0.0 && self.fov_degrees < 170.0) || !(self.camera_distance > 0.0) {
            return Err(Error::Configuration("bad camera settings".into()));
        }
        if self.rings < 2 || self.segments < 3 {
            return Err(Error::Configuration("rings >= 2 and segments >= 3 required".into()));
        }
        Ok(())
    }
}

fn excursion_weight(f: usize, range: (usize, usize)) -> f64 {
    let (a, b) = range;
    if b <= a || f < a || f >= b {
        return 0.0;
    }
    (PI * (f - a) as f64 / (b - a) as f64).sin().powi(2)
}

/// Smooth periodic joint-angle curves, all within the standard joint limits.
pub fn standard_motion(frames: usize, excursion: (usize, usize)) -> Vec<PoseParams> {
    let wave = |f: f64, period: f64, phase: f64| (2.0 * PI * f / period + phase).sin();
    (0..frames)
        .map(|fi| {
            let f = fi as f64;
            let x = excursion_weight(fi, excursion);
            let mut r = vec![Vec3::zeros(); 16];
            r[0] = Vec3::new(0.05 * wave(f, 130.0, 0.3), 0.6 * wave(f, 250.0, 0.0), 0.04 * wave(f, 170.0, 1.0));
            r[1] = Vec3::new(
                0.15 * wave(f, 120.0, 0.0) + 0.3 * x,
                0.1 * wave(f, 150.0, 2.0),
                0.1 * wave(f, 90.0, 0.5),
            );
            r[2] = Vec3::new(0.08 * wave(f, 110.0, 1.2), 0.2 * wave(f, 140.0, 1.0), 0.06 * wave(f, 100.0, 0.1));
            r[3] = Vec3::new(0.2 * wave(f, 100.0, 0.0), 0.3 * wave(f, 170.0, 0.7), 0.1 * wave(f, 130.0, 2.1));
            for (side, sh, el, wr) in [(1.0, 4, 5, 6), (-1.0, 7, 8, 9)] {
                let ph = if side > 0.0 { 0.0 } else { 1.7 };
                r[sh] = Vec3::new(
                    0.3 * wave(f, 95.0, ph),
                    0.3 * wave(f, 130.0, ph + 0.4),
                    side * (-0.9 + 0.45 * wave(f, 110.0, ph + 1.0) + 1.3 * x),
                );
                r[el] = Vec3::new(
                    0.03 * wave(f, 120.0, ph + 2.0),
                    -side * (0.8 + 0.55 * wave(f, 90.0, ph) + 0.5 * x),
                    0.02 * wave(f, 105.0, ph),
                );
                r[wr] = Vec3::new(
                    0.3 * wave(f, 70.0, ph),
                    0.25 * wave(f, 85.0, ph + 1.0),
                    0.25 * wave(f, 60.0, ph + 2.0),
                );
            }
            for (side, hip, knee, ankle) in [(1.0, 10, 11, 12), (-1.0, 13, 14, 15)] {
                let ph = if side > 0.0 { 0.0 } else { PI };
                r[hip] = Vec3::new(
                    0.5 * wave(f, 100.0, ph) - 0.2 * x,
                    0.2 * wave(f, 140.0, ph + 0.5),
                    side * (0.15 + 0.1 * wave(f, 160.0, ph + 1.0)),
                );
                r[knee] = Vec3::new(
                    0.5 + 0.45 * wave(f, 100.0, ph + 1.0) + 0.8 * x,
                    0.03 * wave(f, 80.0, ph),
                    0.02 * wave(f, 120.0, ph),
                );
                r[ankle] = Vec3::new(0.2 * wave(f, 100.0, ph + 2.0), 0.15 * wave(f, 75.0, ph), 0.1 * wave(f, 65.0, ph));
            }
            PoseParams {
                rotations: r,
                translation: Vec3::new(0.05 * wave(f, 160.0, 0.0), 0.02 * wave(f, 80.0, 0.0), 0.05 * wave(f, 200.0, 1.0)),
            }
        })
        .collect()
}

/// Front and back cameras at `distance` from the body center.
pub fn standard_cameras(image_size: usize, fov_degrees: f64, distance: f64) -> Result<Vec<Camera>> {
    let target = Vec3::new(0.0, 0.95, 0.0);
    [1.0, -1.0]
        .iter()
        .map(|s| {
            Camera::look_at(
                target + Vec3::new(0.0, 0.0, s * distance),
                target,
                Vec3::y(),
                fov_degrees.to_radians(),
                image_size,
                image_size,
            )
        })
        .collect()
}

/// A convex stand-in scene: a closed ellipsoid around the standard camera
/// target, tumbling over `frames` so that every face turns toward one of the
/// two standard cameras at some point.
pub fn convex_scene(frames: usize, image_size: usize) -> Result<(Vec<Mesh>, Vec<Camera>)> {
    if frames == 0 {
        return Err(Error::param("convex scene needs at least one frame"));
    }
    let (rings, segments) = (10, 16);
    let axes = Vec3::new(0.3, 0.8, 0.22);
    let center = Vec3::new(0.0, 0.95, 0.0);
    let mut unit = vec![Vec3::new(0.0, 1.0, 0.0)];
    for i in 1..rings {
        let th = PI * i as f64 / rings as f64;
        for j in 0..segments {
            let ph = 2.0 * PI * j as f64 / segments as f64;
            unit.push(Vec3::new(th.sin() * ph.cos(), th.cos(), th.sin() * ph.sin()));
        }
    }
    unit.push(Vec3::new(0.0, -1.0, 0.0));
    let idx = |i: usize, j: usize| 1 + (i - 1) * segments + j % segments;
    let south = unit.len() - 1;
    let mut triangles = Vec::new();
    for j in 0..segments {
        triangles.push([0, idx(1, j + 1), idx(1, j)]);
        triangles.push([south, idx(rings - 1, j), idx(rings - 1, j + 1)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i + 1, j)]);
            triangles.push([idx(i, j), idx(i, j + 1), idx(i + 1, j + 1)]);
        }
    }
    let parts = vec![0; unit.len()];
    let meshes = (0..frames)
        .map(|f| {
            let a = 2.0 * PI * f as f64 / frames as f64;
            let r = crate::geometry::exp_so3(&(Vec3::new(0.0, 1.0, 0.0) * a))
                * crate::geometry::exp_so3(&(Vec3::new(1.0, 0.0, 0.0) * (0.9 * a.sin())));
            let v = unit.iter().map(|u| center + r * u.component_mul(&axes)).collect();
            Mesh::new(v, triangles.clone(), parts.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((meshes, standard_cameras(image_size, 36.0, 3.5)?))
}

/// Pose-dependent clothing: per part, `rank` smooth displacement patterns
/// in the part's rest frame, each scaled by `amplitude * tanh(g . vec(R) +
/// c)` of the part's own local rotation `R`.
#[derive(Debug, Clone)]
pub struct ClothingModel {
    /// `patterns[part][k][i]` for the `i`-th vertex of the part.
    pub patterns: Vec<Vec<Vec<Vec3>>>,
    pub gains: Vec<Vec<([f64; 9], f64)>>,
    pub amplitude: f64,
    pub part_vertices: Vec<Vec<usize>>,
}

impl ClothingModel {
    pub fn new(model: &BodyModel, layout: &BodyLayout, rank: usize, amplitude: f64, rng: &mut impl Rng) -> Self {
        let part_vertices = model.template().part_vertices(model.part_count());
        let mut patterns = Vec::new();
        let mut gains = Vec::new();
        for verts in &part_vertices {
            let mut pp = Vec::new();
            let mut gg = Vec::new();
            for _ in 0..rank {
                let m = rng.gen_range(0..3) as f64;
                let n = rng.gen_range(1..3) as f64;
                let (p1, p2, p3) = (
                    rng.gen_range(0.0..2.0 * PI),
                    rng.gen_range(0.0..2.0 * PI),
                    rng.gen_range(0.0..2.0 * PI),
                );
                let (ra, aa) = (rng.gen_range(0.5..1.0), rng.gen_range(-0.5..0.5));
                let pat: Vec<Vec3> = verts
                    .iter()
                    .map(|&v| {
                        let (t, phi) = (layout.axial[v], layout.angle[v]);
                        let radial = ra * (m * phi + p1).cos() * (PI * n * t + p2).sin();
                        let axial = aa * (phi + p3).cos() * (PI * t).sin();
                        layout.radial[v] * radial + layout.axis[v] * axial
                    })
                    .collect();
                pp.push(pat);
                let mut g = [0.0; 9];
                for x in &mut g {
                    *x = rng.gen_range(-1.5..1.5);
                }
                gg.push((g, rng.gen_range(-0.5..0.5)));
            }
            patterns.push(pp);
            gains.push(gg);
        }
        Self {
            patterns,
            gains,
            amplitude,
            part_vertices,
        }
    }

    /// Local-frame displacement of every vertex for one pose.
    pub fn local_displacements(&self, pose: &PoseParams, vertex_count: usize) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); vertex_count];
        for (l, verts) in self.part_vertices.iter().enumerate() {
            let r = vectorize_row_major(&pose.local_rotation(l));
            for (pat, (g, c)) in self.patterns[l].iter().zip(&self.gains[l]) {
                let a = self.amplitude * (g.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + c).tanh();
                for (&v, d) in verts.iter().zip(pat) {
                    out[v] += d * a;
                }
            }
        }
        out
    }
}

/// Rest-position albedo: a per-part base color modulated by a smooth
/// spatial pattern.
pub fn albedo(part: usize, rest: &Vec3) -> [f64; 3] {
    let hue = part as f64 * 0.61;
    let base = [
        0.55 + 0.35 * (hue).cos(),
        0.55 + 0.35 * (hue + 2.1).cos(),
        0.55 + 0.35 * (hue + 4.2).cos(),
    ];
    let pattern = 0.75 + 0.25 * (40.0 * rest.x + 1.0).sin() * (35.0 * rest.y).sin() * (30.0 * rest.z + 2.0).cos();
    base.map(|c| c * pattern)
}

/// Per-part brightness from the part's own local rotation.
pub fn shading(pose: &PoseParams, part: usize, amplitude: f64) -> f64 {
    let r = vectorize_row_major(&pose.local_rotation(part));
    let h = [0.9, -0.6, 0.4, 0.7, 1.1, -0.5, 0.3, 0.8, -0.9];
    let phase = part as f64 * 0.37;
    let s: f64 = h.iter().enumerate().map(|(i, w)| w * r[(i + part) % 9]).sum::<f64>() + phase;
    1.0 - amplitude + amplitude * s.tanh()
}

/// Renders `mesh` with the rest-position albedo times the per-part shading.
pub fn render_frame(mesh: &Mesh, rest: &[Vec3], brightness: &[f64], camera: &Camera) -> Image {
    let (_, ids) = raster::rasterize(mesh, camera);
    let mut im = Image::new(camera.width, camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let Some(t) = ids.get(x, y) else { continue };
            let b = raster::pixel_barycentrics(mesh, camera, t, (x as f64 + 0.5, y as f64 + 0.5));
            let [i, j, k] = mesh.triangles()[t];
            let p = rest[i] * b[0] + rest[j] * b[1] + rest[k] * b[2];
            let part = mesh.triangle_part(t);
            let s = brightness[part];
            im.set_f64(x, y, albedo(part, &p).map(|c| c * s));
        }
    }
    im
}

/// A generated sequence. `meshes` are the registered (clothed, noisy)
/// meshes; `poses` and `shape` are the ground truth.
#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub config: SynthConfig,
    pub model: BodyModel,
    pub layout: BodyLayout,
    pub shape: ShapeParams,
    pub poses: Vec<PoseParams>,
    pub meshes: Vec<Mesh>,
    pub cameras: Vec<Camera>,
    /// `images[frame][camera]`; empty when rendering is disabled.
    pub images: Vec<Vec<Image>>,
    pub anchors: Vec<Anchor>,
}

/// Generates the full synthetic sequence; identical configs give
/// bit-identical output.
pub fn generate(config: &SynthConfig) -> Result<SynthSequence> {
    config.validate()?;
    let (model, layout) = standard_body(config.rings, config.segments)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let clothing = ClothingModel::new(&model, &layout, config.deformation_rank, config.deformation_amplitude, &mut rng);
    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).map_err(|e| Error::Configuration(e.to_string()))?;
    let shape = ShapeParams::new(config.shape.clone());
    let poses = standard_motion(config.frames, config.excursion);
    let cameras = standard_cameras(config.image_size, config.fov_degrees, config.camera_distance)?;
    let rest = model.template().vertices().to_vec();
    let n = rest.len();
    let mut meshes = Vec::with_capacity(config.frames);
    let mut images = Vec::new();
    for pose in &poses {
        let naked = model.pose_model(pose, &shape)?;
        let globals = model.skeleton().forward_kinematics(pose);
        let local = clothing.local_displacements(pose, n);
        let parts = naked.part_of_vertex().to_vec();
        let verts: Vec<Vec3> = naked
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut p = v + globals[parts[i]].rotation * local[i];
                if config.noise_sigma > 0.0 {
                    p += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                }
                p
            })
            .collect();
        let mesh = naked.with_vertices(verts)?;
        if config.render_images {
            let brightness: Vec<f64> = (0..model.part_count())
                .map(|l| shading(pose, l, config.shading_amplitude))
                .collect();
            images.push(cameras.iter().map(|c| render_frame(&mesh, &rest, &brightness, c)).collect());
        }
        meshes.push(mesh);
    }
    let anchors = select_anchor_vertices(&model, config.anchors_per_part)
        .into_iter()
        .map(|v| Anchor {
            vertex: v,
            point: meshes[0].vertices()[v],
        })
        .collect();
    Ok(SynthSequence {
        config: config.clone(),
        model,
        layout,
        shape,
        poses,
        meshes,
        cameras,
        images,
        anchors,
    })
}
