//! Software rasterization: depth and triangle-ID maps, the all-pixels-visible
//! test, and per-triangle texture extraction.
//!
//! Camera space has x right, y down and z forward. Pixel `(i, j)` covers
//! `[i, i+1) × [j, j+1)` and is sampled at its center.

mod image;
mod texel;

pub use image::{heat_color, to_u8, Image};
pub use texel::{extract_texture, lattice_barycentrics, render_texture, texel_count, Atlas, TriangleTexture};
pub(crate) use texel::{pixel_barycentrics, sample_texture};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::geometry::{RigidTransform, Vec3};
use crate::mesh::Mesh;

/// Triangles with any vertex closer than this (camera z) are not drawn.
pub const NEAR_PLANE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World to camera.
    pub extrinsic: RigidTransform,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, extrinsic: RigidTransform, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            extrinsic,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::param("camera needs fx, fy > 0 and a non-empty image"));
        }
        if !self.extrinsic.is_valid(1e-9) {
            return Err(Error::param("camera extrinsic is not a rigid transform"));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `fov_y` in radians.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y: f64, width: usize, height: usize) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::param("eye equals target"))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::param("up is parallel to the viewing direction"))?;
        let down = forward.cross(&right);
        let rot = crate::geometry::Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let f = 0.5 * height as f64 / (0.5 * fov_y).tan();
        Self::new(
            f,
            f,
            0.5 * width as f64,
            0.5 * height as f64,
            RigidTransform::new(rot, -(rot * eye)),
            width,
            height,
        )
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.extrinsic.apply_point(p)
    }

    /// Camera-space point to continuous pixel coordinates.
    pub fn project_camera(&self, pc: &Vec3) -> (f64, f64) {
        (self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy)
    }

    /// Pixel coordinates and depth, or `None` behind the near plane.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let pc = self.to_camera(p);
        if pc.z <= NEAR_PLANE {
            return None;
        }
        let (x, y) = self.project_camera(&pc);
        Some((x, y, pc.z))
    }

    /// Camera-space direction (z = 1) of the ray through pixel coordinates.
    pub fn ray(&self, x: f64, y: f64) -> Vec3 {
        Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    pub fn center(&self) -> Vec3 {
        self.extrinsic.inverse().translation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    /// Row-major camera z, `+∞` where nothing was drawn.
    pub data: Vec<f64>,
}

pub const NO_TRIANGLE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangleIdMap {
    pub width: usize,
    pub height: usize,
    /// Row-major triangle index, `NO_TRIANGLE` for background.
    pub data: Vec<u32>,
}

impl DepthMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Raw dump: u32 width, u32 height, then f64 per pixel row-major, all
    /// little-endian; background is `+∞`.
    pub fn to_raw(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.data.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for d in &self.data {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out
    }

    /// Near is white, far is dark, background black.
    pub fn to_image(&self) -> Image {
        let finite = self.data.iter().copied().filter(|d| d.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
        let mut im = Image::new(self.width, self.height);
        for (i, &d) in self.data.iter().enumerate() {
            if d.is_finite() {
                let t = if hi > lo { (d - lo) / (hi - lo) } else { 0.0 };
                let g = 1.0 - 0.8 * t;
                im.set_f64(i % self.width, i / self.width, [g, g, g]);
            }
        }
        im
    }
}

impl TriangleIdMap {
    pub fn get(&self, x: usize, y: usize) -> Option<usize> {
        match self.data[y * self.width + x] {
            NO_TRIANGLE => None,
            t => Some(t as usize),
        }
    }

    /// Raw dump: u32 width, u32 height, then u32 per pixel row-major, all
    /// little-endian; background is `0xFFFFFFFF`.
    pub fn to_raw(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.data.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for d in &self.data {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out
    }

    /// Color-coded IDs: index `t + 1` spread over the 24-bit RGB value.
    pub fn to_image(&self) -> Image {
        let mut im = Image::new(self.width, self.height);
        for (i, &t) in self.data.iter().enumerate() {
            if t != NO_TRIANGLE {
                let c = (t as u64 + 1).wrapping_mul(2_654_435_761) & 0xFF_FFFF;
                im.set(i % self.width, i / self.width, [(c >> 16) as u8, (c >> 8) as u8, c as u8]);
            }
        }
        im
    }
}

pub fn save_depth_and_ids(depth: &DepthMap, ids: &TriangleIdMap, stem: &Path) -> Result<()> {
    let with = |ext: &str| stem.with_extension(ext);
    fsutil::write_atomic(&with("depth.bin"), &depth.to_raw(), "depth map")?;
    depth.to_image().save_ppm(&with("depth.ppm"))?;
    fsutil::write_atomic(&with("ids.bin"), &ids.to_raw(), "triangle id map")?;
    ids.to_image().save_ppm(&with("ids.ppm"))
}

/// A triangle projected to the image, oriented so that its edge functions
/// are non-negative inside.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScreenTriangle {
    pub p: [(f64, f64); 3],
    pub cam: [Vec3; 3],
    pub area2: f64,
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Top edges (horizontal, interior below) and left edges (going up) own
/// pixel centers lying exactly on them.
fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.1 == b.1 && b.0 > a.0) || b.1 < a.1
}

impl ScreenTriangle {
    pub(crate) fn new(mesh: &Mesh, camera: &Camera, t: usize) -> Option<Self> {
        let pts = mesh.triangle_points(t);
        let cam = pts.map(|p| camera.to_camera(&p));
        if cam.iter().any(|c| !(c.z > NEAR_PLANE)) {
            return None;
        }
        let mut p = cam.map(|c| camera.project_camera(&c));
        let mut cam = cam;
        let mut area2 = edge(p[0], p[1], p[2]);
        if area2 < 0.0 {
            p.swap(1, 2);
            cam.swap(1, 2);
            area2 = -area2;
        }
        if !(area2 > 0.0) || !area2.is_finite() {
            return None;
        }
        Some(Self { p, cam, area2 })
    }

    pub(crate) fn covers(&self, q: (f64, f64)) -> bool {
        (0..3).all(|k| {
            let (a, b) = (self.p[k], self.p[(k + 1) % 3]);
            let e = edge(a, b, q);
            e > 0.0 || (e == 0.0 && is_top_left(a, b))
        })
    }

    /// Pixel range `[x0, x1) × [y0, y1)` whose centers may be covered.
    pub(crate) fn pixel_bounds(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let xs = self.p.map(|q| q.0);
        let ys = self.p.map(|q| q.1);
        let lo = |v: [f64; 3], n: usize| ((v[0].min(v[1]).min(v[2]) - 0.5).ceil().max(0.0) as usize).min(n);
        let hi = |v: [f64; 3], n: usize| (((v[0].max(v[1]).max(v[2]) - 0.5).floor() + 1.0).max(0.0) as usize).min(n);
        (lo(xs, width), hi(xs, width), lo(ys, height), hi(ys, height))
    }

    /// Camera z where the ray through `q` meets the triangle's plane.
    pub(crate) fn depth_at(&self, camera: &Camera, q: (f64, f64)) -> f64 {
        let n = (self.cam[1] - self.cam[0]).cross(&(self.cam[2] - self.cam[0]));
        n.dot(&self.cam[0]) / n.dot(&camera.ray(q.0, q.1))
    }

    pub(crate) fn for_each_pixel(&self, camera: &Camera, mut f: impl FnMut(usize, usize)) {
        let (x0, x1, y0, y1) = self.pixel_bounds(camera.width, camera.height);
        for y in y0..y1 {
            for x in x0..x1 {
                if self.covers((x as f64 + 0.5, y as f64 + 0.5)) {
                    f(x, y);
                }
            }
        }
    }
}

/// Z-buffered rasterization. Equal depths keep the lower triangle index.
pub fn rasterize(mesh: &Mesh, camera: &Camera) -> (DepthMap, TriangleIdMap) {
    let (w, h) = (camera.width, camera.height);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut ids = vec![NO_TRIANGLE; w * h];
    for t in 0..mesh.triangle_count() {
        let Some(st) = ScreenTriangle::new(mesh, camera, t) else {
            continue;
        };
        st.for_each_pixel(camera, |x, y| {
            let z = st.depth_at(camera, (x as f64 + 0.5, y as f64 + 0.5));
            let i = y * w + x;
            if z < depth[i] {
                depth[i] = z;
                ids[i] = t as u32;
            }
        });
    }
    (
        DepthMap {
            width: w,
            height: h,
            data: depth,
        },
        TriangleIdMap {
            width: w,
            height: h,
            data: ids,
        },
    )
}

/// A triangle is visible when it covers at least one pixel and, at every
/// covered pixel, its own depth there is within `eps` of the depth map.
pub fn triangle_visibility(mesh: &Mesh, camera: &Camera, depth: &DepthMap, _ids: &TriangleIdMap, eps: f64) -> Vec<bool> {
    (0..mesh.triangle_count())
        .map(|t| {
            let Some(st) = ScreenTriangle::new(mesh, camera, t) else {
                return false;
            };
            let mut covered = false;
            let mut all = true;
            st.for_each_pixel(camera, |x, y| {
                covered = true;
                if all {
                    let z = st.depth_at(camera, (x as f64 + 0.5, y as f64 + 0.5));
                    all = (z - depth.get(x, y)).abs() < eps;
                }
            });
            covered && all
        })
        .collect()
}

/// Default visibility tolerance: `1e-3` of the scene's bounding-box diagonal.
pub fn default_epsilon(mesh: &Mesh) -> f64 {
    1e-3 * mesh.bbox_diagonal()
}

/// Projected area in square pixels, zero when clipped by the near plane.
pub fn projected_area(mesh: &Mesh, camera: &Camera, t: usize) -> f64 {
    ScreenTriangle::new(mesh, camera, t).map_or(0.0, |st| 0.5 * st.area2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn front_camera(w: usize, h: usize) -> Camera {
        Camera::new(50.0, 50.0, w as f64 / 2.0, h as f64 / 2.0, RigidTransform::identity(), w, h).unwrap()
    }

    #[test]
    fn look_at_axes() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), Vec3::y(), 1.0, 64, 64).unwrap();
        let (x, y, z) = cam.project(&Vec3::new(1.0, 1.0, 0.0)).unwrap();
        assert!(x > 32.0 && y < 32.0);
        assert!((z - 5.0).abs() < 1e-12);
        assert!((cam.center() - Vec3::new(0.0, 0.0, 5.0)).norm() < 1e-12);
    }

    #[test]
    fn single_tilted_triangle_depth_is_plane_depth() {
        let cam = front_camera(40, 40);
        let verts = vec![Vec3::new(-0.3, -0.3, 2.0), Vec3::new(0.3, -0.3, 2.5), Vec3::new(0.0, 0.3, 3.0)];
        let mesh = Mesh::unlabelled(verts.clone(), vec![[0, 1, 2]]).unwrap();
        let (depth, ids) = rasterize(&mesh, &cam);
        let n = (verts[1] - verts[0]).cross(&(verts[2] - verts[0]));
        let mut count = 0;
        for y in 0..40 {
            for x in 0..40 {
                if let Some(t) = ids.get(x, y) {
                    assert_eq!(t, 0);
                    count += 1;
                    let r = cam.ray(x as f64 + 0.5, y as f64 + 0.5);
                    let z = n.dot(&verts[0]) / n.dot(&r);
                    assert!((depth.get(x, y) - z).abs() < 1e-6);
                } else {
                    assert_eq!(depth.get(x, y), f64::INFINITY);
                }
            }
        }
        assert!(count > 20);
    }

    #[test]
    fn nearer_triangle_wins_overlap() {
        let cam = front_camera(32, 32);
        let verts = vec![
            Vec3::new(-1.0, -1.0, 4.0),
            Vec3::new(1.0, -1.0, 4.0),
            Vec3::new(0.0, 1.0, 4.0),
            Vec3::new(-1.0, -1.0, 3.0),
            Vec3::new(1.0, -1.0, 3.0),
            Vec3::new(0.0, 1.0, 3.0),
        ];
        let mesh = Mesh::unlabelled(verts, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let (_, ids) = rasterize(&mesh, &cam);
        assert!(ids.data.iter().all(|&t| t == NO_TRIANGLE || t == 1));
        assert!(ids.data.contains(&1));
    }

    #[test]
    fn behind_camera_is_background() {
        let cam = front_camera(16, 16);
        let mesh = Mesh::unlabelled(
            vec![Vec3::new(-1.0, -1.0, -2.0), Vec3::new(1.0, -1.0, -2.0), Vec3::new(0.0, 1.0, -2.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let (depth, ids) = rasterize(&mesh, &cam);
        assert!(depth.data.iter().all(|d| d.is_infinite()));
        assert!(ids.data.iter().all(|&t| t == NO_TRIANGLE));
        let vis = triangle_visibility(&mesh, &cam, &depth, &ids, 1e-3);
        assert_eq!(vis, vec![false]);
    }

    #[test]
    fn shared_edge_pixels_are_drawn_once() {
        // A square split along its diagonal, in a grid-aligned position so
        // that many pixel centers fall exactly on edges.
        let cam = Camera::new(1.0, 1.0, 0.0, 0.0, RigidTransform::identity(), 16, 16).unwrap();
        let z = 1.0;
        let v = vec![
            Vec3::new(2.5, 2.5, z),
            Vec3::new(10.5, 2.5, z),
            Vec3::new(10.5, 10.5, z),
            Vec3::new(2.5, 10.5, z),
        ];
        let mesh = Mesh::unlabelled(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let mut hits = vec![0; 256];
        for t in 0..2 {
            ScreenTriangle::new(&mesh, &cam, t)
                .unwrap()
                .for_each_pixel(&cam, |x, y| hits[y * 16 + x] += 1);
        }
        assert!(hits.iter().all(|&h| h <= 1));
        assert_eq!(hits.iter().sum::<i32>(), 64);
    }

    #[test]
    fn half_occluded_triangle_is_not_visible() {
        let cam = front_camera(48, 48);
        let verts = vec![
            Vec3::new(-0.5, -0.5, 3.0),
            Vec3::new(0.5, -0.5, 3.0),
            Vec3::new(0.0, 0.5, 3.0),
            // flap covering the left half, nearer
            Vec3::new(-2.0, -2.0, 2.0),
            Vec3::new(0.0, -2.0, 2.0),
            Vec3::new(0.0, 2.0, 2.0),
        ];
        let mesh = Mesh::unlabelled(verts, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let (depth, ids) = rasterize(&mesh, &cam);
        let vis = triangle_visibility(&mesh, &cam, &depth, &ids, 1e-3);
        assert_eq!(vis, vec![false, true]);
        let zero = triangle_visibility(&mesh, &cam, &depth, &ids, 0.0);
        assert_eq!(zero, vec![false, false]);
    }

    #[test]
    fn raw_dumps_have_documented_layout() {
        let cam = front_camera(3, 2);
        let mesh = Mesh::unlabelled(
            vec![Vec3::new(-9.0, -9.0, 1.0), Vec3::new(9.0, -9.0, 1.0), Vec3::new(0.0, 9.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let (d, ids) = rasterize(&mesh, &cam);
        let raw = d.to_raw();
        assert_eq!(raw.len(), 8 + 6 * 8);
        assert_eq!(u32::from_le_bytes(raw[0..4].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(raw[8..16].try_into().unwrap()), d.data[0]);
        assert_eq!(ids.to_raw().len(), 8 + 6 * 4);
    }
}
