//! Canonical per-triangle texel lattice.
//!
//! A triangle of side `T` holds `N = T(T+1)/2` texels. Texel `(i, j)` with
//! `i + j ≤ T − 1` sits at barycentric coordinates
//! `b1 = (i + 1/3)/T`, `b2 = (j + 1/3)/T`, `b0 = 1 − b1 − b2`
//! (the centroids of the upright sub-triangles), stored in order of `i` then
//! `j`, three interleaved channels per texel.

use std::fmt::Write as _;
use std::path::Path;

use super::{Camera, Image, ScreenTriangle, TriangleIdMap};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::geometry::Vec3;
use crate::mesh::Mesh;

pub fn texel_count(side: usize) -> usize {
    side * (side + 1) / 2
}

fn texel_index(side: usize, i: usize, j: usize) -> usize {
    // Rows i = 0..i-1 hold T, T-1, ... texels.
    i * side - i * (i.saturating_sub(1)) / 2 + j
}

/// `(b0, b1, b2)` for every texel, in storage order.
pub fn lattice_barycentrics(side: usize) -> Vec<[f64; 3]> {
    let t = side as f64;
    let mut out = Vec::with_capacity(texel_count(side));
    for i in 0..side {
        for j in 0..side - i {
            let b1 = (i as f64 + 1.0 / 3.0) / t;
            let b2 = (j as f64 + 1.0 / 3.0) / t;
            out.push([1.0 - b1 - b2, b1, b2]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleTexture {
    pub triangle: usize,
    pub frame: usize,
    pub side: usize,
    /// `3N` values in `[0, 1]`, RGB interleaved.
    pub data: Vec<f32>,
}

impl TriangleTexture {
    pub fn new(triangle: usize, frame: usize, side: usize, data: Vec<f32>) -> Result<Self> {
        if side == 0 || data.len() != 3 * texel_count(side) {
            return Err(Error::param(format!(
                "{} values for side {side} (need {})",
                data.len(),
                3 * texel_count(side)
            )));
        }
        Ok(Self {
            triangle,
            frame,
            side,
            data,
        })
    }

    /// Builds from unclamped values, clamping every channel into `[0, 1]`.
    pub fn from_f64_clamped(triangle: usize, frame: usize, side: usize, values: &[f64]) -> Result<Self> {
        Self::new(triangle, frame, side, values.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect())
    }

    pub fn texel(&self, k: usize) -> [f64; 3] {
        [self.data[3 * k] as f64, self.data[3 * k + 1] as f64, self.data[3 * k + 2] as f64]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| x as f64).collect()
    }

    /// Value at continuous lattice coordinates `(u, v)`, where texel `(i, j)`
    /// is at `(i, j)`; piecewise linear over the lattice, extrapolated from
    /// the nearest cell outside it.
    pub fn lattice_value(&self, u: f64, v: f64) -> [f64; 3] {
        let side = self.side;
        if side == 1 {
            return self.texel(0);
        }
        let i0 = (u.floor().max(0.0) as usize).min(side - 2);
        let j0 = (v.floor().max(0.0) as usize).min(side - 2 - i0);
        let (fu, fv) = (u - i0 as f64, v - j0 as f64);
        let at = |i: usize, j: usize| self.texel(texel_index(side, i, j));
        let upper_exists = i0 + j0 + 2 < side;
        let mut out = [0.0; 3];
        if fu + fv <= 1.0 || !upper_exists {
            let (c00, c10, c01) = (at(i0, j0), at(i0 + 1, j0), at(i0, j0 + 1));
            for k in 0..3 {
                out[k] = c00[k] + fu * (c10[k] - c00[k]) + fv * (c01[k] - c00[k]);
            }
        } else {
            let (c11, c10, c01) = (at(i0 + 1, j0 + 1), at(i0 + 1, j0), at(i0, j0 + 1));
            for k in 0..3 {
                out[k] = c11[k] + (1.0 - fu) * (c01[k] - c11[k]) + (1.0 - fv) * (c10[k] - c11[k]);
            }
        }
        out
    }
}

/// Samples the image bilinearly at the projection of every texel's surface
/// point. The triangle must be visible in this view.
pub fn extract_texture(
    mesh: &Mesh,
    camera: &Camera,
    image: &Image,
    visible: &[bool],
    triangle: usize,
    side: usize,
    frame: usize,
) -> Result<TriangleTexture> {
    if !visible.get(triangle).copied().unwrap_or(false) {
        return Err(Error::Precondition(format!("triangle {triangle} is not visible")));
    }
    sample_texture(mesh, camera, image, triangle, side, frame)
}

/// [`extract_texture`] without the visibility check.
pub(crate) fn sample_texture(
    mesh: &Mesh,
    camera: &Camera,
    image: &Image,
    triangle: usize,
    side: usize,
    frame: usize,
) -> Result<TriangleTexture> {
    if side == 0 {
        return Err(Error::param("texel side must be positive"));
    }
    let [a, b, c] = mesh.triangle_points(triangle);
    let mut data = Vec::with_capacity(3 * texel_count(side));
    for [b0, b1, b2] in lattice_barycentrics(side) {
        let p = a * b0 + b * b1 + c * b2;
        let (x, y, _) = camera
            .project(&p)
            .ok_or_else(|| Error::Precondition(format!("triangle {triangle} crosses the near plane")))?;
        data.extend(image.sample_bilinear(x, y).iter().map(|&v| v as f32));
    }
    TriangleTexture::new(triangle, frame, side, data)
}

/// Barycentrics (in mesh vertex order) of the surface point seen through
/// pixel coordinates `q` on triangle `t`.
pub(crate) fn pixel_barycentrics(mesh: &Mesh, camera: &Camera, t: usize, q: (f64, f64)) -> [f64; 3] {
    let [a, b, c] = mesh.triangle_points(t).map(|p| camera.to_camera(&p));
    let n = (b - a).cross(&(c - a));
    let r = camera.ray(q.0, q.1);
    let x: Vec3 = r * (n.dot(&a) / n.dot(&r));
    let nn = n.norm_squared();
    let b1 = (x - a).cross(&(c - a)).dot(&n) / nn;
    let b2 = (b - a).cross(&(x - a)).dot(&n) / nn;
    [1.0 - b1 - b2, b1, b2]
}

/// Paints `texture` onto every pixel that `ids` assigns to its triangle.
pub fn render_texture(image: &mut Image, mesh: &Mesh, camera: &Camera, ids: &TriangleIdMap, texture: &TriangleTexture) {
    let t = texture.triangle;
    let Some(st) = ScreenTriangle::new(mesh, camera, t) else {
        return;
    };
    let side = texture.side as f64;
    let (x0, x1, y0, y1) = st.pixel_bounds(camera.width, camera.height);
    for y in y0..y1 {
        for x in x0..x1 {
            if ids.get(x, y) != Some(t) {
                continue;
            }
            let [_, b1, b2] = pixel_barycentrics(mesh, camera, t, (x as f64 + 0.5, y as f64 + 0.5));
            let rgb = texture.lattice_value(b1 * side - 1.0 / 3.0, b2 * side - 1.0 / 3.0);
            image.set_f64(x, y, rgb);
        }
    }
}

/// All triangles' textures baked into one image, one `(T+1)²` cell per
/// triangle, with per-corner UVs.
#[derive(Debug, Clone)]
pub struct Atlas {
    pub side: usize,
    pub image: Image,
    /// Per triangle, UV of its three corners in `[0, 1]` (v up).
    pub uv: Vec<[(f64, f64); 3]>,
}

impl Atlas {
    /// `textures[t]` may be `None` (painted mid-gray).
    pub fn build(textures: &[Option<&TriangleTexture>], side: usize) -> Result<Self> {
        let n = textures.len();
        let cell = side + 1;
        let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
        let rows = n.div_ceil(cols).max(1);
        let (w, h) = (cols * cell, rows * cell);
        let mut image = Image::filled(w, h, [128, 128, 128]);
        let mut uv = Vec::with_capacity(n);
        for (t, tex) in textures.iter().enumerate() {
            let (ox, oy) = ((t % cols) * cell, (t / cols) * cell);
            if let Some(tex) = tex {
                if tex.side != side {
                    return Err(Error::param(format!("triangle {t} has side {} not {side}", tex.side)));
                }
                for j in 0..cell {
                    for i in 0..cell {
                        image.set_f64(ox + i, oy + j, tex.lattice_value(i as f64, j as f64));
                    }
                }
            }
            let s = side as f64;
            let corner = |bx: f64, by: f64| {
                let x = ox as f64 + bx * s + 1.0 / 6.0;
                let y = oy as f64 + by * s + 1.0 / 6.0;
                (x / w as f64, 1.0 - y / h as f64)
            };
            uv.push([corner(0.0, 0.0), corner(1.0, 0.0), corner(0.0, 1.0)]);
        }
        Ok(Self { side, image, uv })
    }

    /// Writes `<stem>.ppm`, `<stem>.mtl` and `<stem>.obj` with per-corner UVs.
    pub fn save_with_mesh(&self, mesh: &Mesh, stem: &Path) -> Result<()> {
        let name = stem
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::param("atlas path needs a file name"))?;
        self.image.save_ppm(&stem.with_extension("ppm"))?;
        let mtl = format!("newmtl atlas\nKd 1 1 1\nmap_Kd {name}.ppm\n");
        fsutil::write_atomic(&stem.with_extension("mtl"), mtl.as_bytes(), "material")?;
        let mut obj = format!("mtllib {name}.mtl\nusemtl atlas\n");
        for v in mesh.vertices() {
            let _ = writeln!(obj, "v {} {} {}", v.x, v.y, v.z);
        }
        for corners in &self.uv {
            for (u, v) in corners {
                let _ = writeln!(obj, "vt {u} {v}");
            }
        }
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let _ = writeln!(
                obj,
                "f {}/{} {}/{} {}/{}",
                tri[0] + 1,
                3 * t + 1,
                tri[1] + 1,
                3 * t + 2,
                tri[2] + 1,
                3 * t + 3
            );
        }
        fsutil::write_atomic(&stem.with_extension("obj"), obj.as_bytes(), "textured mesh")
    }
}

#[cfg(test)]
mod tests {
    use super::super::{rasterize, triangle_visibility};
    use super::*;
    use crate::geometry::RigidTransform;

    fn camera(w: usize, h: usize) -> Camera {
        Camera::new(100.0, 100.0, w as f64 / 2.0, h as f64 / 2.0, RigidTransform::identity(), w, h).unwrap()
    }

    fn facing_triangle(size: f64) -> Mesh {
        Mesh::unlabelled(
            vec![
                Vec3::new(-size, size, 2.0),
                Vec3::new(size, size, 2.0),
                Vec3::new(-size, -size, 2.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn lattice_layout() {
        assert_eq!(texel_count(16), 136);
        let l = lattice_barycentrics(3);
        assert_eq!(l.len(), 6);
        for (k, (i, j)) in [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)].iter().enumerate() {
            assert_eq!(texel_index(3, *i, *j), k);
            assert!((l[k][1] - (*i as f64 + 1.0 / 3.0) / 3.0).abs() < 1e-15);
        }
        let c = lattice_barycentrics(1);
        assert_eq!(c.len(), 1);
        assert!(c[0].iter().all(|b| (b - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn constant_image_gives_constant_texture() {
        let cam = camera(64, 64);
        let mesh = facing_triangle(0.3);
        let im = Image::filled(64, 64, [10, 200, 77]);
        let tex = extract_texture(&mesh, &cam, &im, &[true], 0, 5, 0).unwrap();
        for k in 0..texel_count(5) {
            assert_eq!(tex.texel(k).map(|x| (x * 255.0).round() as u8), [10, 200, 77]);
        }
        assert!(matches!(
            extract_texture(&mesh, &cam, &im, &[false], 0, 5, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn gradient_is_reproduced() {
        let (w, h) = (128, 64);
        let cam = camera(w, h);
        let mut im = Image::new(w, h);
        for y in 0..h {
            for x in 0..w {
                im.set(x, y, [(2 * x) as u8, 0, 0]);
            }
        }
        let mesh = facing_triangle(0.4);
        let tex = extract_texture(&mesh, &cam, &im, &[true], 0, 8, 0).unwrap();
        let [a, b, c] = mesh.triangle_points(0);
        for (k, [b0, b1, b2]) in lattice_barycentrics(8).into_iter().enumerate() {
            let (x, _, _) = cam.project(&(a * b0 + b * b1 + c * b2)).unwrap();
            let expected = 2.0 * (x - 0.5) / 255.0;
            assert!((tex.texel(k)[0] - expected).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn side_one_samples_centroid() {
        let cam = camera(64, 64);
        let mesh = facing_triangle(0.3);
        let mut im = Image::new(64, 64);
        for y in 0..64 {
            for x in 0..64 {
                im.set(x, y, [(3 * x) as u8, (3 * y) as u8, 0]);
            }
        }
        let tex = extract_texture(&mesh, &cam, &im, &[true], 0, 1, 0).unwrap();
        let (x, y, _) = cam.project(&mesh.triangle_centroid(0)).unwrap();
        let s = im.sample_bilinear(x, y);
        assert_eq!(tex.texel(0), s.map(|v| v as f32 as f64));
    }

    #[test]
    fn render_then_extract_is_idempotent() {
        let (w, h) = (96, 96);
        let cam = camera(w, h);
        let mesh = facing_triangle(0.5);
        let side = 8;
        let data: Vec<f32> = lattice_barycentrics(side)
            .iter()
            .flat_map(|[b0, b1, b2]| [0.2 + 0.6 * b1, 0.9 - 0.5 * b2, 0.3 + 0.4 * b0 * b0])
            .map(|x| x as f32)
            .collect();
        let tex = TriangleTexture::new(0, 0, side, data).unwrap();
        let (depth, ids) = rasterize(&mesh, &cam);
        let mut im = Image::new(w, h);
        render_texture(&mut im, &mesh, &cam, &ids, &tex);
        let vis = triangle_visibility(&mesh, &cam, &depth, &ids, 1e-3);
        let back = extract_texture(&mesh, &cam, &im, &vis, 0, side, 0).unwrap();
        for (a, b) in back.data.iter().zip(&tex.data) {
            assert!((a - b).abs() <= 2.0 / 255.0, "{a} vs {b}");
        }
    }

    #[test]
    fn lattice_value_reproduces_texels_and_linear_fields() {
        let side = 5;
        let f = |u: f64, v: f64| 0.1 + 0.05 * u + 0.07 * v;
        let mut data = Vec::new();
        for i in 0..side {
            for j in 0..side - i {
                let x = f(i as f64, j as f64) as f32;
                data.extend([x, x, x]);
            }
        }
        let tex = TriangleTexture::new(0, 0, side, data).unwrap();
        for (u, v) in [(0.0, 0.0), (1.5, 0.2), (3.0, 1.0), (4.7, 4.7), (-0.5, 2.0)] {
            assert!((tex.lattice_value(u, v)[0] - f(u, v)).abs() < 1e-6);
        }
    }

    #[test]
    fn atlas_cells_and_uvs() {
        let side = 4;
        let tex = TriangleTexture::new(0, 0, side, vec![0.2; 3 * texel_count(side)]).unwrap();
        let atlas = Atlas::build(&[Some(&tex), None, Some(&tex)], side).unwrap();
        assert_eq!((atlas.image.width(), atlas.image.height()), (10, 10));
        assert_eq!(atlas.image.get(0, 0), [51, 51, 51]);
        assert_eq!(atlas.image.get(5, 0), [128, 128, 128]);
        assert_eq!(atlas.uv.len(), 3);
        let (u, v) = atlas.uv[0][0];
        assert!((u - 1.0 / 60.0).abs() < 1e-12 && (v - (1.0 - 1.0 / 60.0)).abs() < 1e-12);
    }
}
