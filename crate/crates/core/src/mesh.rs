//! Shared-topology triangle meshes and their on-disk form.
//!
//! Meshes are stored as Wavefront OBJ (vertices and triangular faces only).
//! Part labels live in a JSON sidecar next to the OBJ: `body.obj` pairs with
//! `body.parts.json`:
//!
//! ```json
//! { "format": "eigen-avatar/parts", "version": 1, "vertex_count": 3, "part_of_vertex": [0, 0, 1] }
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::geometry::{bbox_diagonal, Vec3};

pub const PARTS_FORMAT: &str = "eigen-avatar/parts";
pub const PARTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    part_of_vertex: Vec<usize>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, part_of_vertex: Vec<usize>) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            part_of_vertex,
        };
        mesh.validate(None)?;
        Ok(mesh)
    }

    /// Mesh with every vertex labelled part 0.
    pub fn unlabelled(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let parts = vec![0; vertices.len()];
        Self::new(vertices, triangles, parts)
    }

    /// Checks index ranges, label count and non-degeneracy. When `part_count`
    /// is given, labels must also be below it.
    pub fn validate(&self, part_count: Option<usize>) -> Result<()> {
        let n = self.vertices.len();
        if self.part_of_vertex.len() != n {
            return Err(Error::param(format!(
                "{} part labels for {} vertices",
                self.part_of_vertex.len(),
                n
            )));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::param(format!("triangle {t} references a vertex >= {n}")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::param(format!("triangle {t} is degenerate: {tri:?}")));
            }
        }
        if let Some(pc) = part_count {
            if let Some((v, &p)) = self.part_of_vertex.iter().enumerate().find(|(_, &p)| p >= pc) {
                return Err(Error::param(format!("vertex {v} has part {p} >= part count {pc}")));
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::param("non-finite vertex coordinate"));
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    /// Vertex positions may change freely; topology and labels may not.
    pub fn vertices_mut(&mut self) -> &mut [Vec3] {
        &mut self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn part_of_vertex(&self) -> &[usize] {
        &self.part_of_vertex
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn part_count(&self) -> usize {
        self.part_of_vertex.iter().max().map_or(0, |m| m + 1)
    }

    /// Same vertex count, triangles and part labels.
    pub fn same_topology(&self, other: &Mesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.triangles == other.triangles && self.part_of_vertex == other.part_of_vertex
    }

    /// Copy of this mesh's topology with new positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Mesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::param(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Mesh {
            vertices,
            triangles: self.triangles.clone(),
            part_of_vertex: self.part_of_vertex.clone(),
        })
    }

    pub fn with_parts(&self, part_of_vertex: Vec<usize>) -> Result<Mesh> {
        Mesh::new(self.vertices.clone(), self.triangles.clone(), part_of_vertex)
    }

    pub fn triangle_points(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_centroid(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_points(t);
        (a + b + c) / 3.0
    }

    /// Part owning the majority of the triangle's vertices; with three
    /// different labels the lowest wins.
    pub fn triangle_part(&self, t: usize) -> usize {
        let [a, b, c] = self.triangles[t].map(|i| self.part_of_vertex[i]);
        if a == b || a == c {
            a
        } else if b == c {
            b
        } else {
            a.min(b).min(c)
        }
    }

    /// Vertex indices per part, ascending.
    pub fn part_vertices(&self, part_count: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); part_count.max(self.part_count())];
        for (v, &p) in self.part_of_vertex.iter().enumerate() {
            out[p].push(v);
        }
        out
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }

    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_points(t);
        (b - a).cross(&(c - a))
    }

    /// Area-weighted unit vertex normals; isolated vertices get zero.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut n = vec![Vec3::zeros(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let tn = self.triangle_normal(t);
            for &v in tri {
                n[v] += tn;
            }
        }
        for v in &mut n {
            let len = v.norm();
            if len > 0.0 {
                *v /= len;
            }
        }
        n
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PartsSidecar {
    format: String,
    version: u32,
    vertex_count: usize,
    part_of_vertex: Vec<usize>,
}

/// `foo.obj` -> `foo.parts.json`.
pub fn parts_sidecar_path(obj_path: &Path) -> PathBuf {
    obj_path.with_extension("parts.json")
}

/// Serializes vertices and faces as OBJ text. Coordinates use Rust's shortest
/// round-trip formatting, so a reload reproduces every bit.
pub fn to_obj_string(mesh: &Mesh) -> String {
    let mut s = String::with_capacity(mesh.vertex_count() * 48 + mesh.triangle_count() * 24);
    s.push_str("# eigen-avatar mesh\n");
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

/// Parses the vertex and triangle records of an OBJ document. `file` is only
/// used in error messages.
pub fn parse_obj(text: &str, file: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let perr = |line: usize, message: String| Error::Parse {
        file: file.to_string(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut faces: Vec<([usize; 3], usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let coords: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| perr(lineno, format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 {
                    return Err(perr(lineno, "vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = it.collect();
                if refs.len() != 3 {
                    return Err(perr(
                        lineno,
                        format!("face has {} vertices, only triangles are supported", refs.len()),
                    ));
                }
                let mut tri = [0usize; 3];
                for (k, r) in refs.iter().enumerate() {
                    let head = r.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| perr(lineno, format!("bad face index '{r}'")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(perr(lineno, "face index 0 is invalid (OBJ indices are 1-based)".into()));
                    };
                    if resolved < 0 {
                        return Err(perr(lineno, format!("relative face index {idx} out of range")));
                    }
                    tri[k] = resolved as usize;
                }
                faces.push((tri, lineno));
            }
            _ => {}
        }
    }
    let n = vertices.len();
    let mut triangles = Vec::with_capacity(faces.len());
    for (tri, lineno) in faces {
        if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
            return Err(perr(lineno, format!("face index {} out of range ({} vertices)", bad + 1, n)));
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(perr(lineno, "degenerate face".into()));
        }
        triangles.push(tri);
    }
    Ok((vertices, triangles))
}

/// Writes `path` (OBJ) and its `.parts.json` sidecar.
pub fn save_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, to_obj_string(mesh).as_bytes(), "mesh obj")?;
    let sidecar = PartsSidecar {
        format: PARTS_FORMAT.into(),
        version: PARTS_VERSION,
        vertex_count: mesh.vertex_count(),
        part_of_vertex: mesh.part_of_vertex().to_vec(),
    };
    let text = serde_json::to_string(&sidecar)?;
    fsutil::write_atomic(&parts_sidecar_path(path), text.as_bytes(), "mesh part sidecar")
}

/// Reads an OBJ and, when present, its part sidecar (all vertices get part 0
/// otherwise).
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = fsutil::read_to_string(path, "mesh obj")?;
    let (vertices, triangles) = parse_obj(&text, &path.display().to_string())?;
    let sidecar_path = parts_sidecar_path(path);
    let parts = if sidecar_path.exists() {
        let text = fsutil::read_to_string(&sidecar_path, "mesh part sidecar")?;
        let sidecar: PartsSidecar = serde_json::from_str(&text)?;
        if sidecar.format != PARTS_FORMAT || sidecar.version != PARTS_VERSION {
            return Err(Error::Format(format!(
                "unsupported part sidecar {} v{}",
                sidecar.format, sidecar.version
            )));
        }
        if sidecar.part_of_vertex.len() != vertices.len() {
            return Err(Error::param(format!(
                "sidecar has {} labels, obj has {} vertices",
                sidecar.part_of_vertex.len(),
                vertices.len()
            )));
        }
        sidecar.part_of_vertex
    } else {
        vec![0; vertices.len()]
    };
    Mesh::new(vertices, triangles, parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mesh(n: usize, seed: u64) -> Mesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vertices = (0..n)
            .map(|_| Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen::<f64>() * 1e-3))
            .collect();
        let triangles = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
        let parts = (0..n).map(|i| i % 4).collect();
        Mesh::new(vertices, triangles, parts).unwrap()
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        let mesh = random_mesh(100, 7);
        save_mesh(&mesh, &path).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn zero_face_index_names_the_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n";
        match parse_obj(text, "bad.obj") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("1-based"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_face_is_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n";
        assert!(matches!(parse_obj(text, "x"), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn quads_are_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 4 3\n";
        assert!(matches!(parse_obj(text, "x"), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn slash_and_negative_indices_parse() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 -2/1 -1/1\n";
        let (_, tris) = parse_obj(text, "x").unwrap();
        assert_eq!(tris, vec![[0, 1, 2]]);
    }

    #[test]
    fn degenerate_triangle_is_invalid() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(Mesh::unlabelled(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn majority_part_of_triangle() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let m = Mesh::new(v, vec![[0, 1, 2], [1, 2, 3]], vec![2, 1, 1, 0]).unwrap();
        assert_eq!(m.triangle_part(0), 1);
        assert_eq!(m.triangle_part(1), 1);
        let m2 = m.with_parts(vec![2, 1, 0, 0]).unwrap();
        assert_eq!(m2.triangle_part(0), 0);
    }
}
