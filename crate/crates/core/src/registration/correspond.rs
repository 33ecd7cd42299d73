//! Model-to-target correspondences.

use serde::{Deserialize, Serialize};

use super::nearest::{NearestIndex, Target};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::Mesh;

/// A model surface point, as barycentric weights over three model vertices,
/// paired with a target point. `confidence` scales the pair's residual
/// weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub vertices: [usize; 3],
    pub weights: [f64; 3],
    pub target: Vec3,
    #[serde(default = "unit")]
    pub confidence: f64,
}

fn unit() -> f64 {
    1.0
}

impl Correspondence {
    pub fn surface_point(&self, positions: &[Vec3]) -> Vec3 {
        positions[self.vertices[0]] * self.weights[0]
            + positions[self.vertices[1]] * self.weights[1]
            + positions[self.vertices[2]] * self.weights[2]
    }

    pub fn is_valid(&self) -> bool {
        self.confidence >= 0.0 && self.weights.iter().all(|w| *w >= 0.0) && (self.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Model vertices whose nearest target point lies on or outside the
    /// surface (along the vertex normal): inflates the naked body toward
    /// the clothed target.
    Boundary,
    /// A barycentric lattice of each triangle, each sample paired with its
    /// nearest target point.
    Supersampled,
}

/// Barycentric sample of a triangle lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub vertices: [usize; 3],
    pub weights: [f64; 3],
}

/// Lattice points `(i/d, j/d, k/d)` of every triangle with shared vertex and
/// edge samples emitted once: vertices first, then edge interiors in edge
/// order, then triangle interiors.
pub fn supersample(mesh: &Mesh, density: usize) -> Vec<SurfaceSample> {
    let d = density.max(1);
    let used: Vec<bool> = {
        let mut u = vec![false; mesh.vertex_count()];
        for tri in mesh.triangles() {
            for &v in tri {
                u[v] = true;
            }
        }
        u
    };
    let mut out: Vec<SurfaceSample> = (0..mesh.vertex_count())
        .filter(|&v| used[v])
        .map(|v| SurfaceSample {
            vertices: [v, v, v],
            weights: [1.0, 0.0, 0.0],
        })
        .collect();
    for (a, b) in mesh.edges() {
        for k in 1..d {
            let t = k as f64 / d as f64;
            out.push(SurfaceSample {
                vertices: [a, b, b],
                weights: [1.0 - t, t, 0.0],
            });
        }
    }
    for tri in mesh.triangles() {
        for i in 1..d {
            for j in 1..d - i {
                let k = d - i - j;
                let w = [i as f64 / d as f64, j as f64 / d as f64, k as f64 / d as f64];
                out.push(SurfaceSample {
                    vertices: *tri,
                    weights: w,
                });
            }
        }
    }
    out
}

/// Builds correspondences for `mesh` against the indexed target.
pub fn build_correspondences(mesh: &Mesh, target: &NearestIndex, stage: Stage, density: usize) -> Result<Vec<Correspondence>> {
    if mesh.vertex_count() == 0 {
        return Err(Error::DegenerateInput("model mesh has no vertices".into()));
    }
    let verts = mesh.vertices();
    match stage {
        Stage::Boundary => {
            let normals = mesh.vertex_normals();
            Ok((0..mesh.vertex_count())
                .filter_map(|v| {
                    let hit = target.nearest(&verts[v]);
                    ((hit.point - verts[v]).dot(&normals[v]) >= 0.0).then_some(Correspondence {
                        vertices: [v, v, v],
                        weights: [1.0, 0.0, 0.0],
                        target: hit.point,
                        confidence: 1.0,
                    })
                })
                .collect())
        }
        Stage::Supersampled => Ok(supersample(mesh, density)
            .into_iter()
            .map(|s| {
                let p = verts[s.vertices[0]] * s.weights[0] + verts[s.vertices[1]] * s.weights[1] + verts[s.vertices[2]] * s.weights[2];
                Correspondence {
                    vertices: s.vertices,
                    weights: s.weights,
                    target: target.nearest(&p).point,
                    confidence: 1.0,
                }
            })
            .collect()),
    }
}

/// Barycentric weights of `p` with respect to triangle `abc`, clamped to
/// the triangle and renormalized.
fn barycentric(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> [f64; 3] {
    let (v0, v1, v2) = (b - a, c - a, p - a);
    let (d00, d01, d11) = (v0.dot(&v0), v0.dot(&v1), v1.dot(&v1));
    let (d20, d21) = (v2.dot(&v0), v2.dot(&v1));
    let den = d00 * d11 - d01 * d01;
    if den.abs() <= f64::EPSILON * d00 * d11 {
        return [1.0, 0.0, 0.0];
    }
    let v = (d11 * d20 - d01 * d21) / den;
    let w = (d00 * d21 - d01 * d20) / den;
    let mut out = [(1.0 - v - w).max(0.0), v.max(0.0), w.max(0.0)];
    let sum: f64 = out.iter().sum();
    for x in &mut out {
        *x /= sum;
    }
    out
}

/// Target-to-model pairs: every target point matched to the closest point
/// of the model surface.
pub fn reverse_correspondences(mesh: &Mesh, target: &Target) -> Result<Vec<Correspondence>> {
    if mesh.triangle_count() == 0 {
        return Err(Error::DegenerateInput("model mesh has no triangles".into()));
    }
    let index = NearestIndex::new(Target::Mesh(mesh.clone()))?;
    Ok(target
        .points()
        .iter()
        .map(|y| {
            let hit = index.nearest(y);
            let tri = mesh.triangles()[hit.item];
            let [a, b, c] = mesh.triangle_points(hit.item);
            Correspondence {
                vertices: tri,
                weights: barycentric(&hit.point, &a, &b, &c),
                target: *y,
                confidence: 1.0,
            }
        })
        .collect())
}

/// UV sphere with outward-facing triangles.
pub fn uv_sphere(rings: usize, segments: usize, radius: f64) -> Mesh {
    let mut verts = vec![Vec3::new(0.0, radius, 0.0)];
    for r in 1..rings {
        let phi = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let th = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            verts.push(Vec3::new(phi.sin() * th.cos(), phi.cos(), phi.sin() * th.sin()) * radius);
        }
    }
    verts.push(Vec3::new(0.0, -radius, 0.0));
    let south = verts.len() - 1;
    let idx = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut tris = Vec::new();
    for s in 0..segments {
        tris.push([0, idx(1, s + 1), idx(1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            tris.push([idx(r, s), idx(r, s + 1), idx(r + 1, s)]);
            tris.push([idx(r, s + 1), idx(r + 1, s + 1), idx(r + 1, s)]);
        }
    }
    for s in 0..segments {
        tris.push([south, idx(rings - 1, s), idx(rings - 1, s + 1)]);
    }
    Mesh::unlabelled(verts, tris).expect("valid sphere")
}
