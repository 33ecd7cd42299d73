//! Free-form refinement: per-vertex offsets pulled toward target
//! correspondences and regularized by an edge smoothness penalty.

use super::nearest::NearestIndex;
use crate::geometry::Vec3;
use crate::mesh::Mesh;

/// Weights and solver controls for one refinement call.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RefineParams {
    pub beta: f64,
    pub smoothness: f64,
    pub rounds: usize,
}

/// Energy `beta * sum |x_i + s_i - y_i|^2 + w * sum_edges |s_a - s_b|^2`.
fn refine_energy(base: &[Vec3], offsets: &[Vec3], targets: &[Vec3], edges: &[(usize, usize)], p: RefineParams) -> (f64, f64) {
    let data: f64 = base
        .iter()
        .zip(offsets)
        .zip(targets)
        .map(|((x, s), y)| (x + s - y).norm_squared())
        .sum::<f64>()
        * p.beta;
    let smooth: f64 = edges.iter().map(|&(a, b)| (offsets[a] - offsets[b]).norm_squared()).sum::<f64>() * p.smoothness;
    (data, smooth)
}

/// `(beta I + w L) s` for the edge graph Laplacian `L`.
fn apply_system(s: &[Vec3], edges: &[(usize, usize)], p: RefineParams, out: &mut [Vec3]) {
    for (o, v) in out.iter_mut().zip(s) {
        *o = v * p.beta;
    }
    for &(a, b) in edges {
        let d = (s[a] - s[b]) * p.smoothness;
        out[a] += d;
        out[b] -= d;
    }
}

/// Jacobi-preconditioned conjugate gradients, warm-started from `s`.
fn solve(s: &mut [Vec3], rhs: &[Vec3], edges: &[(usize, usize)], p: RefineParams) {
    let n = s.len();
    let mut diag = vec![p.beta; n];
    for &(a, b) in edges {
        diag[a] += p.smoothness;
        diag[b] += p.smoothness;
    }
    let dot = |a: &[Vec3], b: &[Vec3]| a.iter().zip(b).map(|(x, y)| x.dot(y)).sum::<f64>();
    let mut ax = vec![Vec3::zeros(); n];
    apply_system(s, edges, p, &mut ax);
    let mut r: Vec<Vec3> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<Vec3> = r.iter().zip(&diag).map(|(r, d)| r / *d).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let rhs_norm = dot(rhs, rhs).sqrt().max(1e-300);
    for _ in 0..4 * n.max(50) {
        if dot(&r, &r).sqrt() <= 1e-12 * rhs_norm {
            break;
        }
        apply_system(&dir, edges, p, &mut ax);
        let denom = dot(&dir, &ax);
        if denom <= 0.0 {
            break;
        }
        let step = rz / denom;
        for i in 0..n {
            s[i] += dir[i] * step;
            r[i] -= ax[i] * step;
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            dir[i] = z[i] + dir[i] * beta;
        }
    }
}

/// Refines `model_mesh` toward `target`; returns the refined mesh and the
/// energy after each round (the first entry is the starting energy).
pub(crate) fn refine(model_mesh: &Mesh, target: &NearestIndex, p: RefineParams) -> (Mesh, Vec<f64>, f64) {
    let base = model_mesh.vertices();
    let edges = model_mesh.edges();
    let mut offsets = vec![Vec3::zeros(); base.len()];
    let mut trace = Vec::new();
    let mut smooth_term = 0.0;
    let mut previous: Option<Vec<Vec3>> = None;
    for round in 0..p.rounds {
        let mut targets: Vec<Vec3> = base.iter().zip(&offsets).map(|(x, s)| target.nearest(&(x + s)).point).collect();
        let (mut data, mut smooth) = refine_energy(base, &offsets, &targets, &edges, p);
        if let Some(old) = previous.take() {
            let (d0, s0) = refine_energy(base, &offsets, &old, &edges, p);
            if d0 + s0 < data + smooth {
                targets = old;
                (data, smooth) = (d0, s0);
            }
        }
        if round == 0 {
            trace.push(data + smooth);
        }
        let rhs: Vec<Vec3> = base.iter().zip(&targets).map(|(x, y)| (y - x) * p.beta).collect();
        let before = offsets.clone();
        solve(&mut offsets, &rhs, &edges, p);
        let (data2, smooth2) = refine_energy(base, &offsets, &targets, &edges, p);
        // Round-off can make an exact solve marginally worse near zero.
        if data2 + smooth2 > data + smooth {
            offsets = before;
            trace.push(data + smooth);
            smooth_term = smooth;
        } else {
            trace.push(data2 + smooth2);
            smooth_term = smooth2;
        }
        previous = Some(targets);
    }
    let verts = base.iter().zip(&offsets).map(|(x, s)| x + s).collect();
    (model_mesh.with_vertices(verts).expect("same vertex count"), trace, smooth_term)
}
