//! Eigen-deformation: per-part displacements between the registered mesh `M`
//! and the skinned body `M′`, expressed in each part's local frame and
//! compressed with one PCA subspace per part.

use crate::binio::{Precision, Reader, Writer};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::mesh::Mesh;
use crate::subspace::{self, EigenSubspace, Rank, SampleMatrix};

pub const SECTION_VERSION: u32 = 1;

/// Per-part concatenated local displacements `(q_l1ᵀ q_l2ᵀ …)ᵀ` for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub parts: Vec<Vec<f64>>,
}

impl DisplacementField {
    pub fn is_zero(&self) -> bool {
        self.parts.iter().flatten().all(|&x| x == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformModel {
    part_vertices: Vec<Vec<usize>>,
    subspaces: Vec<EigenSubspace>,
}

fn check_frames(mesh: &Mesh, frames: &[RigidTransform]) -> Result<Vec<Vec<usize>>> {
    if mesh.part_count() > frames.len() {
        return Err(Error::param(format!(
            "mesh has {} parts but {} frames were given",
            mesh.part_count(),
            frames.len()
        )));
    }
    Ok(mesh.part_vertices(frames.len()))
}

/// `q_lk = R_l (v_lk − v′_lk)` grouped by part, where `R_l` is the rotation of
/// the part frame `H_l`.
pub fn displacement_field(m: &Mesh, m_prime: &Mesh, frames: &[RigidTransform]) -> Result<DisplacementField> {
    if !m.same_topology(m_prime) {
        return Err(Error::param("M and M′ differ in topology or part labels"));
    }
    let groups = check_frames(m_prime, frames)?;
    let (v, vp) = (m.vertices(), m_prime.vertices());
    let parts = groups
        .iter()
        .zip(frames)
        .map(|(idx, h)| {
            idx.iter()
                .flat_map(|&i| {
                    let q = h.apply_vector(&(v[i] - vp[i]));
                    [q.x, q.y, q.z]
                })
                .collect()
        })
        .collect();
    Ok(DisplacementField { parts })
}

impl DeformModel {
    pub fn from_parts(part_vertices: Vec<Vec<usize>>, subspaces: Vec<EigenSubspace>) -> Result<Self> {
        if part_vertices.len() != subspaces.len() {
            return Err(Error::param("one subspace per part required"));
        }
        for (l, (idx, s)) in part_vertices.iter().zip(&subspaces).enumerate() {
            if s.dim() != 3 * idx.len() {
                return Err(Error::param(format!(
                    "part {l}: subspace dim {} but {} vertices",
                    s.dim(),
                    idx.len()
                )));
            }
        }
        Ok(Self { part_vertices, subspaces })
    }

    pub fn part_count(&self) -> usize {
        self.subspaces.len()
    }

    pub fn part_vertices(&self) -> &[Vec<usize>] {
        &self.part_vertices
    }

    pub fn subspaces(&self) -> &[EigenSubspace] {
        &self.subspaces
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.subspaces.iter().map(EigenSubspace::rank).collect()
    }

    pub fn truncated(&self, l: usize) -> Result<Self> {
        Ok(Self {
            part_vertices: self.part_vertices.clone(),
            subspaces: self.subspaces.iter().map(|s| s.truncated(l.min(s.rank()))).collect::<Result<_>>()?,
        })
    }

    pub fn embed(&self, field: &DisplacementField) -> Result<Vec<Vec<f64>>> {
        if field.parts.len() != self.part_count() {
            return Err(Error::param("field part count differs from model"));
        }
        self.subspaces.iter().zip(&field.parts).map(|(s, q)| s.embed(q)).collect()
    }

    pub fn decode(&self, coeffs: &[Vec<f64>]) -> Result<DisplacementField> {
        if coeffs.len() != self.part_count() {
            return Err(Error::param(format!(
                "{} coefficient vectors for {} parts",
                coeffs.len(),
                self.part_count()
            )));
        }
        let parts = self
            .subspaces
            .iter()
            .zip(coeffs)
            .map(|(s, c)| s.reconstruct(c))
            .collect::<Result<_>>()?;
        Ok(DisplacementField { parts })
    }

    pub fn quantized(&self, precision: Precision) -> Self {
        Self {
            part_vertices: self.part_vertices.clone(),
            subspaces: self.subspaces.iter().map(|s| s.quantized(precision)).collect(),
        }
    }

    pub fn write_to(&self, w: &mut Writer, precision: Precision) {
        w.u32(SECTION_VERSION);
        w.len_u64(self.part_count());
        for (idx, s) in self.part_vertices.iter().zip(&self.subspaces) {
            w.len_u64(idx.len());
            for &i in idx {
                w.u32(i as u32);
            }
            s.write_to(w, precision);
        }
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        let version = r.u32()?;
        if version != SECTION_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: SECTION_VERSION,
            });
        }
        let parts = r.len_u64()?;
        let mut part_vertices = Vec::with_capacity(parts);
        let mut subspaces = Vec::with_capacity(parts);
        for _ in 0..parts {
            let n = r.len_u64()?;
            part_vertices.push((0..n).map(|_| r.u32().map(|i| i as usize)).collect::<Result<Vec<_>>>()?);
            subspaces.push(EigenSubspace::read_from(r)?);
        }
        Self::from_parts(part_vertices, subspaces)
    }
}

/// Per-part PCA over the frames' displacement vectors.
pub fn fit_deform_model(fields: &[DisplacementField], part_vertices: &[Vec<usize>], rank: Rank) -> Result<DeformModel> {
    if fields.is_empty() {
        return Err(Error::param("no displacement frames"));
    }
    let mut subspaces = Vec::with_capacity(part_vertices.len());
    for (l, idx) in part_vertices.iter().enumerate() {
        let cols: Vec<&[f64]> = fields.iter().map(|f| f.parts.get(l).map(Vec::as_slice).unwrap_or(&[])).collect();
        if cols.iter().any(|c| c.len() != 3 * idx.len()) {
            return Err(Error::param(format!("part {l}: inconsistent displacement length")));
        }
        if idx.is_empty() {
            subspaces.push(EigenSubspace::mean_only(Vec::new()));
            continue;
        }
        let samples = SampleMatrix::from_columns(&cols)?;
        let s = subspace::fit_rank(&samples, rank).map_err(|e| match e {
            Error::Parameter(m) => Error::Parameter(format!("part {l}: {m}")),
            e => e,
        })?;
        subspaces.push(s);
    }
    DeformModel::from_parts(part_vertices.to_vec(), subspaces)
}

/// `v_lk = v′_lk + H_l⁻¹ q̃_lk` with `q̃` decoded from `coeffs`.
pub fn apply_displacements(m_prime: &Mesh, coeffs: &[Vec<f64>], model: &DeformModel, frames: &[RigidTransform]) -> Result<Mesh> {
    let field = model.decode(coeffs)?;
    apply_field(m_prime, &field, model.part_vertices(), frames)
}

/// Adds a local-frame displacement field back onto `M′`.
pub fn apply_field(m_prime: &Mesh, field: &DisplacementField, part_vertices: &[Vec<usize>], frames: &[RigidTransform]) -> Result<Mesh> {
    if frames.len() < part_vertices.len() || field.parts.len() != part_vertices.len() {
        return Err(Error::param("frame, field and part counts disagree"));
    }
    let mut verts = m_prime.vertices().to_vec();
    for ((idx, q), h) in part_vertices.iter().zip(&field.parts).zip(frames) {
        if q.len() != 3 * idx.len() {
            return Err(Error::param("field length does not match part size"));
        }
        let back = h.rotation.transpose();
        for (k, &i) in idx.iter().enumerate() {
            if i >= verts.len() {
                return Err(Error::param(format!("vertex {i} out of range")));
            }
            verts[i] += back * Vec3::new(q[3 * k], q[3 * k + 1], q[3 * k + 2]);
        }
    }
    m_prime.with_vertices(verts)
}

/// Root-mean-square per-vertex distance between two meshes of equal size.
pub fn vertex_rmse(a: &Mesh, b: &Mesh) -> f64 {
    let (va, vb) = (a.vertices(), b.vertices());
    assert_eq!(va.len(), vb.len(), "vertex_rmse on meshes of different size");
    if va.is_empty() {
        return 0.0;
    }
    (va.iter().zip(vb).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / va.len() as f64).sqrt()
}

/// Per-part RMSE (parts without vertices report 0).
pub fn part_rmse(a: &Mesh, b: &Mesh, part_vertices: &[Vec<usize>]) -> Vec<f64> {
    let (va, vb) = (a.vertices(), b.vertices());
    part_vertices
        .iter()
        .map(|idx| {
            if idx.is_empty() {
                0.0
            } else {
                (idx.iter().map(|&i| (va[i] - vb[i]).norm_squared()).sum::<f64>() / idx.len() as f64).sqrt()
            }
        })
        .collect()
}
