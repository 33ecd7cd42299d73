//! PCA subspaces over sample columns, shared by the texture and deformation
//! codecs.
//!
//! For samples `P` (D×F, one column per frame) with mean `p̄` and centered
//! matrix `P̄`, the basis holds the leading eigenvectors of `P̄P̄ᵀ`. The
//! eigenproblem is solved on whichever of the F×F Gram matrix `P̄ᵀP̄` or the
//! D×D scatter matrix is smaller. Eigenvalues are those of `P̄P̄ᵀ` without
//! any `1/F` normalization.

pub mod eigen;

use nalgebra::{DMatrix, DVector};

use crate::binio::{Precision, Reader, Writer};
use crate::error::{Error, Result};

pub const SECTION_VERSION: u32 = 1;

/// Relative eigenvalue below which a Gram eigenvector is treated as spanning
/// no data direction.
const NULL_EIGENVALUE: f64 = 1e-12;

/// How many eigenvectors to keep for a sample matrix of size D×F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    /// Exactly this many; out of range is an error.
    Fixed(usize),
    /// `min(n, F − 1, D)`, possibly zero (mean only).
    AtMost(usize),
    /// `min(D, F)`.
    Full,
}

impl Rank {
    pub fn resolve(self, d: usize, f: usize) -> Result<usize> {
        match self {
            Rank::Fixed(l) if l >= 1 && l <= d.min(f) => Ok(l),
            Rank::Fixed(l) => Err(Error::param(format!("L = {l} outside 1..={}", d.min(f)))),
            Rank::AtMost(n) => Ok(n.min(f.saturating_sub(1)).min(d)),
            Rank::Full => Ok(d.min(f)),
        }
    }
}

/// Fits with a rank rule; a resolved rank of zero gives a mean-only subspace.
pub fn fit_rank(samples: &SampleMatrix, rank: Rank) -> Result<EigenSubspace> {
    let l = rank.resolve(samples.dim(), samples.frames())?;
    if l == 0 {
        let mut s = EigenSubspace::mean_only(samples.matrix().column_mean().iter().copied().collect());
        let mean = s.mean.clone();
        s.total_variance = samples.matrix().column_iter().map(|c| (c - &mean).norm_squared()).sum();
        return Ok(s);
    }
    fit(samples, l)
}

/// D×F sample matrix, one column per contributing frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(Error::param("sample matrix needs at least one row and one column"));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::param("sample matrix has non-finite entries"));
        }
        Ok(Self { data })
    }

    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let d = columns.first().map_or(0, |c| c.as_ref().len());
        if columns.iter().any(|c| c.as_ref().len() != d) {
            return Err(Error::param("sample columns differ in length"));
        }
        Self::new(DMatrix::from_fn(d, columns.len(), |r, c| columns[c].as_ref()[r]))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn column(&self, f: usize) -> Vec<f64> {
        self.data.column(f).iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSubspace {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    /// Sum of all eigenvalues of `P̄P̄ᵀ` (squared Frobenius norm of `P̄`).
    total_variance: f64,
}

impl EigenSubspace {
    /// A zero-dimensional subspace: every reconstruction is the mean.
    pub fn mean_only(mean: Vec<f64>) -> Self {
        let d = mean.len();
        Self {
            mean: DVector::from_vec(mean),
            basis: DMatrix::zeros(d, 0),
            eigenvalues: Vec::new(),
            total_variance: 0.0,
        }
    }

    /// Assembles a subspace from stored parts, checking shapes and ordering.
    pub fn from_parts(mean: Vec<f64>, basis: DMatrix<f64>, eigenvalues: Vec<f64>, total_variance: f64) -> Result<Self> {
        if basis.nrows() != mean.len() || basis.ncols() != eigenvalues.len() {
            return Err(Error::param(format!(
                "basis {}x{} does not match mean {} / eigenvalues {}",
                basis.nrows(),
                basis.ncols(),
                mean.len(),
                eigenvalues.len()
            )));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) || eigenvalues.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::param("eigenvalues must be non-negative and descending"));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            basis,
            eigenvalues,
            total_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Cumulative contribution ratio of the retained eigenvalues.
    pub fn contribution_ratio(&self) -> f64 {
        ratio(self.eigenvalues.iter().sum(), self.total_variance)
    }

    /// The nested subspace spanned by the first `l` eigenvectors.
    pub fn truncated(&self, l: usize) -> Result<Self> {
        if l > self.rank() {
            return Err(Error::param(format!("cannot truncate rank {} to {}", self.rank(), l)));
        }
        Ok(Self {
            mean: self.mean.clone(),
            basis: self.basis.columns(0, l).into_owned(),
            eigenvalues: self.eigenvalues[..l].to_vec(),
            total_variance: self.total_variance,
        })
    }

    /// `c = Eᵀ(p − p̄)`.
    pub fn embed(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.dim() {
            return Err(Error::param(format!("sample length {} != subspace dim {}", p.len(), self.dim())));
        }
        let centered = DVector::from_column_slice(p) - &self.mean;
        Ok(self.basis.tr_mul(&centered).iter().copied().collect())
    }

    /// `p = E c + p̄`.
    pub fn reconstruct(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.rank() {
            return Err(Error::param(format!("{} coefficients for rank {}", c.len(), self.rank())));
        }
        let p = &self.basis * DVector::from_column_slice(c) + &self.mean;
        Ok(p.iter().copied().collect())
    }

    /// Max deviation of `EᵀE` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let l = self.rank();
        if l == 0 {
            return 0.0;
        }
        (self.basis.tr_mul(&self.basis) - DMatrix::identity(l, l)).abs().max()
    }

    /// Copy with every stored float rounded to `precision`.
    pub fn quantized(&self, precision: Precision) -> Self {
        let q = |x: f64| precision.quantize(x);
        Self {
            mean: self.mean.map(q),
            basis: self.basis.map(q),
            eigenvalues: self.eigenvalues.iter().map(|&x| q(x)).collect(),
            total_variance: q(self.total_variance),
        }
    }

    /// Versioned little-endian section: version, float width, D, L, total
    /// variance, mean, eigenvalues, basis row-major.
    pub fn write_to(&self, w: &mut Writer, precision: Precision) {
        w.u32(SECTION_VERSION);
        w.u8(precision.tag());
        w.len_u64(self.dim());
        w.len_u64(self.rank());
        w.float(precision, self.total_variance);
        w.floats(precision, self.mean.iter().copied());
        w.floats(precision, self.eigenvalues.iter().copied());
        for r in 0..self.dim() {
            w.floats(precision, self.basis.row(r).iter().copied());
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
        let precision = Precision::from_tag(r.u8()?)?;
        let d = r.len_u64()?;
        let l = r.len_u64()?;
        let total_variance = r.float(precision)?;
        let mean = r.floats(precision, d)?;
        let eigenvalues = r.floats(precision, l)?;
        let flat = r.floats(precision, d * l)?;
        let basis = DMatrix::from_row_slice(d, l, &flat);
        Self::from_parts(mean, basis, eigenvalues, total_variance)
    }

    pub fn to_bytes(&self, precision: Precision) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_to(&mut w, precision);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "subspace");
        let s = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(s)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        1.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// `Σ_{i≤L} λᵢ / Σ_i λᵢ` over a full spectrum; `0/0` is 1.
pub fn cumulative_contribution(eigenvalues: &[f64], l: usize) -> f64 {
    let total: f64 = eigenvalues.iter().map(|x| x.max(0.0)).sum();
    let head: f64 = eigenvalues.iter().take(l).map(|x| x.max(0.0)).sum();
    ratio(head, total)
}

/// Largest-magnitude component positive (first index wins ties).
fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Gram-Schmidt of unit vectors against `columns` until `target` columns exist.
fn complete_basis(columns: &mut Vec<DVector<f64>>, d: usize, target: usize) {
    let mut axis = 0;
    while columns.len() < target && axis < d {
        let mut v = DVector::zeros(d);
        v[axis] = 1.0;
        axis += 1;
        for _ in 0..2 {
            for c in columns.iter() {
                let dot = c.dot(&v);
                v.axpy(-dot, c, 1.0);
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            columns.push(v / n);
        }
    }
}

/// Fits the leading `l` eigenpairs of `P̄P̄ᵀ`.
pub fn fit(samples: &SampleMatrix, l: usize) -> Result<EigenSubspace> {
    let (d, f) = (samples.dim(), samples.frames());
    if l == 0 || l > d.min(f) {
        return Err(Error::param(format!("L = {l} outside 1..={}", d.min(f))));
    }
    let data = samples.matrix();
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let total_variance = centered.norm_squared();

    let mut values = Vec::with_capacity(l);
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(l);
    if f <= d {
        let gram = centered.tr_mul(&centered);
        let eig = eigen::top_eigen(&gram, l);
        let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
        for (i, &mu) in eig.values.iter().enumerate() {
            let mu = mu.max(0.0);
            values.push(mu);
            if mu > NULL_EIGENVALUE * top && mu > 0.0 {
                let e = &centered * eig.vectors.column(i) / mu.sqrt();
                columns.push(e);
            }
        }
    } else {
        let scatter = &centered * centered.transpose();
        let eig = eigen::top_eigen(&scatter, l);
        for (i, &mu) in eig.values.iter().enumerate() {
            values.push(mu.max(0.0));
            columns.push(eig.vectors.column(i).into_owned());
        }
    }
    // Modified Gram-Schmidt keeps EᵀE = I to working precision.
    for i in 0..columns.len() {
        for j in 0..i {
            let dot = columns[j].dot(&columns[i]);
            let cj = columns[j].clone();
            columns[i].axpy(-dot, &cj, 1.0);
        }
        let n = columns[i].norm();
        columns[i] /= n;
    }
    complete_basis(&mut columns, d, l);
    for c in columns.iter_mut() {
        fix_sign(c);
    }
    for w in 1..values.len() {
        // Clamping can break ties in order only at zero; keep it monotone.
        if values[w] > values[w - 1] {
            values[w] = values[w - 1];
        }
    }
    let basis = DMatrix::from_columns(&columns);
    let subspace = EigenSubspace {
        mean,
        basis,
        eigenvalues: values,
        total_variance,
    };
    debug_assert!(subspace.orthonormality_error() < 1e-9);
    Ok(subspace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(d: usize, f: usize, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SampleMatrix::new(DMatrix::from_fn(d, f, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn two_point_example() {
        let s = SampleMatrix::from_columns(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let sub = fit(&s, 1).unwrap();
        assert_eq!(sub.mean().as_slice(), &[0.0, 0.0]);
        assert!((sub.basis()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(sub.basis()[(1, 0)].abs() < 1e-15);
        assert!((sub.eigenvalues()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn identical_columns_have_zero_spectrum() {
        let col = vec![0.3, -1.0, 2.0, 4.0];
        let s = SampleMatrix::from_columns(&[col.clone(), col.clone(), col.clone()]).unwrap();
        let sub = fit(&s, 3).unwrap();
        assert!(sub.eigenvalues().iter().all(|&x| x == 0.0));
        assert!(sub.orthonormality_error() < 1e-12);
        let c = sub.embed(&col).unwrap();
        assert_eq!(sub.reconstruct(&c).unwrap(), col);
        assert_eq!(sub.contribution_ratio(), 1.0);
        assert_eq!(cumulative_contribution(sub.eigenvalues(), 1), 1.0);
    }

    #[test]
    fn l_out_of_range() {
        let s = random_samples(5, 3, 1);
        assert!(fit(&s, 0).is_err());
        assert!(fit(&s, 4).is_err());
    }

    #[test]
    fn embed_and_reconstruct_examples() {
        let s = random_samples(6, 4, 2);
        let sub = fit(&s, 3).unwrap();
        let mean: Vec<f64> = sub.mean().iter().copied().collect();
        assert!(sub.embed(&mean).unwrap().iter().all(|x| x.abs() < 1e-15));
        let shifted: Vec<f64> = mean.iter().zip(sub.basis().column(0).iter()).map(|(m, e)| m + 3.0 * e).collect();
        let c = sub.embed(&shifted).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-12 && c[1].abs() < 1e-12 && c[2].abs() < 1e-12);
        assert_eq!(sub.reconstruct(&[0.0; 3]).unwrap(), mean);
        assert!(sub.embed(&[0.0; 5]).is_err());
        assert!(sub.reconstruct(&[0.0; 2]).is_err());
    }

    #[test]
    fn rank_three_data_has_full_contribution_at_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let modes = DMatrix::from_fn(40, 3, |_, _| rng.gen_range(-1.0..1.0));
        let coeffs = DMatrix::from_fn(3, 25, |_, _| rng.gen_range(-1.0..1.0));
        let s = SampleMatrix::new(modes * coeffs).unwrap();
        let sub = fit(&s, 10).unwrap();
        let ratio = cumulative_contribution(sub.eigenvalues(), 3);
        assert!((ratio - 1.0).abs() < 1e-12, "{ratio}");
        assert!((sub.truncated(3).unwrap().contribution_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn serialization_round_trips() {
        let sub = fit(&random_samples(7, 5, 4), 3).unwrap();
        let bytes = sub.to_bytes(Precision::F64);
        assert_eq!(EigenSubspace::from_bytes(&bytes).unwrap(), sub);
        let q = sub.quantized(Precision::F32);
        assert_eq!(EigenSubspace::from_bytes(&q.to_bytes(Precision::F32)).unwrap(), q);
        assert!(EigenSubspace::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn lanczos_path_matches_small_solver() {
        // D = 200 > F = 150 uses the 150×150 Gram with Lanczos for L = 10.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let modes = DMatrix::from_fn(200, 12, |_, _| rng.gen_range(-1.0..1.0));
        let coeffs = DMatrix::from_fn(12, 150, |r, _| rng.gen_range(-1.0..1.0) / (1.0 + r as f64));
        let noise = DMatrix::from_fn(200, 150, |_, _| rng.gen_range(-1e-3..1e-3));
        let s = SampleMatrix::new(modes * coeffs + noise).unwrap();
        let sub = fit(&s, 10).unwrap();
        let full = fit(&s, 150).unwrap();
        for i in 0..10 {
            assert!((sub.eigenvalues()[i] - full.eigenvalues()[i]).abs() < 1e-9 * full.eigenvalues()[0]);
            let dot = sub.basis().column(i).dot(&full.basis().column(i));
            assert!((dot - 1.0).abs() < 1e-8, "column {i}: {dot}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn error_is_non_increasing_in_l(d in 3usize..20, f in 2usize..12, seed in 0u64..1000) {
            let s = random_samples(d, f, seed);
            let full = fit(&s, d.min(f)).unwrap();
            let p = s.column(0);
            let mut last = f64::INFINITY;
            for l in 1..=full.rank() {
                let sub = full.truncated(l).unwrap();
                let r = sub.reconstruct(&sub.embed(&p).unwrap()).unwrap();
                let err: f64 = r.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
                prop_assert!(err <= last + 1e-12);
                last = err;
            }
            prop_assert!(last <= 1e-16 * p.iter().map(|x| x * x).sum::<f64>().max(1.0) * 1e4);
        }

        #[test]
        fn embeddings_are_centered(d in 2usize..15, f in 2usize..15, seed in 0u64..1000) {
            let s = random_samples(d, f, seed);
            let sub = fit(&s, d.min(f)).unwrap();
            let mut acc = vec![0.0; sub.rank()];
            for col in 0..f {
                for (a, c) in acc.iter_mut().zip(sub.embed(&s.column(col)).unwrap()) {
                    *a += c / f as f64;
                }
            }
            prop_assert!(acc.iter().all(|x| x.abs() < 1e-9));
            prop_assert!(sub.orthonormality_error() < 1e-9);
        }
    }
}
