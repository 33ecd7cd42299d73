//! Dense symmetric eigensolvers.
//!
//! Cyclic Jacobi is the workhorse. For large matrices where only a few
//! leading pairs are wanted, a Lanczos iteration with full
//! reorthogonalization reduces the problem to a small tridiagonal matrix that
//! is again solved with Jacobi.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Off-diagonal Frobenius norm at which Jacobi stops, relative to the
/// Frobenius norm of the input.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
const LANCZOS_TOLERANCE: f64 = 1e-13;
const LANCZOS_MIN_SIZE: usize = 64;
const LANCZOS_SEED: u64 = 0x6569_6765_6e00;

/// Eigenpairs sorted by descending eigenvalue; `vectors` holds one column per
/// value.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    fn truncated(mut self, k: usize) -> Self {
        self.values.truncate(k);
        self.vectors = self.vectors.columns(0, k).into_owned();
        self
    }
}

/// Full decomposition by cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> SymEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "jacobi_eigen needs a square matrix");
    // Row-major working copy, symmetrized.
    let mut m = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            m[r * n + c] = 0.5 * (a[(r, c)] + a[(c, r)]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if frob > 0.0 {
        for _sweep in 0..100 {
            let mut off = 0.0;
            for r in 0..n {
                for c in 0..n {
                    if r != c {
                        off += m[r * n + c] * m[r * n + c];
                    }
                }
            }
            if off.sqrt() <= JACOBI_TOLERANCE * frob {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[p * n + q];
                    if apq.abs() <= f64::MIN_POSITIVE * 16.0 {
                        continue;
                    }
                    let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = m[k * n + p];
                        let akq = m[k * n + q];
                        m[k * n + p] = c * akp - s * akq;
                        m[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = m[p * n + k];
                        let aqk = m[q * n + k];
                        m[p * n + k] = c * apk - s * aqk;
                        m[q * n + k] = s * apk + c * aqk;
                    }
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    SymEigen { values, vectors }
}

/// The `k` largest eigenpairs of a symmetric matrix.
pub fn top_eigen(a: &DMatrix<f64>, k: usize) -> SymEigen {
    let n = a.nrows();
    let k = k.min(n);
    if n <= LANCZOS_MIN_SIZE || 3 * k + 16 >= n {
        jacobi_eigen(a).truncated(k)
    } else {
        lanczos(a, k)
    }
}

fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let d = q.dot(w);
            w.axpy(-d, q, 1.0);
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    for _ in 0..8 {
        let mut w = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        orthogonalize(&mut w, basis);
        let norm = w.norm();
        if norm > 1e-8 {
            return Some(w / norm);
        }
    }
    None
}

fn lanczos(a: &DMatrix<f64>, k: usize) -> SymEigen {
    let n = a.nrows();
    let scale = a.norm();
    if scale == 0.0 {
        return SymEigen {
            values: vec![0.0; k],
            vectors: DMatrix::identity(n, k),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut q = random_unit(&mut rng, n, &basis).expect("non-empty space");
    loop {
        let mut w = a * &q;
        let alpha = q.dot(&w);
        basis.push(q);
        alphas.push(alpha);
        orthogonalize(&mut w, &basis);
        let beta = w.norm();
        let m = basis.len();
        let breakdown = beta <= 1e-12 * scale;
        if m == n || (m >= k && (m % 5 == 0 || breakdown)) {
            let t = DMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alphas[r]
                } else if r + 1 == c {
                    betas[r]
                } else if c + 1 == r {
                    betas[c]
                } else {
                    0.0
                }
            });
            let small = jacobi_eigen(&t);
            let converged = m == n || (0..k).all(|i| (beta * small.vectors[(m - 1, i)]).abs() <= LANCZOS_TOLERANCE * scale);
            if converged {
                let qmat = DMatrix::from_columns(&basis);
                let vectors = qmat * small.vectors.columns(0, k);
                return SymEigen {
                    values: small.values[..k].to_vec(),
                    vectors,
                };
            }
        }
        if breakdown {
            betas.push(0.0);
            match random_unit(&mut rng, n, &basis) {
                Some(next) => q = next,
                None => {
                    // Numerically exhausted: finish with what the Krylov basis spans.
                    let m = basis.len();
                    let t = DMatrix::from_fn(m, m, |r, c| {
                        if r == c {
                            alphas[r]
                        } else if r + 1 == c {
                            betas[r]
                        } else if c + 1 == r {
                            betas[c]
                        } else {
                            0.0
                        }
                    });
                    let small = jacobi_eigen(&t);
                    let kk = k.min(m);
                    let qmat = DMatrix::from_columns(&basis);
                    return SymEigen {
                        values: small.values[..kk].to_vec(),
                        vectors: qmat * small.vectors.columns(0, kk),
                    };
                }
            }
        } else {
            betas.push(beta);
            q = w / beta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &b + b.transpose()
    }

    fn check_pairs(a: &DMatrix<f64>, e: &SymEigen, tol: f64) {
        let scale = a.norm();
        for (i, &lambda) in e.values.iter().enumerate() {
            let v = e.vectors.column(i);
            let r = a * v - v * lambda;
            assert!(r.norm() <= tol * scale, "pair {i} residual {}", r.norm());
            assert!((v.norm() - 1.0).abs() < 1e-10);
        }
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn jacobi_diagonalizes() {
        for seed in 0..5 {
            let a = random_symmetric(17, seed);
            let e = jacobi_eigen(&a);
            check_pairs(&a, &e, 1e-11);
            let gram = e.vectors.transpose() * &e.vectors;
            assert!((gram - DMatrix::identity(17, 17)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn jacobi_matches_nalgebra_spectrum() {
        let a = random_symmetric(30, 9);
        let mut reference: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        let e = jacobi_eigen(&a);
        for (x, y) in e.values.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_finds_leading_pairs() {
        let n = 150;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Low-rank plus small full-rank part, like centered texture scatter.
        let b = DMatrix::from_fn(n, 6, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1e-2..1e-2));
        let a = &b * b.transpose() + &c * c.transpose();
        let e = top_eigen(&a, 10);
        assert_eq!(e.values.len(), 10);
        check_pairs(&a, &e, 1e-10);
        let full = jacobi_eigen(&a);
        for i in 0..10 {
            assert!((e.values[i] - full.values[i]).abs() < 1e-9 * full.values[0]);
        }
    }

    #[test]
    fn lanczos_handles_rank_deficiency() {
        let n = 120;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        let a = &b * b.transpose();
        let e = top_eigen(&a, 8);
        check_pairs(&a, &e, 1e-10);
        assert!(e.values[3..].iter().all(|x| x.abs() < 1e-10));
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(8, 8)).abs().max() < 1e-10);
    }

    #[test]
    fn zero_matrix() {
        let e = top_eigen(&DMatrix::zeros(100, 100), 4);
        assert!(e.values.iter().all(|&x| x == 0.0));
        let e = jacobi_eigen(&DMatrix::zeros(3, 3));
        assert_eq!(e.vectors, DMatrix::identity(3, 3));
    }
}
