// Fit an eigen-subspace to samples lying near a 3-dimensional affine
// subspace and show the contribution ratio and reconstruction error by rank.

use eigen_avatar::subspace::{fit_rank, Rank, SampleMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> eigen_avatar::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (dim, frames) = (200, 60);
    let dirs: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let columns: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let w: Vec<f64> = (0..3).map(|k| rng.gen_range(-1.0..1.0) * (3 - k) as f64).collect();
            (0..dim)
                .map(|i| 0.5 + (0..3).map(|k| w[k] * dirs[k][i]).sum::<f64>() + rng.gen_range(-0.01..0.01))
                .collect()
        })
        .collect();
    let samples = SampleMatrix::from_columns(&columns)?;
    let full = fit_rank(&samples, Rank::AtMost(10))?;
    for l in 1..=5 {
        let sub = full.truncated(l)?;
        let err: f64 = columns
            .iter()
            .map(|p| {
                let r = sub.reconstruct(&sub.embed(p).unwrap()).unwrap();
                r.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / (frames * dim) as f64;
        println!("L={l}: contribution {:.5}, RMSE {:.2e}", sub.contribution_ratio(), err.sqrt());
    }
    println!("orthonormality error {:.1e}", full.orthonormality_error());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("eigen_subspace");
}
