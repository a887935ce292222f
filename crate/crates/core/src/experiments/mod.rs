//! Seeded, reproducible experiment drivers.
//!
//! Every experiment derives one sub-seed per trial from the master seed, so
//! identical (seed, config) pairs produce bit-identical reports (wall-time
//! fields aside) no matter how many threads run the trials, and any single
//! trial can be replayed from its recorded sub-seed.

mod lambda;
mod matching;
mod random;
mod stability;

pub use lambda::{exp_lambda_sweep, LambdaSweepConfig, LambdaSweepReport};
pub use matching::{
    cluster_individuals, exp_matching, fold_partition, gen_synthetic_matching, kmeans,
    read_matching_dataset, write_matching_dataset, MatchingConfig, MatchingDataset,
    MatchingReport, SyntheticMatchingConfig,
};
pub use random::{exp_random_marginals, RandomMarginalsConfig, RandomMarginalsReport, RecoverySet};
pub use stability::{exp_stability, StabilityConfig, StabilityReport};

use ndarray::{Array1, Array2};
use rand::Rng;

/// SplitMix64 step, used to derive independent per-trial sub-seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Marginals with entries i.i.d. uniform(0.1, 1), normalized. The floor keeps
/// Burg/beta forward solves away from degenerate rows.
pub fn sample_marginals(rng: &mut impl Rng, n: usize) -> Array1<f64> {
    let mut w = Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0));
    let s = w.sum();
    w /= s;
    w
}

/// Ground-truth cost in S_h: uniform(0,1) upper triangle, symmetrized,
/// zero diagonal.
pub fn sample_cost_sh(rng: &mut impl Rng, n: usize) -> Array2<f64> {
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(0.0..1.0);
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    c
}

/// Ground-truth squared-distance cost: n points uniform in [0,1]^3.
pub fn sample_cost_ed(rng: &mut impl Rng, n: usize) -> Array2<f64> {
    let pts: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ]
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        (0..3).map(|k| (pts[i][k] - pts[j][k]).powi(2)).sum()
    })
}

/// Spearman rank correlation (ordinal ranks; ties broken by position).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let mut r = vec![0.0; vals.len()];
        for (pos, &idx) in order.iter().enumerate() {
            r[idx] = pos as f64;
        }
        r
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..n {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx).powi(2);
        dy += (ry[i] - my).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        0.0
    } else {
        num / (dx * dy).sqrt()
    }
}

/// Log-spaced grid with exact endpoints.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == count - 1 {
                hi
            } else {
                (llo + (lhi - llo) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Relative Frobenius error with an absolute-error fallback when the
/// reference is (numerically) zero.
pub fn relative_error(estimate: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    let diff = crate::linalg::fro_norm(&(estimate - reference));
    let den = crate::linalg::fro_norm(reference);
    if den < 1e-12 {
        diff
    } else {
        diff / den
    }
}
