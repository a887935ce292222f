//! Shared oracles for the integration and acceptance suites. Everything in
//! here is deliberately independent of the library's solver paths: the
//! Sinkhorn oracle scales kernels in the linear domain, the grid minimizer
//! brute-forces the one-parameter n=2 polytope, and the finite-difference
//! helper only evaluates objectives.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Classic Sinkhorn: kernel K = exp(−C/γ), alternate a = μ./(Kb), b = ν./(Kᵀa).
/// Returns diag(a)·K·diag(b).
pub fn sinkhorn_oracle(
    c: &Array2<f64>,
    mu: &Array1<f64>,
    nu: &Array1<f64>,
    gamma: f64,
    tol: f64,
    max_iters: usize,
) -> Array2<f64> {
    let n = mu.len();
    let k = c.mapv(|x| (-x / gamma).exp());
    let mut a = Array1::<f64>::ones(n);
    let mut b = Array1::<f64>::ones(n);
    for _ in 0..max_iters {
        let kb = k.dot(&b);
        a = Array1::from_shape_fn(n, |i| mu[i] / kb[i]);
        let kta = k.t().dot(&a);
        b = Array1::from_shape_fn(n, |j| nu[j] / kta[j]);
        // residual on rows (columns are exact right after the b update)
        let plan = plan_from_scalings(&k, &a, &b);
        let mut res = 0.0_f64;
        for i in 0..n {
            res += (plan.row(i).sum() - mu[i]).abs();
        }
        if res <= tol {
            break;
        }
    }
    plan_from_scalings(&k, &a, &b)
}

fn plan_from_scalings(k: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn(k.dim(), |(i, j)| a[i] * k[[i, j]] * b[j])
}

/// The one-parameter transport polytope at n=2: X(t) = [[t, μ1−t],[ν1−t, 1−μ1−ν1+t]]
/// for t in [max(0, μ1+ν1−1), min(μ1, ν1)].
pub fn polytope_n2(mu1: f64, nu1: f64, t: f64) -> Array2<f64> {
    ndarray::arr2(&[[t, mu1 - t], [nu1 - t, 1.0 - mu1 - nu1 + t]])
}

/// Brute-force grid minimization of a scalar objective over the n=2 polytope.
/// Returns (t*, X(t*)).
pub fn grid_minimize_n2<F: Fn(&Array2<f64>) -> f64>(
    mu1: f64,
    nu1: f64,
    grid_step: f64,
    objective: F,
) -> (f64, Array2<f64>) {
    let lo = (mu1 + nu1 - 1.0).max(0.0);
    let hi = mu1.min(nu1);
    let steps = ((hi - lo) / grid_step).round() as usize;
    let mut best_t = lo;
    let mut best_val = f64::INFINITY;
    for k in 0..=steps {
        let t = lo + (hi - lo) * k as f64 / steps as f64;
        let x = polytope_n2(mu1, nu1, t);
        let v = objective(&x);
        if v < best_val {
            best_val = v;
            best_t = t;
        }
    }
    (best_t, polytope_n2(mu1, nu1, best_t))
}

/// Central-difference gradient of `f` at `point`.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: F, point: &[f64], h: f64) -> Vec<f64> {
    let mut grads = Vec::with_capacity(point.len());
    let mut work = point.to_vec();
    for i in 0..point.len() {
        work[i] = point[i] + h;
        let fp = f(&work);
        work[i] = point[i] - h;
        let fm = f(&work);
        work[i] = point[i];
        grads.push((fp - fm) / (2.0 * h));
    }
    grads
}

pub fn max_rel_err(exact: &[f64], approx: &[f64]) -> f64 {
    exact
        .iter()
        .zip(approx.iter())
        .map(|(e, a)| (e - a).abs() / (1.0 + e.abs()))
        .fold(0.0, f64::max)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_marginals(rng: &mut impl Rng, n: usize) -> Array1<f64> {
    let mut w = Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0));
    let s = w.sum();
    w /= s;
    w
}

pub fn random_cost(rng: &mut impl Rng, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0))
}

pub fn random_cost_sh(rng: &mut impl Rng, n: usize) -> Array2<f64> {
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

pub fn random_points_edm(rng: &mut impl Rng, n: usize, dim: usize) -> Array2<f64> {
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        (0..dim).map(|k| (pts[i][k] - pts[j][k]).powi(2)).sum()
    })
}

pub fn linf(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
