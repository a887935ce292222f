//! Matching pipeline: learn a feature-interaction cost from an observed
//! matching matrix under the affine parameterization C = −U₀ᵀ A V₀, with
//! 5-fold cross-validation over the matrix cells, plus the synthetic
//! planted-interaction data generator and the k-means typing step for raw
//! individual-level data.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::bcd::{solve_iot, BcdConfig};
use crate::error::{Error, Result};
use crate::forward::{solve, TransportProblem};
use crate::generator::Generator;
use crate::io::{read_matrix, write_matrix};
use crate::sets::ConstraintSet;

/// Typed matching data: feature centroids for each side plus the observed
/// matching matrix (counts or probabilities; normalized before use).
#[derive(Debug, Clone)]
pub struct MatchingDataset {
    /// d × n_types.
    pub features_men: Array2<f64>,
    /// d × n_types.
    pub features_women: Array2<f64>,
    /// n_types × n_types, nonnegative.
    pub matching: Array2<f64>,
}

impl MatchingDataset {
    pub fn validate(&self) -> Result<()> {
        let (d, k) = self.features_men.dim();
        if self.features_women.dim() != (d, k) {
            return Err(Error::Data(format!(
                "feature shapes disagree: men {:?}, women {:?}",
                self.features_men.dim(),
                self.features_women.dim()
            )));
        }
        if self.matching.dim() != (k, k) {
            return Err(Error::Data(format!(
                "matching is {:?}, expected {k}x{k}",
                self.matching.dim()
            )));
        }
        if self.matching.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::Data("matching entries must be finite and nonnegative".into()));
        }
        for i in 0..k {
            if self.matching.row(i).sum() <= 0.0 {
                return Err(Error::Data(format!("matching row {i} has zero mass")));
            }
            if self.matching.column(i).sum() <= 0.0 {
                return Err(Error::Data(format!("matching column {i} has zero mass")));
            }
        }
        Ok(())
    }

    pub fn n_types(&self) -> usize {
        self.features_men.ncols()
    }
}

pub fn write_matching_dataset(dir: &Path, ds: &MatchingDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    write_matrix(&dir.join("types_men.csv"), &ds.features_men)?;
    write_matrix(&dir.join("types_women.csv"), &ds.features_women)?;
    write_matrix(&dir.join("matching.csv"), &ds.matching)
}

pub fn read_matching_dataset(dir: &Path) -> Result<MatchingDataset> {
    let ds = MatchingDataset {
        features_men: read_matrix(&dir.join("types_men.csv"))?,
        features_women: read_matrix(&dir.join("types_women.csv"))?,
        matching: read_matrix(&dir.join("matching.csv"))?,
    };
    ds.validate()?;
    Ok(ds)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticMatchingConfig {
    pub feature_dim: usize,
    pub n_types: usize,
    pub gamma: f64,
    /// Multiplicative log-normal noise scale on the matching matrix.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticMatchingConfig {
    fn default() -> Self {
        Self { feature_dim: 11, n_types: 50, gamma: 1.0, noise: 0.0, seed: 0 }
    }
}

/// Generate a synthetic dataset from a planted interaction matrix A:
/// C = −U₀ᵀ A V₀, matching = F(C) under entropy with uniform type masses.
/// Returns the dataset along with the planted cost.
pub fn gen_synthetic_matching(cfg: &SyntheticMatchingConfig) -> Result<(MatchingDataset, Array2<f64>)> {
    let d = cfg.feature_dim;
    let k = cfg.n_types;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x6d61_7463));
    let scale = 1.0 / (d as f64).sqrt();
    let normal = |r: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(r) };
    let u0 = Array2::from_shape_fn((d, k), |_| normal(&mut rng) * scale);
    let v0 = Array2::from_shape_fn((d, k), |_| normal(&mut rng) * scale);
    let a = Array2::from_shape_fn((d, d), |_| normal(&mut rng));
    let cost = -u0.t().dot(&a).dot(&v0);

    let uniform = Array1::from_elem(k, 1.0 / k as f64);
    let prob = TransportProblem::new(
        cost.clone(),
        uniform.clone(),
        uniform,
        cfg.gamma,
        Generator::BoltzmannShannon,
    )?;
    let mut matching = solve(&prob)?.plan;
    if cfg.noise > 0.0 {
        matching.mapv_inplace(|x| x * (cfg.noise * normal(&mut rng)).exp());
        let s = matching.sum();
        matching /= s;
    }
    Ok((MatchingDataset { features_men: u0, features_women: v0, matching }, cost))
}

/// Lloyd k-means with seeded k-means++ initialization. Assignment ties go to
/// the lowest centroid index; empty clusters keep their previous centroid.
/// Returns (centroids k×d, assignments).
pub fn kmeans(
    points: &Array2<f64>,
    k: usize,
    seed: u64,
    max_rounds: usize,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let (n, d) = points.dim();
    if k == 0 || k > n {
        return Err(Error::Config(format!("kmeans: k = {k} with {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist_sq = |p: usize, c: &[f64]| -> f64 {
        (0..d).map(|t| (points[[p, t]] - c[t]).powi(2)).sum()
    };

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centroids.push(points.row(first).to_vec());
    while centroids.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| dist_sq(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut draw = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (p, &w) in weights.iter().enumerate() {
                if draw < w {
                    chosen = p;
                    break;
                }
                draw -= w;
            }
            chosen
        };
        centroids.push(points.row(next).to_vec());
    }

    let mut assign = vec![0usize; n];
    for _ in 0..max_rounds {
        let mut changed = false;
        for (p, slot) in assign.iter_mut().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, cent) in centroids.iter().enumerate() {
                let dd = dist_sq(p, cent);
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }
        for (c, cent) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&p| assign[p] == c).collect();
            if members.is_empty() {
                continue;
            }
            for (t, slot) in cent.iter_mut().enumerate() {
                *slot = members.iter().map(|&p| points[[p, t]]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let cent = Array2::from_shape_fn((k, d), |(c, t)| centroids[c][t]);
    Ok((cent, assign))
}

/// Build a typed dataset from individual-level rows. `individuals` columns:
/// id, sex (0 = man, 1 = woman), then the feature columns. `pairs` columns:
/// man id, woman id.
pub fn cluster_individuals(
    individuals: &Array2<f64>,
    pairs: &Array2<f64>,
    k_cluster: usize,
    seed: u64,
) -> Result<MatchingDataset> {
    let (rows, cols) = individuals.dim();
    if cols < 3 {
        return Err(Error::Data(format!(
            "individuals needs id, sex and at least one feature column, got {cols} columns"
        )));
    }
    let d = cols - 2;
    let mut men_rows = Vec::new();
    let mut women_rows = Vec::new();
    for r in 0..rows {
        match individuals[[r, 1]] as i64 {
            0 => men_rows.push(r),
            1 => women_rows.push(r),
            s => {
                return Err(Error::Data(format!(
                    "individuals row {}: sex must be 0 or 1, got {s}",
                    r + 1
                )))
            }
        }
    }
    let extract = |idx: &[usize]| -> Array2<f64> {
        Array2::from_shape_fn((idx.len(), d), |(i, t)| individuals[[idx[i], t + 2]])
    };
    let men = extract(&men_rows);
    let women = extract(&women_rows);
    let (cent_m, assign_m) = kmeans(&men, k_cluster, derive_seed(seed, 1), 300)?;
    let (cent_w, assign_w) = kmeans(&women, k_cluster, derive_seed(seed, 2), 300)?;

    // Individual id -> cluster.
    let mut type_of = std::collections::HashMap::new();
    for (i, &r) in men_rows.iter().enumerate() {
        type_of.insert((individuals[[r, 0]] as i64, 0i64), assign_m[i]);
    }
    for (i, &r) in women_rows.iter().enumerate() {
        type_of.insert((individuals[[r, 0]] as i64, 1i64), assign_w[i]);
    }

    let mut matching = Array2::zeros((k_cluster, k_cluster));
    for p in 0..pairs.nrows() {
        let m = *type_of.get(&(pairs[[p, 0]] as i64, 0)).ok_or_else(|| {
            Error::Data(format!("pairs row {}: unknown man id {}", p + 1, pairs[[p, 0]]))
        })?;
        let w = *type_of.get(&(pairs[[p, 1]] as i64, 1)).ok_or_else(|| {
            Error::Data(format!("pairs row {}: unknown woman id {}", p + 1, pairs[[p, 1]]))
        })?;
        matching[[m, w]] += 1.0;
    }
    let ds = MatchingDataset {
        features_men: cent_m.t().to_owned(),
        features_women: cent_w.t().to_owned(),
        matching,
    };
    ds.validate()?;
    Ok(ds)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchingConfig {
    pub folds: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub kkt_tol: f64,
    pub seed: u64,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self { folds: 5, gamma: 1.0, lambda: 0.0, max_iters: 100, kkt_tol: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub rmse: f64,
    pub mae: f64,
    pub random_rmse: f64,
    pub random_mae: f64,
    pub bcd_converged: bool,
    pub bcd_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchingReport {
    pub experiment: String,
    pub version: String,
    pub config: MatchingConfig,
    pub n_types: usize,
    pub feature_dim: usize,
    /// How many fold assignments were re-drawn to avoid a zero marginal.
    pub fold_redraws: usize,
    pub folds: Vec<FoldRecord>,
    pub mean_rmse: f64,
    pub mean_mae: f64,
    pub mean_random_rmse: f64,
    pub mean_random_mae: f64,
}

/// Cell indices belonging to each fold, plus how many redraws were needed.
pub type FoldPartition = (Vec<Vec<(usize, usize)>>, usize);

/// Seeded partition of the k×k cells into `folds` chunks. The assignment is
/// fold(i,j) = (p(i) + q(j)) mod folds with seeded permutations p, q, so
/// every row and every column contributes cells to every fold (k ≥ folds).
/// Re-drawn (bounded) if some fold still leaves a zero train/test marginal,
/// which can happen with sparse count data.
pub fn fold_partition(matching: &Array2<f64>, folds: usize, seed: u64) -> Result<FoldPartition> {
    let k = matching.nrows();
    if folds < 2 || k < folds {
        return Err(Error::Config(format!(
            "fold partition needs 2 <= folds <= n_types, got folds={folds}, n_types={k}"
        )));
    }
    'redraw: for attempt in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xf01d + attempt));
        let perm = |r: &mut ChaCha8Rng| -> Vec<usize> {
            let mut v: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                let j = r.random_range(0..=i);
                v.swap(i, j);
            }
            v
        };
        let p = perm(&mut rng);
        let q = perm(&mut rng);
        let mut parts: Vec<Vec<(usize, usize)>> = vec![Vec::new(); folds];
        for i in 0..k {
            for j in 0..k {
                parts[(p[i] + q[j]) % folds].push((i, j));
            }
        }
        for part in &parts {
            let mut test = Array2::zeros((k, k));
            for &(i, j) in part {
                test[[i, j]] = matching[[i, j]];
            }
            let train = matching - &test;
            for i in 0..k {
                if test.row(i).sum() <= 0.0
                    || test.column(i).sum() <= 0.0
                    || train.row(i).sum() <= 0.0
                    || train.column(i).sum() <= 0.0
                {
                    continue 'redraw;
                }
            }
        }
        return Ok((parts, attempt as usize));
    }
    Err(Error::Data(
        "could not partition matching cells into folds with positive marginals".into(),
    ))
}

fn normalize(m: &Array2<f64>) -> Array2<f64> {
    let s = m.sum();
    m / s
}

fn metrics(pred: &Array2<f64>, truth: &Array2<f64>) -> (f64, f64) {
    let k2 = (pred.nrows() * pred.ncols()) as f64;
    let mut sq = 0.0;
    let mut ab = 0.0;
    for (p, t) in pred.iter().zip(truth.iter()) {
        sq += (p - t) * (p - t);
        ab += (p - t).abs();
    }
    ((sq / k2).sqrt(), ab / k2)
}

/// Cross-validated matching experiment with the affine cost set and the
/// product-plan Random baseline.
pub fn exp_matching(ds: &MatchingDataset, cfg: &MatchingConfig) -> Result<MatchingReport> {
    ds.validate()?;
    let k = ds.n_types();
    let (parts, fold_redraws) = fold_partition(&ds.matching, cfg.folds, cfg.seed)?;
    let set = ConstraintSet::affine(ds.features_men.clone(), ds.features_women.clone())?;
    let bcd_cfg = BcdConfig { max_iters: cfg.max_iters, kkt_tol: cfg.kkt_tol, ..BcdConfig::default() };

    let mut folds = Vec::with_capacity(cfg.folds);
    for (f, part) in parts.iter().enumerate() {
        let mut test_raw = Array2::zeros((k, k));
        for &(i, j) in part {
            test_raw[[i, j]] = ds.matching[[i, j]];
        }
        let train_raw = &ds.matching - &test_raw;
        let train = normalize(&train_raw);
        let test = normalize(&test_raw);
        let mu_train = Array1::from_shape_fn(k, |i| train.row(i).sum());
        let nu_train = Array1::from_shape_fn(k, |j| train.column(j).sum());
        let mu_test = Array1::from_shape_fn(k, |i| test.row(i).sum());
        let nu_test = Array1::from_shape_fn(k, |j| test.column(j).sum());

        let sol = solve_iot(
            &train,
            &mu_train,
            &nu_train,
            cfg.gamma,
            cfg.lambda,
            set.clone(),
            Generator::BoltzmannShannon,
            &bcd_cfg,
        )?;
        let pred = solve(&TransportProblem::new(
            sol.cost.clone(),
            mu_test.clone(),
            nu_test.clone(),
            cfg.gamma,
            Generator::BoltzmannShannon,
        )?)?
        .plan;
        let (rmse, mae) = metrics(&pred, &test);
        let random = Array2::from_shape_fn((k, k), |(i, j)| mu_test[i] * nu_test[j]);
        let (random_rmse, random_mae) = metrics(&random, &test);
        folds.push(FoldRecord {
            fold: f,
            rmse,
            mae,
            random_rmse,
            random_mae,
            bcd_converged: sol.report.converged(),
            bcd_iterations: sol.report.iterations,
        });
    }

    let mean = |f: fn(&FoldRecord) -> f64| folds.iter().map(f).sum::<f64>() / folds.len() as f64;
    Ok(MatchingReport {
        experiment: "matching".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        n_types: k,
        feature_dim: ds.features_men.nrows(),
        fold_redraws,
        mean_rmse: mean(|r| r.rmse),
        mean_mae: mean(|r| r.mae),
        mean_random_rmse: mean(|r| r.random_rmse),
        mean_random_mae: mean(|r| r.random_mae),
        folds,
    })
}
