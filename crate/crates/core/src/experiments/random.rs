//! Random-marginal recovery experiment: sample a ground-truth cost, push it
//! through the forward map, recover it with BCD, and measure both cost and
//! plan relative errors.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, relative_error, sample_cost_ed, sample_cost_sh, sample_marginals};
use crate::bcd::{solve_iot, BcdConfig, CBlockMode};
use crate::error::Result;
use crate::forward::{solve, TransportProblem};
use crate::generator::Generator;
use crate::sets::ConstraintSet;

/// Which cost set the ground truth is drawn from (and the BCD projects onto).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoverySet {
    Sh,
    Ed,
}

impl RecoverySet {
    pub fn constraint_set(&self) -> ConstraintSet {
        match self {
            Self::Sh => ConstraintSet::Sh,
            Self::Ed => ConstraintSet::Ed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomMarginalsConfig {
    pub n: usize,
    pub trials: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub generator: String,
    pub set: RecoverySet,
    pub seed: u64,
    pub max_iters: usize,
    pub kkt_tol: f64,
}

impl RandomMarginalsConfig {
    pub fn new(n: usize, trials: usize, gen: Generator, set: RecoverySet, seed: u64) -> Self {
        Self {
            n,
            trials,
            gamma: 1.0,
            lambda: 1e-8,
            generator: gen.id(),
            set,
            seed,
            max_iters: 100,
            kkt_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub sub_seed: u64,
    pub c_err: f64,
    pub x_err: f64,
    pub bcd_time_s: f64,
    pub bcd_iterations: usize,
    pub bcd_converged: bool,
    /// Both emitted plans passed the target-set check at 1e-8.
    pub plans_in_target_set: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomMarginalsReport {
    pub experiment: String,
    pub version: String,
    pub config: RandomMarginalsConfig,
    pub trials: Vec<TrialRecord>,
    pub mean_c_err: f64,
    pub mean_x_err: f64,
    pub mean_time_s: f64,
    pub failed_trials: usize,
}

/// Run one trial from its sub-seed. Exposed so a single trial can be
/// replayed from the numbers in a report.
pub fn run_recovery_trial(cfg: &RandomMarginalsConfig, trial: usize) -> TrialRecord {
    let sub_seed = derive_seed(cfg.seed, trial as u64);
    match recovery_trial_inner(cfg, sub_seed) {
        Ok(mut rec) => {
            rec.trial = trial;
            rec
        }
        Err(e) => TrialRecord {
            trial,
            sub_seed,
            c_err: f64::NAN,
            x_err: f64::NAN,
            bcd_time_s: 0.0,
            bcd_iterations: 0,
            bcd_converged: false,
            plans_in_target_set: false,
            error: Some(e.to_string()),
        },
    }
}

fn recovery_trial_inner(cfg: &RandomMarginalsConfig, sub_seed: u64) -> Result<TrialRecord> {
    let gen = Generator::parse_id(&cfg.generator)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
    let mu = sample_marginals(&mut rng, cfg.n);
    let nu = sample_marginals(&mut rng, cfg.n);
    let c_true: Array2<f64> = match cfg.set {
        RecoverySet::Sh => sample_cost_sh(&mut rng, cfg.n),
        RecoverySet::Ed => sample_cost_ed(&mut rng, cfg.n),
    };
    let prob = TransportProblem::new(c_true.clone(), mu.clone(), nu.clone(), cfg.gamma, gen)?;
    let x = solve(&prob)?.plan;

    let bcd_cfg = BcdConfig {
        max_iters: cfg.max_iters,
        kkt_tol: cfg.kkt_tol,
        c_block_mode: CBlockMode::Newton,
        ..BcdConfig::default()
    };
    let sol = solve_iot(
        &x,
        &mu,
        &nu,
        cfg.gamma,
        cfg.lambda,
        cfg.set.constraint_set(),
        gen,
        &bcd_cfg,
    )?;

    let re_prob = TransportProblem::new(sol.cost.clone(), mu.clone(), nu.clone(), cfg.gamma, gen)?;
    let x_hat = solve(&re_prob)?.plan;

    let in_target = gen.target_set_contains(&x, &mu, &nu, 1e-8)?
        && gen.target_set_contains(&x_hat, &mu, &nu, 1e-8)?;

    Ok(TrialRecord {
        trial: 0,
        sub_seed,
        c_err: relative_error(&sol.cost, &c_true),
        x_err: relative_error(&x_hat, &x),
        bcd_time_s: sol.report.wall_time_s,
        bcd_iterations: sol.report.iterations,
        bcd_converged: sol.report.converged(),
        plans_in_target_set: in_target,
        error: None,
    })
}

pub fn exp_random_marginals(cfg: &RandomMarginalsConfig) -> RandomMarginalsReport {
    let trials: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_recovery_trial(cfg, t))
        .collect();
    let ok: Vec<&TrialRecord> = trials.iter().filter(|t| t.error.is_none()).collect();
    let mean = |f: fn(&TrialRecord) -> f64| -> f64 {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|t| f(t)).sum::<f64>() / ok.len() as f64
        }
    };
    RandomMarginalsReport {
        experiment: "random-marginals".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        failed_trials: cfg.trials - ok.len(),
        mean_c_err: mean(|t| t.c_err),
        mean_x_err: mean(|t| t.x_err),
        mean_time_s: mean(|t| t.bcd_time_s),
        trials,
    }
}
