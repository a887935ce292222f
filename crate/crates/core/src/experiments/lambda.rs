//! λ-sweep: on one fixed seeded instance, measure how the recovery error of
//! the cost and the re-solved plan degrade as the BCD penalty λ grows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, log_grid, relative_error, sample_cost_sh, sample_marginals};
use crate::bcd::{solve_iot, BcdConfig};
use crate::error::Result;
use crate::forward::{solve, TransportProblem};
use crate::generator::Generator;
use crate::sets::ConstraintSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSweepConfig {
    pub n: usize,
    pub gamma: f64,
    pub generator: String,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    pub max_iters: usize,
    pub kkt_tol: f64,
}

impl LambdaSweepConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n: 10,
            gamma: 0.1,
            generator: Generator::BoltzmannShannon.id(),
            lambdas: log_grid(1e-12, 1e-2, 25),
            seed,
            max_iters: 100,
            kkt_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub c_err: f64,
    pub x_err: f64,
    pub bcd_converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSweepReport {
    pub experiment: String,
    pub version: String,
    pub config: LambdaSweepConfig,
    pub instance_seed: u64,
    pub points: Vec<LambdaPoint>,
}

pub fn exp_lambda_sweep(cfg: &LambdaSweepConfig) -> Result<LambdaSweepReport> {
    let gen = Generator::parse_id(&cfg.generator)?;
    let instance_seed = derive_seed(cfg.seed, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
    let mu = sample_marginals(&mut rng, cfg.n);
    let nu = sample_marginals(&mut rng, cfg.n);
    let c_true = sample_cost_sh(&mut rng, cfg.n);
    let x = solve(&TransportProblem::new(
        c_true.clone(),
        mu.clone(),
        nu.clone(),
        cfg.gamma,
        gen,
    )?)?
    .plan;

    let bcd_cfg = BcdConfig { max_iters: cfg.max_iters, kkt_tol: cfg.kkt_tol, ..BcdConfig::default() };
    let points: Vec<LambdaPoint> = cfg
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let run = || -> Result<LambdaPoint> {
                let sol = solve_iot(
                    &x,
                    &mu,
                    &nu,
                    cfg.gamma,
                    lambda,
                    ConstraintSet::Sh,
                    gen,
                    &bcd_cfg,
                )?;
                let x_hat = solve(&TransportProblem::new(
                    sol.cost.clone(),
                    mu.clone(),
                    nu.clone(),
                    cfg.gamma,
                    gen,
                )?)?
                .plan;
                Ok(LambdaPoint {
                    lambda,
                    c_err: relative_error(&sol.cost, &c_true),
                    x_err: relative_error(&x_hat, &x),
                    bcd_converged: sol.report.converged(),
                    error: None,
                })
            };
            run().unwrap_or_else(|e| LambdaPoint {
                lambda,
                c_err: f64::NAN,
                x_err: f64::NAN,
                bcd_converged: false,
                error: Some(e.to_string()),
            })
        })
        .collect();

    Ok(LambdaSweepReport {
        experiment: "lambda-sweep".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        instance_seed,
        points,
    })
}
