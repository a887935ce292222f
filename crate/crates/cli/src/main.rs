use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array1;

use briot_core::bcd::{solve_iot, BcdConfig, CBlockMode};
use briot_core::experiments::{
    exp_lambda_sweep, exp_matching, exp_random_marginals, exp_stability, gen_synthetic_matching,
    log_grid, read_matching_dataset, write_matching_dataset, LambdaSweepConfig, MatchingConfig,
    RandomMarginalsConfig, RecoverySet, StabilityConfig, SyntheticMatchingConfig,
};
use briot_core::forward::{solve_forward, SolverConfig, TransportProblem};
use briot_core::inverse::{certify, CostSetId};
use briot_core::io::{read_matrix, read_vector, write_matrix, write_report};
use briot_core::sets::ConstraintSet;
use briot_core::Generator;

#[derive(Parser)]
#[command(
    name = "briot",
    about = "Bregman-regularized optimal transport: forward solves, closed-form and BCD inversion, and experiment drivers",
    version
)]
struct Cli {
    /// Master seed for anything randomized.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for experiment trials (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem min <C,X> + gamma*phi(X) over U(mu, nu).
    Forward(ForwardArgs),
    /// Closed-form inverse G(X) with membership certificate and round trip.
    InvertClosedForm(InvertClosedFormArgs),
    /// BCD inversion of an observed plan over a constraint set.
    InvertBcd(InvertBcdArgs),
    /// Random-marginal recovery experiment (cost + plan errors).
    ExpRandom(ExpRandomArgs),
    /// Stability-bound verification over a gamma grid.
    ExpStability(ExpStabilityArgs),
    /// Recovery error as a function of the penalty lambda.
    ExpLambda(ExpLambdaArgs),
    /// Cross-validated matching pipeline with the affine cost set.
    ExpMatching(ExpMatchingArgs),
    /// Write a synthetic planted-interaction matching dataset.
    GenSyntheticMatching(GenSyntheticArgs),
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    cost: PathBuf,
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    #[arg(long, default_value = "entropy")]
    gen: String,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
    /// Output plan CSV.
    #[arg(long)]
    out_plan: PathBuf,
    /// Optional JSON solve report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InvertClosedFormArgs {
    #[arg(long)]
    xhat: PathBuf,
    #[arg(long, default_value = "entropy")]
    gen: String,
    #[arg(long)]
    gamma: f64,
    /// Cost set: sh | shw:<w.csv> | mc | ed | free.
    #[arg(long, default_value = "sh")]
    set: String,
    /// Output cost CSV.
    #[arg(long)]
    out_cost: PathBuf,
    /// Optional JSON certificate.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InvertBcdArgs {
    #[arg(long)]
    xhat: PathBuf,
    #[arg(long, default_value = "entropy")]
    gen: String,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    lambda: f64,
    /// Constraint set: sh | shw:<w.csv> | ed | affine:<U0.csv>,<V0.csv> | nonneg | free.
    #[arg(long, default_value = "sh")]
    set: String,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// C-block mode: newton | pg.
    #[arg(long, default_value = "newton")]
    c_mode: String,
    /// Output cost CSV.
    #[arg(long)]
    out_cost: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExpRandomArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value = "entropy")]
    gen: String,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-8)]
    lambda: f64,
    /// sh | ed.
    #[arg(long, default_value = "sh")]
    set: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExpStabilityArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value = "entropy")]
    gen: String,
    #[arg(long, default_value_t = 0.01)]
    gamma_min: f64,
    #[arg(long, default_value_t = 10.0)]
    gamma_max: f64,
    #[arg(long, default_value_t = 20)]
    gamma_count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExpLambdaArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value = "entropy")]
    gen: String,
    #[arg(long, default_value_t = 1e-12)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1e-2)]
    lambda_max: f64,
    #[arg(long, default_value_t = 25)]
    lambda_count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExpMatchingArgs {
    /// Directory holding types_men.csv, types_women.csv, matching.csv.
    #[arg(long)]
    data_dir: PathBuf,
    /// Optional raw-individual path: cluster these instead of typed input.
    #[arg(long)]
    individuals: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    k_cluster: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Output directory for the dataset CSVs.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 11)]
    feature_dim: usize,
    #[arg(long, default_value_t = 50)]
    types: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Also write the planted ground-truth cost here.
    #[arg(long)]
    out_cost: Option<PathBuf>,
}

fn parse_constraint_set(spec: &str, base: &Path) -> Result<ConstraintSet> {
    let resolve = |p: &str| -> PathBuf {
        let pb = PathBuf::from(p);
        if pb.is_absolute() {
            pb
        } else {
            base.join(pb)
        }
    };
    Ok(match spec {
        "sh" => ConstraintSet::Sh,
        "ed" => ConstraintSet::Ed,
        "nonneg" => ConstraintSet::NonnegativeAll,
        "free" => ConstraintSet::WholeSpace,
        "mc" => ConstraintSet::Mc,
        other => {
            if let Some(rest) = other.strip_prefix("shw:") {
                // Either a CSV path or an inline comma-separated list.
                let w: Array1<f64> = if rest.ends_with(".csv") {
                    read_vector(&resolve(rest))?
                } else {
                    let vals: Vec<f64> = rest
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .context("parsing shw weights")?;
                    Array1::from_vec(vals)
                };
                ConstraintSet::shw(w)?
            } else if let Some(rest) = other.strip_prefix("affine:") {
                let (u_path, v_path) = rest
                    .split_once(',')
                    .context("affine set needs `affine:<U0.csv>,<V0.csv>`")?;
                ConstraintSet::affine(read_matrix(&resolve(u_path))?, read_matrix(&resolve(v_path))?)?
            } else {
                bail!("unknown set spec `{other}`");
            }
        }
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("building thread pool")?;
    }
    let cwd = std::env::current_dir()?;

    match cli.command {
        Command::Forward(a) => {
            let gen = Generator::parse_id(&a.gen)?;
            let prob = TransportProblem::new(
                read_matrix(&a.cost)?,
                read_vector(&a.mu)?,
                read_vector(&a.nu)?,
                a.gamma,
                gen,
            )?;
            let cfg = SolverConfig { tol: a.tol, max_sweeps: a.max_sweeps };
            let sol = solve_forward(&prob, &cfg)?;
            write_matrix(&a.out_plan, &sol.plan)?;
            eprintln!(
                "forward: {} sweeps, residual {:.3e}, {:.3}s",
                sol.report.iterations, sol.report.final_residual, sol.report.wall_time_s
            );
            if let Some(out) = a.out {
                write_report(&out, &sol.report)?;
            }
        }
        Command::InvertClosedForm(a) => {
            let gen = Generator::parse_id(&a.gen)?;
            let xhat = read_matrix(&a.xhat)?;
            let set_id = match a.set.as_str() {
                "sh" => CostSetId::Sh,
                "mc" => CostSetId::Mc,
                "ed" => CostSetId::Ed,
                "free" => CostSetId::WholeSpace,
                other => {
                    if let Some(rest) = other.strip_prefix("shw:") {
                        let w = read_vector(&cwd.join(rest))?;
                        CostSetId::Shw { w: w.to_vec() }
                    } else {
                        bail!("unknown cost set `{other}` for closed-form inversion");
                    }
                }
            };
            let cert = certify(gen, &xhat, a.gamma, set_id)?;
            write_matrix(&a.out_cost, &cert.cost)?;
            eprintln!(
                "closed-form inverse: membership_ok = {}, roundtrip residual = {:.3e}",
                cert.membership_ok, cert.roundtrip_residual
            );
            if let Some(out) = a.out {
                write_report(
                    &out,
                    &serde_json::json!({
                        "set": serde_json::to_value(&cert.set_id)?,
                        "membership_ok": cert.membership_ok,
                        "roundtrip_residual": cert.roundtrip_residual,
                    }),
                )?;
            }
        }
        Command::InvertBcd(a) => {
            let gen = Generator::parse_id(&a.gen)?;
            let xhat = read_matrix(&a.xhat)?;
            let n = xhat.nrows();
            let mu = Array1::from_shape_fn(n, |i| xhat.row(i).sum());
            let nu = Array1::from_shape_fn(n, |j| xhat.column(j).sum());
            let set = parse_constraint_set(&a.set, &cwd)?;
            let mode = match a.c_mode.as_str() {
                "newton" => CBlockMode::Newton,
                "pg" => CBlockMode::ProjectedGradient,
                other => bail!("unknown c-mode `{other}` (newton|pg)"),
            };
            let cfg = BcdConfig {
                max_iters: a.max_iter,
                kkt_tol: a.tol,
                c_block_mode: mode,
                ..BcdConfig::default()
            };
            let sol = solve_iot(&xhat, &mu, &nu, a.gamma, a.lambda, set, gen, &cfg)?;
            if let Some(out_cost) = a.out_cost {
                write_matrix(&out_cost, &sol.cost)?;
            }
            write_report(&a.out, &sol.report)?;
            eprintln!(
                "invert-bcd: {} iterations, relative KKT {:.3e}, {:.3}s",
                sol.report.iterations, sol.report.final_residual, sol.report.wall_time_s
            );
        }
        Command::ExpRandom(a) => {
            let gen = Generator::parse_id(&a.gen)?;
            let set = match a.set.as_str() {
                "sh" => RecoverySet::Sh,
                "ed" => RecoverySet::Ed,
                other => bail!("exp-random set must be sh or ed, got `{other}`"),
            };
            let mut cfg = RandomMarginalsConfig::new(a.n, a.trials, gen, set, cli.seed);
            cfg.gamma = a.gamma;
            cfg.lambda = a.lambda;
            let report = exp_random_marginals(&cfg);
            eprintln!(
                "exp-random: C err {:.4}, X err {:.4e}, t {:.4}s ({} failed)",
                report.mean_c_err, report.mean_x_err, report.mean_time_s, report.failed_trials
            );
            write_report(&a.out, &report)?;
        }
        Command::ExpStability(a) => {
            let gen = Generator::parse_id(&a.gen)?;
            let mut cfg = StabilityConfig::new(gen, cli.seed);
            cfg.n = a.n;
            cfg.trials_per_gamma = a.trials;
            cfg.gamma_grid = log_grid(a.gamma_min, a.gamma_max, a.gamma_count);
            let report = exp_stability(&cfg);
            eprintln!(
                "exp-stability: pass rate {:.4}, ratio-vs-gamma Spearman {:.3}",
                report.overall_pass_rate, report.ratio_gamma_spearman
            );
            write_report(&a.out, &report)?;
        }
        Command::ExpLambda(a) => {
            let gen = Generator::parse_id(&a.gen)?;
            let mut cfg = LambdaSweepConfig::new(cli.seed);
            cfg.n = a.n;
            cfg.gamma = a.gamma;
            cfg.generator = gen.id();
            cfg.lambdas = log_grid(a.lambda_min, a.lambda_max, a.lambda_count);
            let report = exp_lambda_sweep(&cfg)?;
            for p in &report.points {
                eprintln!(
                    "lambda {:.3e}: C err {:.6e}, X err {:.6e}",
                    p.lambda, p.c_err, p.x_err
                );
            }
            write_report(&a.out, &report)?;
        }
        Command::ExpMatching(a) => {
            let ds = match (&a.individuals, &a.pairs) {
                (Some(ind), Some(pairs)) => briot_core::experiments::cluster_individuals(
                    &read_matrix(ind)?,
                    &read_matrix(pairs)?,
                    a.k_cluster,
                    cli.seed,
                )?,
                (None, None) => read_matching_dataset(&a.data_dir)?,
                _ => bail!("--individuals and --pairs must be given together"),
            };
            let cfg = MatchingConfig {
                folds: a.folds,
                gamma: a.gamma,
                lambda: a.lambda,
                max_iters: a.max_iter,
                seed: cli.seed,
                ..MatchingConfig::default()
            };
            let report = exp_matching(&ds, &cfg)?;
            eprintln!(
                "exp-matching: RMSE {:.6e} (random {:.6e}), MAE {:.6e} (random {:.6e})",
                report.mean_rmse, report.mean_random_rmse, report.mean_mae, report.mean_random_mae
            );
            write_report(&a.out, &report)?;
        }
        Command::GenSyntheticMatching(a) => {
            let cfg = SyntheticMatchingConfig {
                feature_dim: a.feature_dim,
                n_types: a.types,
                noise: a.noise,
                seed: cli.seed,
                ..SyntheticMatchingConfig::default()
            };
            let (ds, cost) = gen_synthetic_matching(&cfg)?;
            write_matching_dataset(&a.dir, &ds)?;
            if let Some(out_cost) = a.out_cost {
                write_matrix(&out_cost, &cost)?;
            }
            eprintln!(
                "wrote synthetic dataset ({} types, {} features) to {}",
                a.types,
                a.feature_dim,
                a.dir.display()
            );
        }
    }
    Ok(())
}
