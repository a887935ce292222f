mod common;

use briot_core::bcd::{bcd_step, solve_iot, BcdConfig, CBlockMode, IotState};
use briot_core::forward::{solve, TransportProblem};
use briot_core::sets::ConstraintSet;
use briot_core::Generator;
use common::*;
use ndarray::{Array1, Array2};
use rand::Rng;

fn random_state(seed: u64, n: usize, gen: Generator, lambda: f64) -> IotState {
    let mut rng = seeded_rng(seed);
    let mu = random_marginals(&mut rng, n);
    let nu = random_marginals(&mut rng, n);
    let c = random_cost_sh(&mut rng, n);
    let x_hat = solve(&TransportProblem::new(c, mu, nu, 1.0, gen).unwrap()).unwrap().plan;
    IotState::new(
        Array1::from_shape_fn(n, |_| rng.random_range(-0.2..0.2)),
        Array1::from_shape_fn(n, |_| rng.random_range(-0.2..0.2)),
        random_cost_sh(&mut rng, n),
        x_hat,
        1.0,
        lambda,
        ConstraintSet::Sh,
        gen,
    )
    .unwrap()
}

#[test]
fn block_gradients_match_finite_differences() {
    for (seed, gen) in [
        (301, Generator::BoltzmannShannon),
        (302, Generator::FermiDirac),
        (303, Generator::Burg),
    ] {
        let n = 4;
        let state = random_state(seed, n, gen, 1e-3);
        // u block.
        let (gu, _) = state.grad_hess_u().unwrap();
        let fd_u = finite_diff_grad(
            |p| {
                let mut s = state.clone();
                s.u = Array1::from_vec(p.to_vec());
                s.objective_e_lambda().unwrap()
            },
            state.u.as_slice().unwrap(),
            1e-6,
        );
        assert!(max_rel_err(&gu.to_vec(), &fd_u) <= 1e-5, "{} u-block", gen.id());
        // v block.
        let (gv, _) = state.grad_hess_v().unwrap();
        let fd_v = finite_diff_grad(
            |p| {
                let mut s = state.clone();
                s.v = Array1::from_vec(p.to_vec());
                s.objective_e_lambda().unwrap()
            },
            state.v.as_slice().unwrap(),
            1e-6,
        );
        assert!(max_rel_err(&gv.to_vec(), &fd_v) <= 1e-5, "{} v-block", gen.id());
        // C block.
        let (gc, _) = state.grad_hess_c().unwrap();
        let flat: Vec<f64> = state.cost.iter().cloned().collect();
        let fd_c = finite_diff_grad(
            |p| {
                let mut s = state.clone();
                s.cost = Array2::from_shape_vec((n, n), p.to_vec()).unwrap();
                s.objective_e_lambda().unwrap()
            },
            &flat,
            1e-6,
        );
        let gc_flat: Vec<f64> = gc.iter().cloned().collect();
        assert!(max_rel_err(&gc_flat, &fd_c) <= 1e-5, "{} C-block", gen.id());
    }
}

#[test]
fn gradients_vanish_at_forward_optimum() {
    let mut rng = seeded_rng(304);
    let n = 5;
    let gen = Generator::BoltzmannShannon;
    let mu = random_marginals(&mut rng, n);
    let nu = random_marginals(&mut rng, n);
    let c = random_cost_sh(&mut rng, n);
    let fw = solve(&TransportProblem::new(c.clone(), mu, nu, 1.0, gen).unwrap()).unwrap();
    let state = IotState::new(
        fw.potentials.u,
        fw.potentials.v,
        c,
        fw.plan,
        1.0,
        0.0,
        ConstraintSet::WholeSpace,
        gen,
    )
    .unwrap();
    let (gu, _) = state.grad_hess_u().unwrap();
    let (gv, _) = state.grad_hess_v().unwrap();
    assert!(gu.iter().all(|g| g.abs() <= 1e-8));
    assert!(gv.iter().all(|g| g.abs() <= 1e-8));
}

#[test]
fn objective_decreases_every_cycle() {
    for mode in [CBlockMode::Newton, CBlockMode::ProjectedGradient] {
        let mut state = random_state(305, 5, Generator::BoltzmannShannon, 1e-4);
        let cfg = BcdConfig { c_block_mode: mode, ..BcdConfig::default() };
        let mut prev = state.objective_e_lambda().unwrap();
        for _ in 0..25 {
            let rec = bcd_step(&mut state, &cfg).unwrap();
            assert!(rec.e_after <= prev + 1e-12);
            prev = rec.e_after;
        }
    }
}

#[test]
fn sufficient_decrease_constant_in_pg_mode() {
    // Lemma bound with w1 = 0.99 * c1 * min(lambda, 1) is a theorem for the
    // projected-gradient C block.
    let lambda = 1e-2;
    let mut state = random_state(306, 5, Generator::BoltzmannShannon, lambda);
    let cfg = BcdConfig { c_block_mode: CBlockMode::ProjectedGradient, ..BcdConfig::default() };
    let w1 = 0.99 * cfg.armijo_c1 * lambda.min(1.0);
    for _ in 0..20 {
        let rec = bcd_step(&mut state, &cfg).unwrap();
        assert!(
            rec.e_before - rec.e_after + 1e-12 >= w1 * rec.delta_sq,
            "decrease {} vs bound {}",
            rec.e_before - rec.e_after,
            w1 * rec.delta_sq
        );
    }
}

#[test]
fn sufficient_decrease_newton_mode_weaker_constant() {
    let lambda = 1e-2;
    let mut state = random_state(307, 5, Generator::BoltzmannShannon, lambda);
    let cfg = BcdConfig::default();
    let w_newton = 0.99 * cfg.armijo_c1 * (0.5 * lambda);
    for _ in 0..20 {
        let rec = bcd_step(&mut state, &cfg).unwrap();
        assert!(rec.e_before - rec.e_after + 1e-12 >= w_newton * rec.delta_sq);
    }
}

#[test]
fn step_sizes_respect_the_floor() {
    let mut state = random_state(308, 6, Generator::BoltzmannShannon, 1e-4);
    let cfg = BcdConfig::default();
    let mut l_hat = 0.0_f64;
    for _ in 0..30 {
        let rec = bcd_step(&mut state, &cfg).unwrap();
        l_hat = l_hat.max(rec.hess_diag_max);
        let floor = (2.0 * cfg.armijo_beta * (1.0 - cfg.armijo_c1) / l_hat).min(1.0);
        for a in [rec.alpha_u, rec.alpha_v, rec.alpha_c] {
            assert!(a >= floor - 1e-12, "alpha {a} below floor {floor}");
        }
    }
}

#[test]
fn lambda_consistency_of_optimal_values() {
    // E*_lambda is nondecreasing in lambda and approaches E* from above.
    let mut rng = seeded_rng(309);
    let n = 4;
    let gen = Generator::BoltzmannShannon;
    let mu = random_marginals(&mut rng, n);
    let nu = random_marginals(&mut rng, n);
    let c = random_cost_sh(&mut rng, n);
    let x_hat = solve(&TransportProblem::new(c, mu.clone(), nu.clone(), 1.0, gen).unwrap())
        .unwrap()
        .plan;
    let cfg = BcdConfig { max_iters: 400, kkt_tol: 1e-10, ..BcdConfig::default() };
    let lambdas = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut values = Vec::new();
    for &l in &lambdas {
        let sol = solve_iot(&x_hat, &mu, &nu, 1.0, l, ConstraintSet::Sh, gen, &cfg).unwrap();
        let state = IotState::new(
            sol.u, sol.v, sol.cost, x_hat.clone(), 1.0, l, ConstraintSet::Sh, gen,
        )
        .unwrap();
        values.push(state.objective_e_lambda().unwrap());
    }
    for w in values.windows(2) {
        assert!(w[0] - w[1] >= -1e-10, "E*_lambda not monotone: {values:?}");
    }
    // Shrinking lambda by 10^4 moves the optimum by little once small.
    assert!((values[3] - values[4]).abs() <= 1e-3 * (1.0 + values[4].abs()));
}

#[test]
fn q_linear_tail_and_convergence() {
    let mut ratios = Vec::new();
    for seed in 310..313u64 {
        let mut rng = seeded_rng(seed);
        let n = 6;
        let gen = Generator::BoltzmannShannon;
        let mu = random_marginals(&mut rng, n);
        let nu = random_marginals(&mut rng, n);
        let c = random_cost_sh(&mut rng, n);
        let x_hat = solve(&TransportProblem::new(c, mu.clone(), nu.clone(), 1.0, gen).unwrap())
            .unwrap()
            .plan;
        let cfg = BcdConfig { max_iters: 100, kkt_tol: 1e-6, ..BcdConfig::default() };
        let sol =
            solve_iot(&x_hat, &mu, &nu, 1.0, 1e-4, ConstraintSet::Sh, gen, &cfg).unwrap();
        assert!(sol.report.converged());
        assert!(sol.report.runtime_checks_ok);
        let rho = sol.tail_ratio().expect("tail ratio defined for lambda > 0");
        assert!(rho < 1.0, "tail ratio {rho}");
        ratios.push(rho);
    }
}

#[test]
fn recovery_on_small_instance() {
    let mut rng = seeded_rng(314);
    let n = 6;
    let gen = Generator::BoltzmannShannon;
    let mu = random_marginals(&mut rng, n);
    let nu = random_marginals(&mut rng, n);
    let c_true = random_cost_sh(&mut rng, n);
    let x = solve(&TransportProblem::new(c_true.clone(), mu.clone(), nu.clone(), 1.0, gen).unwrap())
        .unwrap()
        .plan;
    let sol = solve_iot(
        &x,
        &mu,
        &nu,
        1.0,
        1e-8,
        ConstraintSet::Sh,
        gen,
        &BcdConfig::default(),
    )
    .unwrap();
    let rel = linf(&sol.cost, &c_true) / linf(&c_true, &Array2::zeros((n, n)));
    assert!(rel <= 0.05, "relative recovery gap {rel}");
}

#[test]
fn pg_mode_converges_too() {
    let mut rng = seeded_rng(315);
    let n = 5;
    let gen = Generator::BoltzmannShannon;
    let mu = random_marginals(&mut rng, n);
    let nu = random_marginals(&mut rng, n);
    let c_true = random_cost_sh(&mut rng, n);
    let x = solve(&TransportProblem::new(c_true.clone(), mu.clone(), nu.clone(), 1.0, gen).unwrap())
        .unwrap()
        .plan;
    let cfg = BcdConfig {
        c_block_mode: CBlockMode::ProjectedGradient,
        max_iters: 1500,
        ..BcdConfig::default()
    };
    let sol = solve_iot(&x, &mu, &nu, 1.0, 1e-8, ConstraintSet::Sh, gen, &cfg).unwrap();
    assert!(sol.report.final_residual <= 1e-4);
    let rel = linf(&sol.cost, &c_true) / linf(&c_true, &Array2::zeros((n, n)));
    assert!(rel <= 0.1, "pg relative recovery gap {rel}");
}

#[test]
fn affine_set_recovery() {
    // Cost parameterized by features: BCD over the affine set recovers a
    // cost whose forward plan matches the observation.
    let mut rng = seeded_rng(316);
    let d = 3;
    let n = 6;
    let gen = Generator::BoltzmannShannon;
    let u0 = Array2::from_shape_fn((d, n), |_| rng.random_range(-1.0..1.0) / (d as f64).sqrt());
    let v0 = Array2::from_shape_fn((d, n), |_| rng.random_range(-1.0..1.0) / (d as f64).sqrt());
    let a = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
    let c_true = -u0.t().dot(&a).dot(&v0);
    let mu = Array1::from_elem(n, 1.0 / n as f64);
    let x = solve(&TransportProblem::new(c_true, mu.clone(), mu.clone(), 1.0, gen).unwrap())
        .unwrap()
        .plan;
    let set = ConstraintSet::affine(u0, v0).unwrap();
    let sol = solve_iot(&x, &mu, &mu, 1.0, 0.0, set, gen, &BcdConfig::default()).unwrap();
    let x_back = solve(&TransportProblem::new(sol.cost, mu.clone(), mu, 1.0, gen).unwrap())
        .unwrap()
        .plan;
    assert!(linf(&x_back, &x) <= 1e-6, "plan gap {}", linf(&x_back, &x));
}
