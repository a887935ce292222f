mod common;

use briot_core::forward::{
    dual_gradient, dual_objective, plan_from_potentials, solve, solve_forward, DualPotentials,
    SolverConfig, TransportProblem,
};
use briot_core::linalg::tensor_sum;
use briot_core::{Error, Generator};
use common::*;
use ndarray::{arr1, arr2, Array1, Array2};
use rand::Rng;

#[test]
fn matches_sinkhorn_oracle_on_random_instances() {
    let mut rng = seeded_rng(101);
    for (n, gamma) in [(5usize, 0.1), (10, 0.05), (20, 1.0)] {
        let mu = random_marginals(&mut rng, n);
        let nu = random_marginals(&mut rng, n);
        let c = random_cost(&mut rng, n);
        let prob =
            TransportProblem::new(c.clone(), mu.clone(), nu.clone(), gamma, Generator::BoltzmannShannon)
                .unwrap();
        let sol = solve_forward(&prob, &SolverConfig { tol: 1e-13, max_sweeps: 100_000 }).unwrap();
        let oracle = sinkhorn_oracle(&c, &mu, &nu, gamma, 1e-13, 100_000);
        assert!(
            linf(&sol.plan, &oracle) <= 1e-10,
            "n={n} gamma={gamma}: gap {}",
            linf(&sol.plan, &oracle)
        );
    }
}

#[test]
fn brute_force_grid_agrees_at_n2() {
    let mut rng = seeded_rng(102);
    for gen in [Generator::BoltzmannShannon, Generator::Quadratic, Generator::Burg] {
        for _ in 0..3 {
            let mu = random_marginals(&mut rng, 2);
            let nu = random_marginals(&mut rng, 2);
            let c = random_cost(&mut rng, 2);
            let gamma = 0.5;
            let prob = TransportProblem::new(c.clone(), mu.clone(), nu.clone(), gamma, gen).unwrap();
            let sol = solve(&prob).unwrap();
            let (_, x_grid) = grid_minimize_n2(mu[0], nu[0], 1e-5, |x| {
                // Entries on the polytope boundary can leave int(dom phi);
                // those are infeasible for generators with open domains.
                match gen.phi_matrix(x) {
                    Ok(p) => (&c * x).sum() + gamma * p,
                    Err(_) => f64::INFINITY,
                }
            });
            assert!(
                linf(&sol.plan, &x_grid) <= 2e-5,
                "{}: gap {}",
                gen.id(),
                linf(&sol.plan, &x_grid)
            );
        }
    }
}

#[test]
fn bregman_projection_equivalence() {
    // Solving min <C,X> + gamma*phi(X) equals projecting grad-psi(-C/gamma)
    // onto the polytope in Bregman geometry.
    let mut rng = seeded_rng(103);
    for gen in [Generator::BoltzmannShannon, Generator::Burg, Generator::FermiDirac] {
        let mu = random_marginals(&mut rng, 2);
        let nu = random_marginals(&mut rng, 2);
        let c = random_cost(&mut rng, 2);
        let gamma = 0.8;
        let y = c.mapv(|v| gen.psi_prime(-v / gamma).unwrap());
        let prob = TransportProblem::new(c, mu.clone(), nu.clone(), gamma, gen).unwrap();
        let sol = solve(&prob).unwrap();
        let (_, x_grid) =
            grid_minimize_n2(mu[0], nu[0], 1e-5, |x| gen.divergence(x, &y).unwrap_or(f64::INFINITY));
        assert!(linf(&sol.plan, &x_grid) <= 2e-5, "{}", gen.id());
    }
}

#[test]
fn shift_invariance_of_plans() {
    let mut rng = seeded_rng(104);
    for gen in [Generator::BoltzmannShannon, Generator::Burg] {
        let n = 4;
        let mu = random_marginals(&mut rng, n);
        let nu = random_marginals(&mut rng, n);
        let c = random_cost(&mut rng, n);
        let a = Array1::from_shape_fn(n, |_| rng.random_range(0.0..0.3));
        let b = Array1::from_shape_fn(n, |_| rng.random_range(0.0..0.3));
        let shifted = &c + &tensor_sum(&a, &b);
        let p1 = solve(&TransportProblem::new(c, mu.clone(), nu.clone(), 0.7, gen).unwrap())
            .unwrap()
            .plan;
        let p2 = solve(&TransportProblem::new(shifted, mu, nu, 0.7, gen).unwrap())
            .unwrap()
            .plan;
        assert!(linf(&p1, &p2) <= 1e-8, "{}: {}", gen.id(), linf(&p1, &p2));
    }
}

#[test]
fn duality_identity_for_entropy() {
    // B_phi(X_hat || X^C) = F((u+v-C)/gamma) + phi(X_hat), F(Z) = psi(Z) - <Z, X_hat>.
    let mut rng = seeded_rng(105);
    let gen = Generator::BoltzmannShannon;
    for _ in 0..5 {
        let n = 4;
        let mu = random_marginals(&mut rng, n);
        let nu = random_marginals(&mut rng, n);
        let c1 = random_cost(&mut rng, n);
        let c2 = random_cost(&mut rng, n);
        let x_hat = solve(&TransportProblem::new(c1, mu.clone(), nu.clone(), 0.5, gen).unwrap())
            .unwrap()
            .plan;
        let prob = TransportProblem::new(c2, mu, nu, 0.5, gen).unwrap();
        let sol = solve(&prob).unwrap();
        let lhs = gen.divergence(&x_hat, &sol.plan).unwrap();
        let rhs = dual_objective(&prob, &sol.potentials, &x_hat).unwrap()
            + gen.phi_matrix(&x_hat).unwrap();
        assert!((lhs - rhs).abs() <= 1e-8, "identity gap {}", (lhs - rhs).abs());
    }
}

#[test]
fn dual_gradient_matches_finite_differences() {
    let mut rng = seeded_rng(106);
    for gen in [Generator::BoltzmannShannon, Generator::FermiDirac] {
        for gamma in [0.5, 2.0] {
            let n = 3;
            let mu = random_marginals(&mut rng, n);
            let nu = random_marginals(&mut rng, n);
            let c = random_cost(&mut rng, n);
            let prob = TransportProblem::new(c, mu.clone(), nu.clone(), gamma, gen).unwrap();
            let u0 = Array1::from_shape_fn(n, |_| rng.random_range(-0.3..0.3));
            let v0 = Array1::from_shape_fn(n, |_| rng.random_range(-0.3..0.3));
            let target = Array2::from_shape_fn((n, n), |(i, j)| mu[i] * nu[j]);
            let point: Vec<f64> = u0.iter().chain(v0.iter()).cloned().collect();
            let fd = finite_diff_grad(
                |p| {
                    let pots = DualPotentials {
                        u: Array1::from_vec(p[..n].to_vec()),
                        v: Array1::from_vec(p[n..].to_vec()),
                    };
                    dual_objective(&prob, &pots, &target).unwrap()
                },
                &point,
                1e-6,
            );
            let (gu, gv) = dual_gradient(&prob, &DualPotentials { u: u0, v: v0 }).unwrap();
            let exact: Vec<f64> = gu.iter().chain(gv.iter()).cloned().collect();
            let err = max_rel_err(&exact, &fd);
            assert!(err <= 1e-5, "{} gamma={gamma}: rel err {err}", gen.id());
        }
    }
}

#[test]
fn quadratic_plan_invariance_at_zero_entries() {
    // Prop 4.8: increasing the cost at a zero entry leaves the plan fixed.
    let c = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
    let mu = arr1(&[0.2, 0.8]);
    let nu = arr1(&[0.5, 0.5]);
    let base = solve(
        &TransportProblem::new(c.clone(), mu.clone(), nu.clone(), 1.0, Generator::Quadratic).unwrap(),
    )
    .unwrap()
    .plan;
    assert_eq!(base[[0, 1]], 0.0);
    for lambda in [0.1, 1.0] {
        let mut bumped = c.clone();
        bumped[[0, 1]] += lambda;
        let plan = solve(
            &TransportProblem::new(bumped, mu.clone(), nu.clone(), 1.0, Generator::Quadratic)
                .unwrap(),
        )
        .unwrap()
        .plan;
        assert!(linf(&base, &plan) <= 1e-8);
    }
}

#[test]
fn quadratic_two_plan_counterexample() {
    // One shared cost, two marginal pairs, both stated plans optimal, and
    // their supports cover every entry.
    for gamma_entry in [0.0, 0.5, 1.0] {
        let c = arr2(&[[0.0, gamma_entry], [gamma_entry, 0.0]]);
        let mu1 = arr1(&[0.75, 0.25]);
        let nu1 = arr1(&[0.25, 0.75]);
        let x1 = solve(
            &TransportProblem::new(c.clone(), mu1.clone(), nu1.clone(), 1.0, Generator::Quadratic)
                .unwrap(),
        )
        .unwrap()
        .plan;
        let expect1 = arr2(&[[0.25, 0.5], [0.0, 0.25]]);
        assert!(linf(&x1, &expect1) <= 1e-9, "X1 at c={gamma_entry}: {x1:?}");

        let x2 = solve(
            &TransportProblem::new(c, nu1.clone(), mu1.clone(), 1.0, Generator::Quadratic).unwrap(),
        )
        .unwrap()
        .plan;
        let expect2 = arr2(&[[0.25, 0.0], [0.5, 0.25]]);
        assert!(linf(&x2, &expect2) <= 1e-9, "X2 at c={gamma_entry}: {x2:?}");
    }
}

#[test]
fn clamped_dual_equals_negative_primal_at_optimum() {
    // Strong duality for the clamped general form: at the solved potentials
    // the plan is feasible, so <u(+)v - C, X> collapses onto the marginals
    // and the dual value is exactly minus the primal objective.
    let mut rng = seeded_rng(108);
    for gen in [Generator::Quadratic, Generator::BoltzmannShannon] {
        let n = 4;
        let mu = random_marginals(&mut rng, n);
        let nu = random_marginals(&mut rng, n);
        let c = random_cost(&mut rng, n);
        let prob = TransportProblem::new(c, mu, nu, 0.7, gen).unwrap();
        let sol = solve(&prob).unwrap();
        let dual = briot_core::forward::dual_objective_clamped(&prob, &sol.potentials).unwrap();
        let primal = briot_core::forward::primal_objective(&prob, &sol.plan).unwrap();
        assert!(
            (dual + primal).abs() <= 1e-8 * (1.0 + primal.abs()),
            "{}: dual {dual} vs primal {primal}",
            gen.id()
        );
    }
}

#[test]
fn max_sweeps_error_carries_trace() {
    let mut rng = seeded_rng(107);
    let mu = random_marginals(&mut rng, 3);
    let nu = random_marginals(&mut rng, 3);
    let c = random_cost(&mut rng, 3);
    let prob = TransportProblem::new(c, mu, nu, 0.05, Generator::BoltzmannShannon).unwrap();
    match solve_forward(&prob, &SolverConfig { tol: 1e-15, max_sweeps: 2 }) {
        Err(Error::MaxIterations { trace, iterations, .. }) => {
            assert_eq!(iterations, 2);
            assert_eq!(trace.len(), 2);
        }
        other => panic!("expected MaxIterations, got {other:?}"),
    }
}

#[test]
fn burg_cost_cap_respected() {
    // dom psi for Burg is (-inf, 1): plan reconstruction stays feasible and
    // evaluating outside errors.
    let prob = TransportProblem::new(
        arr2(&[[0.0, 0.2], [0.2, 0.0]]),
        arr1(&[0.5, 0.5]),
        arr1(&[0.5, 0.5]),
        0.3,
        Generator::Burg,
    )
    .unwrap();
    let sol = solve(&prob).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let theta =
                (sol.potentials.u[i] + sol.potentials.v[j] - prob.cost[[i, j]]) / prob.gamma;
            assert!(theta < 1.0);
        }
    }
    let bad = DualPotentials { u: arr1(&[1.0, 1.0]), v: arr1(&[1.0, 1.0]) };
    assert!(matches!(plan_from_potentials(&prob, &bad), Err(Error::Domain(_))));
}
