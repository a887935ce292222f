//! Closed-form inverse maps and well-posedness certificates.
//!
//! For plans with positive entries and generators with φ′₀ = −∞, the
//! symmetric zero-diagonal cost recovering a plan X̂ is the closed form
//!
//!   G(X̂)_ij = (γ/2)(φ′(X̂_ii) + φ′(X̂_jj) − φ′(X̂_ij) − φ′(X̂_ji)),
//!
//! a bijection from S_h onto the set U_φ of admissible plans. The module
//! also provides the nonnegative-cost construction valid for every
//! generator, the full preimage hyperplane, membership tests for the
//! U_φ / U_φ^w / V_φ / W_φ plan sets, and the stability bound.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{solve, TransportProblem};
use crate::generator::Generator;
use crate::linalg::{centering_matrix, max_abs, sym_eigen, tensor_sum};

/// Plan sets characterizing the range of the restricted forward map.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanSet {
    /// G(X) ≥ 0 entrywise: range of S_h.
    UPhi,
    /// G(X)_ij + (w_i+w_j)/2 ≥ 0: range of S_h^w.
    UPhiW(Array1<f64>),
    /// Triple inequality: range of the triangle-inequality cone MC.
    VPhi,
    /// −G(X) ∈ K₊ⁿ: range of the squared-distance matrices ED.
    WPhi,
}

/// Which cost set a certificate refers to.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSetId {
    Sh,
    Shw { w: Vec<f64> },
    Mc,
    Ed,
    WholeSpace,
}

/// A recovered cost together with the evidence that the recovery is valid.
#[derive(Debug, Clone)]
pub struct InverseCertificate {
    pub cost: Array2<f64>,
    pub set_id: CostSetId,
    pub membership_ok: bool,
    pub roundtrip_residual: f64,
}

/// The closed-form inverse map G_φ^γ. Requires every entry of `x` in
/// int(dom φ); zeros under entropy are rejected.
pub fn g_map(gen: Generator, x: &Array2<f64>, gamma: f64) -> Result<Array2<f64>> {
    let (n, m) = x.dim();
    if n != m {
        return Err(Error::Dimension(format!("g_map expects square plan, got {n}x{m}")));
    }
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            d[[i, j]] = gen.phi_prime(x[[i, j]]).map_err(|e| {
                Error::Domain(format!("g_map entry ({i},{j}): {e}"))
            })?;
        }
    }
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            g[[i, j]] = 0.5 * gamma * (d[[i, i]] + d[[j, j]] - d[[i, j]] - d[[j, i]]);
        }
    }
    Ok(g)
}

/// Membership of a plan in one of the range sets. The ambient membership of
/// `x` in T_φ(μ,ν) is the caller's precondition.
pub fn set_membership(
    gen: Generator,
    x: &Array2<f64>,
    gamma: f64,
    set: &PlanSet,
    tol: f64,
) -> Result<bool> {
    let n = x.nrows();
    match set {
        PlanSet::UPhi => {
            let g = g_map(gen, x, gamma)?;
            Ok(g.iter().all(|&e| e >= -tol))
        }
        PlanSet::UPhiW(w) => {
            if w.len() != n {
                return Err(Error::Dimension("U_phi^w weight length".into()));
            }
            let g = g_map(gen, x, gamma)?;
            for i in 0..n {
                for j in 0..n {
                    if g[[i, j]] + 0.5 * (w[i] + w[j]) < -tol {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
        PlanSet::VPhi => {
            // 2φ′(X_kk) + φ′(X_ij) + φ′(X_ji) ≥ φ′(X_ik)+φ′(X_ki)+φ′(X_jk)+φ′(X_kj)
            let mut d = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    d[[i, j]] = gen.phi_prime(x[[i, j]])?;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let lhs = 2.0 * d[[k, k]] + d[[i, j]] + d[[j, i]];
                        let rhs = d[[i, k]] + d[[k, i]] + d[[j, k]] + d[[k, j]];
                        if lhs - rhs < -tol {
                            return Ok(false);
                        }
                    }
                }
            }
            Ok(true)
        }
        PlanSet::WPhi => {
            let g = g_map(gen, x, gamma)?;
            Ok(in_psd_cone_on_centered_subspace(&(-&g), tol))
        }
    }
}

/// Test A ∈ K₊ⁿ (PSD on the subspace orthogonal to 1) via the smallest
/// eigenvalue of JAJ, with tolerance scaled by the spectral radius.
pub(crate) fn in_psd_cone_on_centered_subspace(a: &Array2<f64>, tol: f64) -> bool {
    let n = a.nrows();
    let j = centering_matrix(n);
    let jaj = j.dot(a).dot(&j);
    let sym = (&jaj + &jaj.t()) * 0.5;
    let (vals, _) = sym_eigen(&sym);
    let radius = vals
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    vals[0] >= -tol * (1.0 + radius)
}

/// Nonnegative-cost construction: C_ij = K − γφ′(X̂_ij) on the support and
/// K − γφ′₀ off the support, with K the support maximum of γφ′(X̂_ij).
/// Forward-solving the result reproduces X̂.
pub fn construct_cost_nonneg(gen: Generator, x_hat: &Array2<f64>, gamma: f64) -> Result<Array2<f64>> {
    let (n, m) = x_hat.dim();
    if n != m {
        return Err(Error::Dimension("construct_cost_nonneg expects square plan".into()));
    }
    let (phi0, _) = gen.limiting_derivatives();
    let has_zero = x_hat.iter().any(|&e| e == 0.0);
    if has_zero && phi0 == f64::NEG_INFINITY {
        return Err(Error::UnsupportedCase(
            "plan has zero entries but phi'_0 = -inf: zeros lie outside the target set".into(),
        ));
    }
    let mut k = f64::NEG_INFINITY;
    let mut grad = Array2::from_elem((n, n), f64::NAN);
    for i in 0..n {
        for j in 0..n {
            let e = x_hat[[i, j]];
            if e > 0.0 {
                let d = gamma * gen.phi_prime(e)?;
                grad[[i, j]] = d;
                k = k.max(d);
            }
        }
    }
    if !k.is_finite() {
        return Err(Error::UnsupportedCase("plan has empty support".into()));
    }
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            c[[i, j]] = if x_hat[[i, j]] > 0.0 {
                k - grad[[i, j]]
            } else {
                k - gamma * phi0
            };
        }
    }
    Ok(c)
}

/// One representative of the preimage hyperplane
/// C_ij = γ(max_kl φ′(X̂_kl) − φ′(X̂_ij)) + a_i + b_j. Requires φ′₀ = −∞.
pub fn preimage_representative(
    gen: Generator,
    x_hat: &Array2<f64>,
    gamma: f64,
    a: &Array1<f64>,
    b: &Array1<f64>,
) -> Result<Array2<f64>> {
    let (phi0, _) = gen.limiting_derivatives();
    if phi0 != f64::NEG_INFINITY {
        return Err(Error::Generator(format!(
            "preimage hyperplane requires phi'_0 = -inf, but {} has phi'_0 = {phi0}",
            gen.id()
        )));
    }
    let (n, m) = x_hat.dim();
    if n != m || a.len() != n || b.len() != n {
        return Err(Error::Dimension("preimage_representative shapes".into()));
    }
    let mut grad = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            grad[[i, j]] = gen.phi_prime(x_hat[[i, j]])?;
        }
    }
    let k = grad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            c[[i, j]] = gamma * (k - grad[[i, j]]) + a[i] + b[j];
        }
    }
    Ok(c)
}

/// Right-hand side of the stability bound: 2γ‖φ′(X̂) − φ′(X̃)‖∞.
pub fn stability_rhs(
    gen: Generator,
    x_hat: &Array2<f64>,
    x_tilde: &Array2<f64>,
    gamma: f64,
) -> Result<f64> {
    if x_hat.dim() != x_tilde.dim() {
        return Err(Error::Dimension("stability_rhs shapes".into()));
    }
    let mut worst = 0.0_f64;
    for (a, b) in x_hat.iter().zip(x_tilde.iter()) {
        let d = (gen.phi_prime(*a)? - gen.phi_prime(*b)?).abs();
        worst = worst.max(d);
    }
    Ok(2.0 * gamma * worst)
}

/// Recover a cost for `x_hat` on the requested set, check the matching range
/// membership, and verify the round trip by a forward solve. Marginals are
/// taken from the plan's row and column sums.
pub fn certify(
    gen: Generator,
    x_hat: &Array2<f64>,
    gamma: f64,
    set_id: CostSetId,
) -> Result<InverseCertificate> {
    let n = x_hat.nrows();
    let (cost, membership_ok) = match &set_id {
        CostSetId::Sh => {
            let c = g_map(gen, x_hat, gamma)?;
            let ok = set_membership(gen, x_hat, gamma, &PlanSet::UPhi, 1e-9)?;
            (c, ok)
        }
        CostSetId::Shw { w } => {
            let wv = Array1::from_vec(w.clone());
            let c = g_map(gen, x_hat, gamma)? + tensor_sum(&wv, &wv) * 0.5;
            let ok = set_membership(gen, x_hat, gamma, &PlanSet::UPhiW(wv), 1e-9)?;
            (c, ok)
        }
        CostSetId::Mc => {
            let c = g_map(gen, x_hat, gamma)?;
            let ok = set_membership(gen, x_hat, gamma, &PlanSet::VPhi, 1e-9)?;
            (c, ok)
        }
        CostSetId::Ed => {
            let c = g_map(gen, x_hat, gamma)?;
            let ok = set_membership(gen, x_hat, gamma, &PlanSet::WPhi, 1e-9)?;
            (c, ok)
        }
        CostSetId::WholeSpace => {
            let zero = Array1::zeros(n);
            let c = preimage_representative(gen, x_hat, gamma, &zero, &zero)?;
            (c, true)
        }
    };
    let mu = Array1::from_shape_fn(n, |i| x_hat.row(i).sum());
    let nu = Array1::from_shape_fn(n, |j| x_hat.column(j).sum());
    let prob = TransportProblem::new(cost.clone(), mu, nu, gamma, gen)?;
    let sol = solve(&prob)?;
    let roundtrip_residual = max_abs(&(&sol.plan - x_hat));
    Ok(InverseCertificate { cost, set_id, membership_ok, roundtrip_residual })
}
