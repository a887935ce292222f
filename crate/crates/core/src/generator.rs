//! Bregman generators and their convex conjugates.
//!
//! Each generator is a scalar convex function φ of Legendre type together
//! with the closed forms of φ′, ψ = φ*, ψ′ and ψ″. The conjugate pairs are
//! exact (ψ′ inverts φ′ and ψ(φ′(x)) = xφ′(x) − φ(x)), so dual identities
//! hold to machine precision rather than up to additive constants.
//!
//! | generator        | φ(x)                          | dom φ   | dom ψ          |
//! |------------------|-------------------------------|---------|----------------|
//! | entropy          | x·log x − x + 1               | [0, ∞)  | ℝ              |
//! | burg             | x − log x − 1                 | (0, ∞)  | (−∞, 1)        |
//! | fermi-dirac      | x·log x + (1−x)·log(1−x)      | [0, 1]  | ℝ              |
//! | beta(β), 0<β<1   | (x^β − βx + β − 1)/(β(β−1))   | [0, ∞)  | (−∞, 1/(1−β))  |
//! | quadratic        | ½x² (on x ≥ 0)                | [0, ∞)  | ℝ              |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use ndarray::Array2;

/// Distance from a finite dom-ψ endpoint below which evaluation refuses to
/// proceed. Burg and beta conjugates blow up at the boundary; failing loudly
/// beats returning a huge garbage value.
pub const EPS_DOM: f64 = 1e-12;

/// Allowed range for the beta-potential exponent; values outside condition
/// the conjugate too poorly to be useful.
pub const BETA_RANGE: (f64, f64) = (0.05, 0.95);

/// A scalar interval with individually open/closed endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    pub const fn new(lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Self {
        Self { lo, lo_closed, hi, hi_closed }
    }

    /// Membership in the closure-respecting sense.
    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    /// Strict interior membership.
    pub fn contains_interior(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Which closed-form function of a generator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorFunc {
    Phi,
    PhiPrime,
    Psi,
    PsiPrime,
    PsiSecond,
}

/// A named Bregman regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    BoltzmannShannon,
    Burg,
    FermiDirac,
    BetaPotential { beta: f64 },
    Quadratic,
}

impl Generator {
    /// Beta-potential constructor with the configured conditioning guard.
    pub fn beta(beta: f64) -> Result<Self> {
        if !(BETA_RANGE.0..=BETA_RANGE.1).contains(&beta) {
            return Err(Error::Config(format!(
                "beta-potential exponent {beta} outside [{}, {}]",
                BETA_RANGE.0, BETA_RANGE.1
            )));
        }
        Ok(Self::BetaPotential { beta })
    }

    /// Parse the CLI identifier: `entropy`, `burg`, `fermi-dirac`,
    /// `beta:<b>`, `quadratic`.
    pub fn parse_id(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Self::BoltzmannShannon),
            "burg" => Ok(Self::Burg),
            "fermi-dirac" => Ok(Self::FermiDirac),
            "quadratic" => Ok(Self::Quadratic),
            _ => {
                if let Some(b) = s.strip_prefix("beta:") {
                    let beta: f64 = b.parse().map_err(|_| {
                        Error::Config(format!("cannot parse beta value in generator id `{s}`"))
                    })?;
                    Self::beta(beta)
                } else {
                    Err(Error::Config(format!(
                        "unknown generator id `{s}` (expected entropy|burg|fermi-dirac|beta:<b>|quadratic)"
                    )))
                }
            }
        }
    }

    pub fn id(&self) -> String {
        match self {
            Self::BoltzmannShannon => "entropy".into(),
            Self::Burg => "burg".into(),
            Self::FermiDirac => "fermi-dirac".into(),
            Self::BetaPotential { beta } => format!("beta:{beta}"),
            Self::Quadratic => "quadratic".into(),
        }
    }

    pub fn dom_phi(&self) -> Interval {
        match self {
            Self::BoltzmannShannon => Interval::new(0.0, true, f64::INFINITY, false),
            Self::Burg => Interval::new(0.0, false, f64::INFINITY, false),
            Self::FermiDirac => Interval::new(0.0, true, 1.0, true),
            Self::BetaPotential { .. } => Interval::new(0.0, true, f64::INFINITY, false),
            Self::Quadratic => Interval::new(0.0, true, f64::INFINITY, false),
        }
    }

    /// Interior of dom ψ.
    pub fn dom_psi_interior(&self) -> Interval {
        match self {
            Self::BoltzmannShannon | Self::FermiDirac | Self::Quadratic => {
                Interval::new(f64::NEG_INFINITY, false, f64::INFINITY, false)
            }
            Self::Burg => Interval::new(f64::NEG_INFINITY, false, 1.0, false),
            Self::BetaPotential { beta } => {
                Interval::new(f64::NEG_INFINITY, false, 1.0 / (1.0 - beta), false)
            }
        }
    }

    /// Limiting derivatives (φ′₀, φ′₁) of φ′ at 0⁺ and 1⁻, as extended reals.
    pub fn limiting_derivatives(&self) -> (f64, f64) {
        match self {
            Self::BoltzmannShannon => (f64::NEG_INFINITY, 0.0),
            Self::Burg => (f64::NEG_INFINITY, 0.0),
            Self::FermiDirac => (f64::NEG_INFINITY, f64::INFINITY),
            Self::BetaPotential { .. } => (f64::NEG_INFINITY, 0.0),
            Self::Quadratic => (0.0, 1.0),
        }
    }

    fn check_phi_arg(&self, x: f64, need_interior: bool) -> Result<()> {
        let dom = self.dom_phi();
        let ok = if need_interior { dom.contains_interior(x) } else { dom.contains(x) };
        if !ok || !x.is_finite() {
            return Err(Error::Domain(format!(
                "x = {x} outside {}dom phi of {}",
                if need_interior { "int " } else { "" },
                self.id()
            )));
        }
        Ok(())
    }

    fn check_psi_arg(&self, theta: f64) -> Result<()> {
        let dom = self.dom_psi_interior();
        if !theta.is_finite() || !dom.contains_interior(theta) {
            return Err(Error::Domain(format!(
                "theta = {theta} outside int dom psi of {}",
                self.id()
            )));
        }
        // Guard band near a finite endpoint.
        if dom.hi.is_finite() && theta > dom.hi - EPS_DOM {
            return Err(Error::Domain(format!(
                "theta = {theta} within {EPS_DOM:.0e} of dom psi boundary {} for {}",
                dom.hi,
                self.id()
            )));
        }
        Ok(())
    }

    /// φ(x). Defined on all of dom φ (endpoint values taken by limit).
    pub fn phi(&self, x: f64) -> Result<f64> {
        self.check_phi_arg(x, false)?;
        Ok(match self {
            Self::BoltzmannShannon => {
                if x == 0.0 {
                    1.0
                } else {
                    x * x.ln() - x + 1.0
                }
            }
            Self::Burg => x - x.ln() - 1.0,
            Self::FermiDirac => xlogx(x) + xlogx(1.0 - x),
            Self::BetaPotential { beta } => {
                (x.powf(*beta) - beta * x + beta - 1.0) / (beta * (beta - 1.0))
            }
            Self::Quadratic => 0.5 * x * x,
        })
    }

    /// φ′(x) on the interior of dom φ.
    pub fn phi_prime(&self, x: f64) -> Result<f64> {
        self.check_phi_arg(x, true)?;
        Ok(match self {
            Self::BoltzmannShannon => x.ln(),
            Self::Burg => 1.0 - 1.0 / x,
            Self::FermiDirac => (x / (1.0 - x)).ln(),
            Self::BetaPotential { beta } => (x.powf(beta - 1.0) - 1.0) / (beta - 1.0),
            Self::Quadratic => x,
        })
    }

    /// ψ(θ) = φ*(θ), exact conjugate of the φ above.
    pub fn psi(&self, theta: f64) -> Result<f64> {
        self.check_psi_arg(theta)?;
        Ok(match self {
            Self::BoltzmannShannon => theta.exp_m1(),
            Self::Burg => -(-theta).ln_1p(),
            // log(1 + e^t), computed without overflow.
            Self::FermiDirac => theta.max(0.0) + (-theta.abs()).exp().ln_1p(),
            Self::BetaPotential { beta } => {
                let t = (beta - 1.0) * theta + 1.0;
                (t.powf(beta / (beta - 1.0)) - 1.0) / beta
            }
            Self::Quadratic => {
                let p = theta.max(0.0);
                0.5 * p * p
            }
        })
    }

    /// ψ′(θ) = (φ′)⁻¹(θ).
    pub fn psi_prime(&self, theta: f64) -> Result<f64> {
        self.check_psi_arg(theta)?;
        Ok(match self {
            Self::BoltzmannShannon => theta.exp(),
            Self::Burg => 1.0 / (1.0 - theta),
            Self::FermiDirac => sigmoid(theta),
            Self::BetaPotential { beta } => {
                let t = (beta - 1.0) * theta + 1.0;
                t.powf(1.0 / (beta - 1.0))
            }
            Self::Quadratic => theta.max(0.0),
        })
    }

    /// ψ″(θ).
    pub fn psi_second(&self, theta: f64) -> Result<f64> {
        self.check_psi_arg(theta)?;
        Ok(match self {
            Self::BoltzmannShannon => theta.exp(),
            Self::Burg => {
                let d = 1.0 - theta;
                1.0 / (d * d)
            }
            Self::FermiDirac => {
                let s = sigmoid(theta);
                s * (1.0 - s)
            }
            Self::BetaPotential { beta } => {
                let t = (beta - 1.0) * theta + 1.0;
                t.powf(1.0 / (beta - 1.0) - 1.0)
            }
            Self::Quadratic => {
                if theta > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// Dispatch by [`GeneratorFunc`].
    pub fn eval(&self, func: GeneratorFunc, x: f64) -> Result<f64> {
        match func {
            GeneratorFunc::Phi => self.phi(x),
            GeneratorFunc::PhiPrime => self.phi_prime(x),
            GeneratorFunc::Psi => self.psi(x),
            GeneratorFunc::PsiPrime => self.psi_prime(x),
            GeneratorFunc::PsiSecond => self.psi_second(x),
        }
    }

    /// Scalar Bregman divergence B_φ(x‖y) = φ(x) − φ(y) − (x−y)φ′(y).
    pub fn divergence_scalar(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.phi(x)? - self.phi(y)? - (x - y) * self.phi_prime(y)?)
    }

    /// Entrywise matrix extension Σ_ij B_φ(X_ij‖Y_ij).
    pub fn divergence(&self, x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
        if x.dim() != y.dim() {
            return Err(Error::Dimension(format!(
                "divergence shapes {:?} vs {:?}",
                x.dim(),
                y.dim()
            )));
        }
        let mut total = 0.0;
        for (a, b) in x.iter().zip(y.iter()) {
            total += self.divergence_scalar(*a, *b)?;
        }
        Ok(total)
    }

    /// Entrywise Σ φ(X_ij).
    pub fn phi_matrix(&self, x: &Array2<f64>) -> Result<f64> {
        let mut total = 0.0;
        for a in x.iter() {
            total += self.phi(*a)?;
        }
        Ok(total)
    }

    /// Membership of a plan in the target set T_φ(μ,ν): transport-polytope
    /// constraints within `tol`, with the entry range open at 0 when
    /// φ′₀ = −∞ and open at 1 when φ′₁ = +∞.
    pub fn target_set_contains(
        &self,
        x: &Array2<f64>,
        mu: &ndarray::Array1<f64>,
        nu: &ndarray::Array1<f64>,
        tol: f64,
    ) -> Result<bool> {
        let (n, m) = x.dim();
        if n != m || mu.len() != n || nu.len() != n {
            return Err(Error::Dimension(format!(
                "target set check: plan {n}x{m}, mu {}, nu {}",
                mu.len(),
                nu.len()
            )));
        }
        let (d0, d1) = self.limiting_derivatives();
        let open_at_zero = d0 == f64::NEG_INFINITY;
        let open_at_one = d1 == f64::INFINITY;
        for &e in x.iter() {
            let lower_ok = if open_at_zero { e > 0.0 } else { e >= -tol };
            let upper_ok = if open_at_one { e < 1.0 } else { e <= 1.0 + tol };
            if !lower_ok || !upper_ok {
                return Ok(false);
            }
        }
        for i in 0..n {
            let row: f64 = x.row(i).sum();
            if (row - mu[i]).abs() > tol {
                return Ok(false);
            }
            let col: f64 = x.column(i).sum();
            if (col - nu[i]).abs() > tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// x·log x extended by continuity to x = 0.
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Numerically stable logistic function.
fn sigmoid(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}
