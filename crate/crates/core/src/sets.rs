//! Closed convex constraint sets for the cost matrix: membership tests and
//! Euclidean projections used by the BCD solver.
//!
//! The squared-distance cone ED = S_h ∩ (−K₊ⁿ) is projected by Dykstra's
//! alternating algorithm; the K₊ⁿ part uses the Gaffke–Mathar decomposition
//! Π_{K₊ⁿ}(A) = A − JAJ + Π_{⪰0}(JAJ) with J the centering projector.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{centering_matrix, max_abs, psd_projection, rank, row_space_projector};

/// Relative singular-value cutoff for the affine-set pseudoinverses.
const SVD_CUTOFF: f64 = 1e-12;
/// Dykstra stopping tolerance and round cap. The tolerance sits two orders
/// below the 1e-10 accuracy the projection promises, because the successive
/// -iterate change understates the distance to the limit.
const DYKSTRA_TOL: f64 = 1e-13;
const DYKSTRA_MAX_ROUNDS: usize = 5_000;

/// A feasible set for cost matrices.
#[derive(Debug, Clone)]
pub enum ConstraintSet {
    /// Nonnegative symmetric matrices with zero diagonal.
    Sh,
    /// Nonnegative symmetric matrices with fixed diagonal w ≥ 0.
    Shw(Array1<f64>),
    /// Squared Euclidean distance matrices.
    Ed,
    /// Triangle-inequality cone; membership test only, no projection.
    Mc,
    /// {−U₀ᵀ A V₀ : A ∈ ℝ^{d×d}} for feature matrices U₀, V₀ (d×n).
    Affine(Box<AffineSet>),
    /// Entrywise nonnegative matrices.
    NonnegativeAll,
    /// No constraint.
    WholeSpace,
}

/// Precomputed affine (feature-parameterized) subspace.
#[derive(Debug, Clone)]
pub struct AffineSet {
    pub u0: Array2<f64>,
    pub v0: Array2<f64>,
    proj_u: Array2<f64>,
    proj_v: Array2<f64>,
}

impl ConstraintSet {
    pub fn shw(w: Array1<f64>) -> Result<Self> {
        if w.iter().any(|&x| x < 0.0) {
            return Err(Error::Config("S_h^w diagonal weights must be nonnegative".into()));
        }
        Ok(Self::Shw(w))
    }

    /// Build the affine set, checking full row rank d ≤ n.
    pub fn affine(u0: Array2<f64>, v0: Array2<f64>) -> Result<Self> {
        let (d, n) = u0.dim();
        if v0.dim() != (d, n) {
            return Err(Error::Dimension(format!(
                "feature matrices must share a shape: {:?} vs {:?}",
                u0.dim(),
                v0.dim()
            )));
        }
        if d > n {
            return Err(Error::Config(format!("affine set needs d <= n, got d={d}, n={n}")));
        }
        if rank(&u0, SVD_CUTOFF) < d || rank(&v0, SVD_CUTOFF) < d {
            return Err(Error::Config("feature matrices must have full row rank".into()));
        }
        let proj_u = row_space_projector(&u0, SVD_CUTOFF);
        let proj_v = row_space_projector(&v0, SVD_CUTOFF);
        Ok(Self::Affine(Box::new(AffineSet { u0, v0, proj_u, proj_v })))
    }

    pub fn id(&self) -> String {
        match self {
            Self::Sh => "sh".into(),
            Self::Shw(_) => "shw".into(),
            Self::Ed => "ed".into(),
            Self::Mc => "mc".into(),
            Self::Affine(_) => "affine".into(),
            Self::NonnegativeAll => "nonneg".into(),
            Self::WholeSpace => "free".into(),
        }
    }

    /// Whether every member is symmetric with a fixed diagonal. Newton steps
    /// over such sets must move in the reduced pair coordinates, otherwise
    /// the projection averages an asymmetric direction into an ascent one.
    pub fn enforces_symmetry(&self) -> bool {
        matches!(self, Self::Sh | Self::Shw(_) | Self::Ed | Self::Mc)
    }

    /// Whether the set is a linear subspace. Newton steps over a subspace
    /// start from the tangent (projected) gradient for the same reason.
    pub fn is_linear_subspace(&self) -> bool {
        matches!(self, Self::Affine(_) | Self::WholeSpace)
    }

    /// Euclidean (Frobenius) projection onto the set.
    pub fn project(&self, m: &Array2<f64>) -> Result<Array2<f64>> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::Dimension("projection expects a square matrix".into()));
        }
        match self {
            Self::Sh => Ok(project_sh(m, None)),
            Self::Shw(w) => {
                if w.len() != n {
                    return Err(Error::Dimension("S_h^w weight length".into()));
                }
                Ok(project_sh(m, Some(w)))
            }
            Self::Ed => project_ed(m),
            Self::Mc => Err(Error::UnsupportedCase(
                "projection onto the metric cone (metric nearness) is not provided".into(),
            )),
            Self::Affine(a) => Ok(a.proj_u.dot(m).dot(&a.proj_v)),
            Self::NonnegativeAll => Ok(m.mapv(|x| x.max(0.0))),
            Self::WholeSpace => Ok(m.clone()),
        }
    }

    /// Membership within `tol`.
    pub fn contains(&self, m: &Array2<f64>, tol: f64) -> bool {
        let n = m.nrows();
        if m.ncols() != n {
            return false;
        }
        match self {
            Self::Sh => contains_sh(m, None, tol),
            Self::Shw(w) => w.len() == n && contains_sh(m, Some(w), tol),
            Self::Ed => {
                contains_sh(m, None, tol)
                    && crate::inverse::in_psd_cone_on_centered_subspace(&(-m), tol)
            }
            Self::Mc => {
                if !contains_sh(m, None, tol) {
                    return false;
                }
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            if m[[i, j]] > m[[i, k]] + m[[k, j]] + tol {
                                return false;
                            }
                        }
                    }
                }
                true
            }
            Self::Affine(a) => {
                let p = a.proj_u.dot(m).dot(&a.proj_v);
                max_abs(&(&p - m)) <= tol
            }
            Self::NonnegativeAll => m.iter().all(|&x| x >= -tol),
            Self::WholeSpace => true,
        }
    }
}

fn project_sh(m: &Array2<f64>, diag: Option<&Array1<f64>>) -> Array2<f64> {
    let n = m.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                out[[i, i]] = diag.map_or(0.0, |w| w[i]);
            } else {
                out[[i, j]] = (0.5 * (m[[i, j]] + m[[j, i]])).max(0.0);
            }
        }
    }
    out
}

fn contains_sh(m: &Array2<f64>, diag: Option<&Array1<f64>>, tol: f64) -> bool {
    let n = m.nrows();
    for i in 0..n {
        let want = diag.map_or(0.0, |w| w[i]);
        if (m[[i, i]] - want).abs() > tol {
            return false;
        }
        for j in 0..n {
            if (m[[i, j]] - m[[j, i]]).abs() > tol || m[[i, j]] < -tol {
                return false;
            }
        }
    }
    true
}

/// Projection onto −K₊ⁿ = {A : JAJ ⪯ 0} for symmetric A:
/// Π_{−K₊ⁿ}(A) = A − JAJ + Π_{⪯0}(JAJ).
pub fn project_psd_cone_complement(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension("cone projection expects a square matrix".into()));
    }
    let asym = a
        .iter()
        .zip(a.t().iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()));
    if asym > 1e-12 {
        return Err(Error::Eigen(format!("input asymmetry {asym:.3e} exceeds 1e-12")));
    }
    let j = centering_matrix(n);
    let jaj = j.dot(a).dot(&j);
    let jaj = (&jaj + &jaj.t()) * 0.5;
    // Π_{⪯0}(JAJ) = −Π_{⪰0}(−JAJ)
    let neg_part = -psd_projection(&(-&jaj));
    Ok(a - &jaj + &neg_part)
}

/// Dykstra alternation between S_h and −K₊ⁿ.
fn project_ed(m: &Array2<f64>) -> Result<Array2<f64>> {
    project_ed_with_rounds(m).map(|(x, _)| x)
}

/// Orthogonal projection onto the hollow subspace {A = Aᵀ, diag A = 0}.
/// On this subspace the cone constraint already forces nonnegative entries
/// ((e_i−e_j)ᵀ D (e_i−e_j) ≤ 0 gives D_ij ≥ 0), so ED = hollow ∩ (−K₊ⁿ) and
/// Dykstra can alternate with the subspace instead of the polyhedron S_h.
fn project_hollow(m: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows();
    let mut out = (m + &m.t()) * 0.5;
    for i in 0..n {
        out[[i, i]] = 0.0;
    }
    out
}

fn project_ed_with_rounds(m: &Array2<f64>) -> Result<(Array2<f64>, usize)> {
    let n = m.nrows();
    let mut x = m.clone();
    let mut q = Array2::<f64>::zeros((n, n));
    let mut prev = x.clone();
    for round in 0..DYKSTRA_MAX_ROUNDS {
        // Correction terms are only needed on the cone side; the hollow
        // factor is a subspace.
        let y = project_hollow(&x);
        let yq = &y + &q;
        let yq_sym = (&yq + &yq.t()) * 0.5;
        x = project_psd_cone_complement(&yq_sym)?;
        q = yq - &x;
        let change = max_abs(&(&x - &prev));
        if change <= DYKSTRA_TOL {
            return Ok((project_hollow(&x), round + 1));
        }
        prev = x.clone();
        if round == DYKSTRA_MAX_ROUNDS - 1 {
            return Err(Error::Convergence { residual: change, rounds: DYKSTRA_MAX_ROUNDS });
        }
    }
    unreachable!()
}
