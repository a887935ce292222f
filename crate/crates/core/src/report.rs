//! Solver and experiment report types (all serde-serializable).

use serde::{Deserialize, Serialize};

/// Why a solver stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Failed(String),
}

/// One iteration (sweep or BCD cycle) of an iterative solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Accepted Armijo step sizes per block (empty for scaling sweeps).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step_sizes: Vec<f64>,
}

/// Iteration trace of a solve: objective values, step sizes, KKT residuals,
/// wall time and the termination reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub algorithm: String,
    pub termination: Termination,
    pub iterations: usize,
    pub final_residual: f64,
    pub wall_time_s: f64,
    pub trace: Vec<IterationRecord>,
    /// Set by the BCD solver when every per-cycle runtime check (monotone
    /// decrease, sufficient decrease, step-size floor) held.
    #[serde(default)]
    pub runtime_checks_ok: bool,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}
