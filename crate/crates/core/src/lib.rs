//! Bregman-regularized optimal transport, its closed-form and
//! optimization-based inverses, and the accompanying experiment harness.
//!
//! The crate is organized around the forward map F(C) = argmin ⟨C,X⟩ + γφ(X)
//! over the transport polytope:
//!
//! * [`generator`] — Bregman generators φ with exact conjugates ψ = φ*.
//! * [`forward`] — dual alternating-scaling solver for F(C).
//! * [`inverse`] — closed-form inverse G_φ^γ, plan-set memberships, the
//!   nonnegative-cost construction and the stability bound.
//! * [`sets`] — cost constraint sets with Euclidean projections.
//! * [`bcd`] — single-level objective E_λ and the inexact BCD solver.
//! * [`experiments`] — seeded experiment drivers (recovery, stability,
//!   λ-sweep, matching) and the synthetic matching generator.
//! * [`io`] — CSV matrices and JSON reports.

pub mod bcd;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod generator;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod report;
pub mod sets;

pub use error::{Error, Result};
pub use generator::{Generator, GeneratorFunc};
