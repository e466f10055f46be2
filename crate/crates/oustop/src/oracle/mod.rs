//! Independent validators for the boundary solver and value evaluators.
//!
//! Two cross-checks that share no code path with the integral-equation
//! machinery: a Bermudan dynamic-programming lattice (backward induction
//! against the exact one-step transition law, Gauss-Legendre quadrature)
//! and a Monte Carlo simulator that executes the solved threshold rules on
//! exactly sampled paths. Agreement is evidence for both sides; neither
//! oracle ever reads kernels or boundary recursions.

mod lattice;
mod sim;

pub use lattice::{dp_value, dp_value_checked, DpResult, LatticeSpec, Stage};
pub use sim::{simulate_strategy, simulate_strategy_from, SimReport};
