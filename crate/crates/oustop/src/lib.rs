//! Optimal trade timing for a mean-reverting spread over a finite horizon.
//!
//! The spread is modeled as an Ornstein-Uhlenbeck process. Entering and
//! exiting a position is an optimal double-stopping problem; its solution is
//! a pair of time-dependent action boundaries. Each boundary satisfies a
//! nonlinear Volterra-type integral equation that this crate solves by a
//! backward recursion in time, with every one-step expectation available in
//! closed form through truncated Gaussian moments.
//!
//! Modules:
//! - [`ou`]: exact transition law of the spread, truncated moments, sampling.
//! - [`kernels`]: closed-form integrands of the boundary equations.
//! - [`grid`]: uniform time grids and piecewise-linear boundaries.
//! - [`solver`]: backward recursion and bracketed root finding.
//! - [`value`]: value functions, the chooser problem, break-even curves.
//! - [`oracle`]: independent cross-checks (dynamic-programming lattice and an
//!   exact-transition Monte Carlo simulator).

pub mod grid;
pub mod kernels;
pub mod oracle;
pub mod ou;
pub mod solver;
pub mod value;

pub use grid::{Boundary, BoundaryKind, TimeGrid};
pub use ou::OUParams;
pub use solver::{SolveDiagnostics, Strategy, StrategySolution};
pub use value::{ValueKind, ValueQuery};

/// Errors surfaced by solvers, evaluators and oracles.
///
/// Contract violations with no data-dependent cause (negative elapsed time,
/// non-finite inputs) panic instead; everything that can fail on legitimate
/// inputs is reported through this enum.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no sign change found around seed {seed} ({context})")]
    RootNotBracketed { seed: f64, context: String },
    #[error("{kind:?} boundary not monotone at step {step} (t = {t}): violation {violation:e}")]
    NonMonotone {
        kind: BoundaryKind,
        step: usize,
        t: f64,
        violation: f64,
    },
    #[error("solution does not contain a {0:?} boundary")]
    MissingBoundary(BoundaryKind),
    #[error("query out of range: {0}")]
    OutOfRange(String),
    #[error("lattice bounds too tight: widening the domain moved values by {moved:e} (tolerance {tolerance:e})")]
    BoundsTooTight { moved: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
