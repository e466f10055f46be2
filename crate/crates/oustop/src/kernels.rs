//! Discounted expectations that drive the boundary recursions.
//!
//! Each optimal action boundary satisfies a value-matching relation whose
//! right-hand side integrates, over the remaining time, terms of the form
//!
//! ```text
//! e^{-r u} E_x[ h(X_u) 1{X_u on one side of z} ]
//! ```
//!
//! where `h` is the discounted drift of the relevant payoff. Because the
//! spread transition law is Gaussian, every such term reduces to the
//! truncated first moments in [`crate::ou`]; no quadrature is needed. This
//! module holds those closed forms, one per boundary role.

use crate::grid::Boundary;
use crate::ou::{self, OUParams, Tail};

/// Discounted drift of holding a long position: `mu theta - (mu + r) x`.
///
/// Positive below `x*` (holding still earns), negative above it; its root is
/// where every exit boundary lands at the horizon.
pub fn h_exit_long(p: &OUParams, x: f64) -> f64 {
    p.mu * p.theta - (p.mu + p.r) * x
}

/// Discounted drift of a long position whose liquidation pays a fee `cost`:
/// `mu theta + r cost - (mu + r) x`. Reduces to [`h_exit_long`] at zero cost.
pub fn h_exit_long_cost(p: &OUParams, x: f64, cost: f64) -> f64 {
    p.mu * p.theta + p.r * cost - (p.mu + p.r) * x
}

/// Discounted drift of waiting to enter long, active only while the exit
/// problem would keep a position open: `((mu + r) x - mu theta) 1{x < exit_level}`.
pub fn h_entry_long(p: &OUParams, x: f64, exit_level: f64) -> f64 {
    if x < exit_level {
        (p.mu + p.r) * x - p.mu * p.theta
    } else {
        0.0
    }
}

/// Which boundary role's expectation to evaluate.
///
/// `EntryLong` carries the already-solved long exit boundary because its
/// drift switches off above that curve; the truncation level is capped there
/// before the moments are taken. The other roles depend only on scalars.
#[derive(Debug, Clone, Copy)]
pub enum KernelKind<'a> {
    ExitLong,
    ExitShort,
    EntryShort,
    EntryLong { exit_boundary: &'a Boundary },
    ExitLongWithCost { cost: f64 },
}

/// `e^{-r u} (rate * partial_mean - level * prob)` on the requested tail,
/// the shared shape of every kernel.
fn tail_kernel(p: &OUParams, u: f64, x: f64, z: f64, tail: Tail, level: f64) -> f64 {
    let m = ou::truncated_moments(p, u, x, z, tail);
    (-p.r * u).exp() * ((p.mu + p.r) * m.partial_mean - level * m.prob)
}

/// Discounted truncated expectation of the drift for the given role, looking
/// an elapsed time `u > 0` ahead of calendar time `t`, starting from `x`,
/// truncated at `z`.
///
/// Sign conventions track the payoff each role integrates against:
///
/// * `ExitLong` and `EntryShort`: `e^{-ru} E[((mu+r) X_u - mu theta) 1{X_u >= z}]`.
///   The two problems share one closed form because selling an owned spread
///   and opening a short both realize `+x` at the stop.
/// * `ExitShort`: the same drift restricted below `z`, where it is negative;
///   the exit-short premium subtracts value because that problem minimizes.
/// * `ExitLongWithCost`: the fee enters only through the level shift
///   `mu theta + r cost`; at `cost = 0` this reproduces `ExitLong` exactly,
///   operation for operation.
/// * `EntryLong`: `-e^{-ru} E[((mu+r) X_u - mu theta) 1{X_u <= zc}]` with
///   `zc = min(z, exit(t + u))`, the truncation capped at the exit curve.
pub fn kernel(p: &OUParams, kind: &KernelKind<'_>, t: f64, u: f64, x: f64, z: f64) -> f64 {
    let pull = p.mu * p.theta;
    match kind {
        KernelKind::ExitLong | KernelKind::EntryShort => {
            tail_kernel(p, u, x, z, Tail::Above, pull)
        }
        KernelKind::ExitShort => tail_kernel(p, u, x, z, Tail::Below, pull),
        KernelKind::ExitLongWithCost { cost } => {
            tail_kernel(p, u, x, z, Tail::Above, pull + p.r * cost)
        }
        KernelKind::EntryLong { exit_boundary } => {
            let zc = z.min(exit_boundary.interp(t + u));
            -tail_kernel(p, u, x, zc, Tail::Below, pull)
        }
    }
}
