//! Time discretization and piecewise-linear action boundaries.
//!
//! A single uniform grid on `[0, horizon]` is shared by the boundary solver
//! and the value evaluators. Both integrate over the remaining time with the
//! same right-endpoint rule (`tail_sum`), so a boundary solved on a grid is
//! exactly consistent with values computed against it: at a node on the
//! boundary, the solved value-matching relation holds to solver tolerance by
//! construction, not merely up to a secondary discretization error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform grid `t_k = k h`, `k = 0..=n_steps`, with `t_n = horizon` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// At least two steps are required: the backward recursion needs one
    /// interior node between the degenerate terminal node and `t = 0`.
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "horizon must be finite and positive, got {horizon}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidParams(format!(
                "need at least 2 time steps, got {n_steps}"
            )));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Step width `horizon / n_steps`.
    pub fn h(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// `k`-th node. The last node is the horizon exactly, with no rounding
    /// residue from the multiplication.
    pub fn node(&self, k: usize) -> f64 {
        assert!(k <= self.n_steps, "node {k} beyond grid end {}", self.n_steps);
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.node(k)).collect()
    }
}

/// Role a boundary plays in a strategy.
///
/// `ExitLong` and `EntryShort` sit above the long-run level and shrink toward
/// it as the horizon approaches; `ExitShort` and `EntryLong` mirror them from
/// below. `CostExit` is the exit of a long position that pays a fixed fee on
/// liquidation, which shifts its terminal level above the frictionless one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    ExitLong,
    EntryLong,
    ExitShort,
    EntryShort,
    CostExit,
}

impl BoundaryKind {
    /// Stable snake_case name used in output files and CLI flags.
    pub fn role_name(&self) -> &'static str {
        match self {
            BoundaryKind::ExitLong => "exit_long",
            BoundaryKind::EntryLong => "entry_long",
            BoundaryKind::ExitShort => "exit_short",
            BoundaryKind::EntryShort => "entry_short",
            BoundaryKind::CostExit => "cost_exit",
        }
    }

    /// Whether the optimal curve is nonincreasing in time. The other two
    /// roles are nondecreasing; none is constant away from the terminal node.
    pub fn decreasing_in_time(&self) -> bool {
        matches!(
            self,
            BoundaryKind::ExitLong | BoundaryKind::EntryShort | BoundaryKind::CostExit
        )
    }
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.role_name())
    }
}

impl FromStr for BoundaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exit_long" => Ok(BoundaryKind::ExitLong),
            "entry_long" => Ok(BoundaryKind::EntryLong),
            "exit_short" => Ok(BoundaryKind::ExitShort),
            "entry_short" => Ok(BoundaryKind::EntryShort),
            "cost_exit" => Ok(BoundaryKind::CostExit),
            other => Err(Error::InvalidParams(format!(
                "unknown boundary role {other:?}, expected one of \
                 exit_long, entry_long, exit_short, entry_short, cost_exit"
            ))),
        }
    }
}

/// An action boundary sampled on a time grid, interpolated linearly between
/// nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    kind: BoundaryKind,
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Boundary {
    /// Assemble a boundary from node values. The slice length must be
    /// `n_steps + 1` and every level finite.
    pub fn from_parts(kind: BoundaryKind, grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() + 1 {
            return Err(Error::InvalidParams(format!(
                "{} boundary has {} node values for a grid of {} nodes",
                kind.role_name(),
                values.len(),
                grid.n_steps() + 1
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "{} boundary contains a non-finite level {bad}",
                kind.role_name()
            )));
        }
        Ok(Self { kind, grid, values })
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at_node(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Level at the horizon; analytic, assigned rather than solved.
    pub fn terminal(&self) -> f64 {
        self.values[self.grid.n_steps()]
    }

    /// Piecewise-linear level at time `t`.
    ///
    /// Accepts `t` within `1e-9` outside `[0, horizon]` and clamps it, so
    /// that times produced by floating accumulation elsewhere still map onto
    /// the curve. The interpolation form `a (1 - w) + b w` returns node
    /// values exactly even when the segment index lands one low (then
    /// `w == 1`).
    pub fn interp(&self, t: f64) -> f64 {
        const SLACK: f64 = 1e-9;
        let horizon = self.grid.horizon();
        assert!(
            (-SLACK..=horizon + SLACK).contains(&t),
            "time {t} outside [0, {horizon}]"
        );
        let t = t.clamp(0.0, horizon);
        let h = self.grid.h();
        let k = ((t / h).floor() as usize).min(self.grid.n_steps() - 1);
        let w = ((t - self.grid.node(k)) / h).clamp(0.0, 1.0);
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }
}

/// Right-endpoint discretization of an integral over the remaining time
/// `(t, horizon]`, restarted at `t` on the shared grid.
///
/// The summand is evaluated at the grid nodes strictly after `t`, passed as
/// `(node index, node time, elapsed time u = node - t)`; the first weight is
/// the gap from `t` to that node and each later weight is the node spacing.
/// At `t = horizon` the sum is empty.
///
/// Both the boundary recursion and the value evaluators integrate through
/// this one routine, which is what makes them mutually consistent: a value
/// queried at a grid node sees exactly the sum the solver zeroed there.
pub(crate) fn tail_sum(grid: &TimeGrid, t: f64, mut f: impl FnMut(usize, f64, f64) -> f64) -> f64 {
    let horizon = grid.horizon();
    debug_assert!((0.0..=horizon).contains(&t), "tail start {t} outside grid");
    let h = grid.h();
    // First node strictly after t; guard the pathological t just below a node.
    let mut k = (t / h).floor() as usize + 1;
    while k >= 1 && grid.node(k - 1) > t {
        k -= 1;
    }
    let mut sum = 0.0;
    let mut prev = t;
    while k <= grid.n_steps() {
        let node = grid.node(k);
        let w = node - prev;
        sum += w * f(k, node, node - t);
        prev = node;
        k += 1;
    }
    sum
}
