//! Value-function evaluation over solved boundaries.
//!
//! Every value function has an integral representation along its solved
//! boundary: a discounted terminal settlement plus a kernel sum over the
//! grid nodes after the query time. Evaluation therefore never re-solves
//! anything; it replays the same right-endpoint sum the solver used, which
//! keeps solver and evaluator mutually consistent to the root tolerance.
//!
//! Queries between grid nodes restart the sum from the bracketing node, so
//! off-node evaluation costs the same O(h) error as the scheme itself.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::grid::{tail_sum, Boundary, BoundaryKind, TimeGrid};
use crate::kernels::{kernel, KernelKind};
use crate::ou::{self, OUParams};
use crate::solver::{brent_core, root_find_within, StrategySolution};
use crate::{Error, Result};

/// x-tolerance for the scalar roots computed here (indifference threshold,
/// gamma nodes); finer than the boundary solves because these roots feed
/// residual checks at 1e-9.
const FINE_XTOL: f64 = 1e-12;

/// Which value function a query asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    ExitLong,
    EntryLong,
    ExitShort,
    EntryShort,
    /// Difference of the two exit values; the value of entering with the
    /// direction still open.
    Chooser,
    /// Larger of the two entry payoffs, the reward for entering now.
    ChooserPayoff,
    CostExit,
}

impl ValueKind {
    pub fn name(&self) -> &'static str {
        match self {
            ValueKind::ExitLong => "exit_long",
            ValueKind::EntryLong => "entry_long",
            ValueKind::ExitShort => "exit_short",
            ValueKind::EntryShort => "entry_short",
            ValueKind::Chooser => "chooser",
            ValueKind::ChooserPayoff => "chooser_payoff",
            ValueKind::CostExit => "cost_exit",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "exit_long" => Ok(ValueKind::ExitLong),
            "entry_long" => Ok(ValueKind::EntryLong),
            "exit_short" => Ok(ValueKind::ExitShort),
            "entry_short" => Ok(ValueKind::EntryShort),
            "chooser" => Ok(ValueKind::Chooser),
            "chooser_payoff" => Ok(ValueKind::ChooserPayoff),
            "cost_exit" => Ok(ValueKind::CostExit),
            other => Err(Error::InvalidParams(format!(
                "unknown value role {other:?}; expected one of exit_long, entry_long, \
                 exit_short, entry_short, chooser, chooser_payoff, cost_exit"
            ))),
        }
    }
}

/// One evaluation request: which value function, where.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueQuery {
    pub role: ValueKind,
    pub t: f64,
    pub x: f64,
}

impl ValueQuery {
    pub fn new(role: ValueKind, t: f64, x: f64) -> Self {
        Self { role, t, x }
    }
}

/// Settlement-plus-memory representation shared by the three exit values.
/// `cost` feeds both the settlement and, through `kind`, the kernel.
fn exit_family_raw(
    p: &OUParams,
    boundary: &Boundary,
    kind: &KernelKind<'_>,
    cost: f64,
    t: f64,
    x: f64,
) -> f64 {
    let span = boundary.grid().horizon() - t;
    let settle = (-p.r * span).exp() * (ou::transition_mean(p, span, x) - cost);
    let memory = tail_sum(boundary.grid(), t, |idx, _, u| {
        kernel(p, kind, t, u, x, boundary.value_at_node(idx))
    });
    settle + memory
}

pub(crate) fn exit_long_raw(p: &OUParams, exit: &Boundary, t: f64, x: f64) -> f64 {
    debug_assert_eq!(exit.kind(), BoundaryKind::ExitLong);
    exit_family_raw(p, exit, &KernelKind::ExitLong, 0.0, t, x)
}

pub(crate) fn exit_short_raw(p: &OUParams, exit: &Boundary, t: f64, x: f64) -> f64 {
    debug_assert_eq!(exit.kind(), BoundaryKind::ExitShort);
    exit_family_raw(p, exit, &KernelKind::ExitShort, 0.0, t, x)
}

pub(crate) fn exit_long_cost_raw(
    p: &OUParams,
    boundary: &Boundary,
    cost: f64,
    t: f64,
    x: f64,
) -> f64 {
    debug_assert_eq!(boundary.kind(), BoundaryKind::CostExit);
    exit_family_raw(p, boundary, &KernelKind::ExitLongWithCost { cost }, cost, t, x)
}

/// Entry values have no settlement leg: unentered positions are worthless
/// at the horizon, so the whole value is the kernel sum.
pub(crate) fn entry_long_raw(
    p: &OUParams,
    entry: &Boundary,
    exit: &Boundary,
    t: f64,
    x: f64,
) -> f64 {
    debug_assert_eq!(entry.kind(), BoundaryKind::EntryLong);
    debug_assert_eq!(exit.kind(), BoundaryKind::ExitLong);
    let kind = KernelKind::EntryLong { exit_boundary: exit };
    tail_sum(entry.grid(), t, |idx, _, u| kernel(p, &kind, t, u, x, entry.value_at_node(idx)))
}

pub(crate) fn entry_short_raw(p: &OUParams, entry: &Boundary, t: f64, x: f64) -> f64 {
    debug_assert_eq!(entry.kind(), BoundaryKind::EntryShort);
    tail_sum(entry.grid(), t, |idx, _, u| {
        kernel(p, &KernelKind::EntryShort, t, u, x, entry.value_at_node(idx))
    })
}

fn check_point(sol: &StrategySolution, t: f64, x: f64) -> Result<()> {
    let horizon = sol.grid().horizon();
    if !(t.is_finite() && (0.0..=horizon).contains(&t)) {
        return Err(Error::OutOfRange(format!("query time {t} outside [0, {horizon}]")));
    }
    if !x.is_finite() {
        return Err(Error::OutOfRange(format!("query spread {x} is not finite")));
    }
    Ok(())
}

/// Build a `(t, x) -> value` closure for one role over a solved strategy.
/// The closure does no input checking; it backs [`eval`] and [`surface`],
/// which validate queries first.
pub fn raw_evaluator<'a>(
    sol: &'a StrategySolution,
    kind: ValueKind,
) -> Result<Box<dyn Fn(f64, f64) -> f64 + Sync + 'a>> {
    let p = *sol.params();
    Ok(match kind {
        ValueKind::ExitLong => {
            let b = sol.require(BoundaryKind::ExitLong)?;
            Box::new(move |t, x| exit_long_raw(&p, b, t, x))
        }
        ValueKind::ExitShort => {
            let b = sol.require(BoundaryKind::ExitShort)?;
            Box::new(move |t, x| exit_short_raw(&p, b, t, x))
        }
        ValueKind::EntryLong => {
            let entry = sol.require(BoundaryKind::EntryLong)?;
            let exit = sol.require(BoundaryKind::ExitLong)?;
            Box::new(move |t, x| entry_long_raw(&p, entry, exit, t, x))
        }
        ValueKind::EntryShort => {
            let entry = sol.require(BoundaryKind::EntryShort)?;
            Box::new(move |t, x| entry_short_raw(&p, entry, t, x))
        }
        ValueKind::Chooser => {
            let long = sol.require(BoundaryKind::ExitLong)?;
            let short = sol.require(BoundaryKind::ExitShort)?;
            Box::new(move |t, x| exit_long_raw(&p, long, t, x) - exit_short_raw(&p, short, t, x))
        }
        ValueKind::ChooserPayoff => {
            let long = sol.require(BoundaryKind::ExitLong)?;
            let short = sol.require(BoundaryKind::ExitShort)?;
            Box::new(move |t, x| {
                (exit_long_raw(&p, long, t, x) - x).max(x - exit_short_raw(&p, short, t, x))
            })
        }
        ValueKind::CostExit => {
            let b = sol.require(BoundaryKind::CostExit)?;
            let cost = sol.strategy().fee();
            Box::new(move |t, x| exit_long_cost_raw(&p, b, cost, t, x))
        }
    })
}

/// Evaluate the value function named by `q.role` at `(q.t, q.x)`.
///
/// For [`ValueKind::CostExit`] the fee is the one the solution was solved
/// with. Fails with [`Error::OutOfRange`] off the domain and
/// [`Error::MissingBoundary`] if the solution lacks a needed curve.
pub fn eval(sol: &StrategySolution, q: ValueQuery) -> Result<f64> {
    check_point(sol, q.t, q.x)?;
    let f = raw_evaluator(sol, q.role)?;
    Ok(f(q.t, q.x))
}

fn eval_as(sol: &StrategySolution, expected: ValueKind, q: ValueQuery) -> Result<f64> {
    if q.role != expected {
        return Err(Error::InvalidParams(format!(
            "query for {} passed to the {} evaluator",
            q.role, expected
        )));
    }
    eval(sol, q)
}

/// Value of an open long position: best discounted sale price.
pub fn eval_v_exit_long(sol: &StrategySolution, q: ValueQuery) -> Result<f64> {
    eval_as(sol, ValueKind::ExitLong, q)
}

/// Value of an open short position: negative of the best discounted buyback.
pub fn eval_v_exit_short(sol: &StrategySolution, q: ValueQuery) -> Result<f64> {
    eval_as(sol, ValueKind::ExitShort, q)
}

/// Value of waiting to open a long position, the full round-trip value.
pub fn eval_v_entry_long(sol: &StrategySolution, q: ValueQuery) -> Result<f64> {
    eval_as(sol, ValueKind::EntryLong, q)
}

/// Value of waiting to open a short position.
pub fn eval_v_entry_short(sol: &StrategySolution, q: ValueQuery) -> Result<f64> {
    eval_as(sol, ValueKind::EntryShort, q)
}

/// Value of entering with the direction still open; the exact difference of
/// the two exit values.
pub fn eval_v_chooser(sol: &StrategySolution, q: ValueQuery) -> Result<f64> {
    eval_as(sol, ValueKind::Chooser, q)
}

/// Value of an open long position when liquidation pays the fee `c`.
///
/// `c` should be the fee the solution's boundary was solved with; passing
/// another fee prices a mismatched rule. At `c = 0` this agrees bit for bit
/// with [`eval_v_exit_long`] over the matching frictionless boundary.
pub fn eval_v_exit_long_cost(sol: &StrategySolution, q: ValueQuery, c: f64) -> Result<f64> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "exit fee must be finite and nonnegative, got {c}"
        )));
    }
    if q.role != ValueKind::CostExit {
        return Err(Error::InvalidParams(format!(
            "query for {} passed to the cost_exit evaluator",
            q.role
        )));
    }
    check_point(sol, q.t, q.x)?;
    let b = sol.require(BoundaryKind::CostExit)?;
    Ok(exit_long_cost_raw(sol.params(), b, c, q.t, q.x))
}

/// Reward for entering the chooser now: the better of going long or short.
pub fn chooser_payoff(sol: &StrategySolution, t: f64, x: f64) -> Result<f64> {
    check_point(sol, t, x)?;
    let f = raw_evaluator(sol, ValueKind::ChooserPayoff)?;
    Ok(f(t, x))
}

/// Spread level at which the chooser's long and short entry payoffs agree,
/// bracketed between the two exit curves. Needs `t < T`; at the horizon the
/// curves meet and the threshold degenerates.
pub fn indifference_threshold(sol: &StrategySolution, t: f64) -> Result<f64> {
    let horizon = sol.grid().horizon();
    if !(t.is_finite() && 0.0 <= t && t < horizon) {
        return Err(Error::OutOfRange(format!("threshold time {t} outside [0, {horizon})")));
    }
    let long = sol.require(BoundaryKind::ExitLong)?;
    let short = sol.require(BoundaryKind::ExitShort)?;
    let p = sol.params();
    // Long payoff dominates at the lower curve, short at the upper one, so
    // the difference changes sign across (short(t), long(t)).
    let g = |x: f64| {
        (exit_long_raw(p, long, t, x) - x) - (x - exit_short_raw(p, short, t, x))
    };
    Ok(root_find_within(g, short.interp(t), long.interp(t), FINE_XTOL)?.root)
}

/// Lower edge of the late-liquidation region for a fee-paying exit, per
/// report node; `None` where the curve has dived below the search window.
#[derive(Debug, Clone, Serialize)]
pub struct GammaCurve {
    pub t_values: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl GammaCurve {
    /// Number of nodes where the curve is defined.
    pub fn defined_len(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Per node of `report`, the spread level where holding the position is
/// worth exactly the immediate fee-paying sale, i.e. the root in x of
/// `V(t, x) - x - c`. Below it, deep under the exit boundary, waiting no
/// longer covers the fee. The root is searched on
/// `[theta - 10 sigma/sqrt(2 mu), b(t)]`; nodes with no root there (always
/// the case close to the horizon, where the curve diverges down) and the
/// terminal node are reported absent.
pub fn gamma_curve(sol: &StrategySolution, report: &TimeGrid, c: f64) -> Result<GammaCurve> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidParams(format!(
            "the late-liquidation curve needs a positive fee, got {c}"
        )));
    }
    let boundary = sol.require(BoundaryKind::CostExit)?;
    if report.horizon() != sol.grid().horizon() {
        return Err(Error::InvalidParams(format!(
            "report horizon {} does not match the solution horizon {}",
            report.horizon(),
            sol.grid().horizon()
        )));
    }
    let p = sol.params();
    let floor = p.theta - 10.0 * p.stationary_sd();
    let t_values = report.nodes();
    let values: Vec<Option<f64>> = t_values
        .par_iter()
        .map(|&t| {
            if t >= report.horizon() {
                return None;
            }
            let g = |x: f64| exit_long_cost_raw(p, boundary, c, t, x) - x - c;
            let ceil = boundary.interp(t);
            // At the boundary the position is worth b - c, so g = -2c < 0
            // up to scheme error; no root means the curve is gone here.
            let g_ceil = g(ceil);
            if g_ceil >= 0.0 {
                debug_assert!(g_ceil < c, "value matching broken at t = {t}");
                return None;
            }
            let g_floor = g(floor);
            if g_floor <= 0.0 {
                return None;
            }
            Some(brent_core(g, floor, ceil, g_floor, g_ceil, FINE_XTOL, 2).root)
        })
        .collect();
    Ok(GammaCurve { t_values, values })
}

/// Uniform spatial mesh for surface fills.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceMesh {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl SpaceMesh {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidParams(format!(
                "mesh needs finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidParams(format!(
                "mesh needs at least 2 points, got {n_points}"
            )));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Mesh points, endpoints exact.
    pub fn points(&self) -> Vec<f64> {
        let step = (self.x_max - self.x_min) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| if i + 1 == self.n_points { self.x_max } else { self.x_min + i as f64 * step })
            .collect()
    }
}

/// Gridded evaluation of one value function: `values[i][j]` is the value at
/// `(t_values[j], x_values[i])`.
#[derive(Debug, Clone, Serialize)]
pub struct ValueSurface {
    pub kind: ValueKind,
    pub t_values: Vec<f64>,
    pub x_values: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Fill a surface for `kind` over the mesh and the given times. Rows are
/// filled in parallel; output ordering is deterministic.
pub fn surface(
    sol: &StrategySolution,
    kind: ValueKind,
    t_values: &[f64],
    mesh: &SpaceMesh,
) -> Result<ValueSurface> {
    if t_values.is_empty() {
        return Err(Error::InvalidParams("surface needs at least one time".into()));
    }
    for &t in t_values {
        check_point(sol, t, 0.0)?;
    }
    let f = raw_evaluator(sol, kind)?;
    let x_values = mesh.points();
    let values: Vec<Vec<f64>> = x_values
        .par_iter()
        .map(|&x| t_values.iter().map(|&t| f(t, x)).collect())
        .collect();
    Ok(ValueSurface { kind, t_values: t_values.to_vec(), x_values, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_strategy, Strategy};
    use std::sync::LazyLock;

    fn fig_params() -> OUParams {
        OUParams::new(16.0, 0.0, 0.16, 0.01, 1.0).unwrap()
    }

    static LONG_SHORT: LazyLock<StrategySolution> = LazyLock::new(|| {
        let g = TimeGrid::new(1.0, 40).unwrap();
        solve_strategy(&fig_params(), &g, Strategy::LongShort).unwrap()
    });

    static CHOOSER: LazyLock<StrategySolution> = LazyLock::new(|| {
        let g = TimeGrid::new(1.0, 40).unwrap();
        solve_strategy(&fig_params(), &g, Strategy::Chooser).unwrap()
    });

    static COST: LazyLock<StrategySolution> = LazyLock::new(|| {
        let g = TimeGrid::new(1.0, 40).unwrap();
        solve_strategy(&fig_params(), &g, Strategy::CostExit { cost: 0.02 }).unwrap()
    });

    fn q(role: ValueKind, t: f64, x: f64) -> ValueQuery {
        ValueQuery::new(role, t, x)
    }

    #[test]
    fn terminal_identities_are_exact() {
        let sol = &*LONG_SHORT;
        for x in [-0.07, 0.0, 0.013, 0.2] {
            assert_eq!(eval_v_exit_long(sol, q(ValueKind::ExitLong, 1.0, x)).unwrap(), x);
            assert_eq!(eval_v_entry_long(sol, q(ValueKind::EntryLong, 1.0, x)).unwrap(), 0.0);
        }
        let chooser = &*CHOOSER;
        for x in [-0.1, 0.05] {
            assert_eq!(eval_v_chooser(chooser, q(ValueKind::Chooser, 1.0, x)).unwrap(), 0.0);
            assert_eq!(chooser_payoff(chooser, 1.0, x).unwrap(), 0.0);
        }
        let cost = &*COST;
        for x in [-0.05, 0.1] {
            let v = eval_v_exit_long_cost(cost, q(ValueKind::CostExit, 1.0, x), 0.02).unwrap();
            assert_eq!(v, x - 0.02);
        }
    }

    #[test]
    fn solved_nodes_satisfy_value_matching() {
        // At each node the boundary level was defined by V(t_k, b_k) = b_k;
        // the evaluator replays the same sum, so the residual is the root
        // finder's, not the scheme's.
        let sol = &*LONG_SHORT;
        let exit = sol.require(BoundaryKind::ExitLong).unwrap();
        for k in [0, 7, 23, 39] {
            let t = sol.grid().node(k);
            let b = exit.value_at_node(k);
            let v = eval_v_exit_long(sol, q(ValueKind::ExitLong, t, b)).unwrap();
            assert!((v - b).abs() <= 1e-9, "node {k}: |V - b| = {:e}", (v - b).abs());
        }
    }

    #[test]
    fn exit_value_dominates_the_payoff_and_flattens_in_the_stop_region() {
        let sol = &*LONG_SHORT;
        for x in [-0.08, -0.02, 0.0, 0.01, 0.05] {
            for t in [0.0, 0.33, 0.9] {
                let v = eval_v_exit_long(sol, q(ValueKind::ExitLong, t, x)).unwrap();
                assert!(v >= x - 1e-12, "V must dominate immediate sale at ({t}, {x})");
            }
        }
        // Deep in the stop region the value is the payoff up to O(h).
        let v = eval_v_exit_long(sol, q(ValueKind::ExitLong, 0.2, 0.12)).unwrap();
        assert!((v - 0.12).abs() <= 1e-3, "gap {:e}", (v - 0.12).abs());
    }

    #[test]
    fn short_side_mirrors_long_side_at_zero_theta() {
        let chooser = &*CHOOSER;
        for (t, x) in [(0.0, 0.0), (0.3, 0.02), (0.7, -0.05)] {
            let long = eval_v_exit_long(chooser, q(ValueKind::ExitLong, t, -x)).unwrap();
            let short = eval_v_exit_short(chooser, q(ValueKind::ExitShort, t, x)).unwrap();
            assert!((short + long).abs() <= 1e-10, "mirror gap {:e}", (short + long).abs());
        }
    }

    #[test]
    fn entry_value_matches_the_round_trip_in_the_entry_region() {
        let sol = &*LONG_SHORT;
        let t = 0.25;
        let x = -0.1;
        let entry = eval_v_entry_long(sol, q(ValueKind::EntryLong, t, x)).unwrap();
        let exit = eval_v_exit_long(sol, q(ValueKind::ExitLong, t, x)).unwrap();
        assert!(entry >= 0.0);
        assert!(
            (entry - (exit - x)).abs() <= 5e-3,
            "deep in the entry region V_entry = V_exit - x up to scheme error, gap {:e}",
            (entry - (exit - x)).abs()
        );
    }

    #[test]
    fn exit_value_is_nonincreasing_in_time_in_the_continuation_region() {
        let sol = &*LONG_SHORT;
        let mut prev = f64::INFINITY;
        for t in [0.0, 0.2, 0.4, 0.6, 0.8] {
            let v = eval_v_exit_long(sol, q(ValueKind::ExitLong, t, 0.0)).unwrap();
            assert!(v <= prev + 1e-9, "V(t, 0) must not grow with t");
            prev = v;
        }
    }

    #[test]
    fn chooser_value_is_even_and_dominates_both_entries() {
        let chooser = &*CHOOSER;
        let sol = &*LONG_SHORT;
        for x in [0.0, 0.01, 0.04, 0.09] {
            let plus = eval_v_chooser(chooser, q(ValueKind::Chooser, 0.0, x)).unwrap();
            let minus = eval_v_chooser(chooser, q(ValueKind::Chooser, 0.0, -x)).unwrap();
            assert!(plus >= 0.0);
            assert!((plus - minus).abs() <= 1e-10, "evenness gap {:e}", (plus - minus).abs());
            let entry = eval_v_entry_long(sol, q(ValueKind::EntryLong, 0.0, x)).unwrap();
            assert!(plus >= entry - 5e-3, "chooser {plus} vs committed entry {entry}");
        }
    }

    #[test]
    fn chooser_payoff_takes_the_short_branch_above_the_upper_curve() {
        let chooser = &*CHOOSER;
        let t = 0.4;
        let x = 0.1;
        let schedule = chooser.require(BoundaryKind::ExitLong).unwrap();
        assert!(x > schedule.interp(t));
        let pay = chooser_payoff(chooser, t, x).unwrap();
        let short = eval_v_exit_short(chooser, q(ValueKind::ExitShort, t, x)).unwrap();
        assert!((pay - (x - short)).abs() <= 1e-12);
        // Convexity spot check along x.
        let a = chooser_payoff(chooser, t, -0.02).unwrap();
        let m = chooser_payoff(chooser, t, 0.0).unwrap();
        let b = chooser_payoff(chooser, t, 0.02).unwrap();
        assert!(a + b - 2.0 * m >= -1e-10);
    }

    #[test]
    fn indifference_sits_at_zero_by_symmetry() {
        let chooser = &*CHOOSER;
        for t in [0.0, 0.25, 0.5, 0.75] {
            let m = indifference_threshold(chooser, t).unwrap();
            assert!(m.abs() <= 1e-8, "threshold at t = {t} is {m:e}");
        }
        assert!(indifference_threshold(chooser, 1.0).is_err());
    }

    #[test]
    fn fee_free_cost_evaluator_is_bitwise_the_plain_one() {
        let p = fig_params();
        let g = TimeGrid::new(1.0, 40).unwrap();
        let plain = solve_strategy(&p, &g, Strategy::LongShort).unwrap();
        let free = solve_strategy(&p, &g, Strategy::CostExit { cost: 0.0 }).unwrap();
        for (t, x) in [(0.0, 0.0), (0.37, 0.02), (0.9, -0.04)] {
            let a = eval_v_exit_long(&plain, q(ValueKind::ExitLong, t, x)).unwrap();
            let b = eval_v_exit_long_cost(&free, q(ValueKind::CostExit, t, x), 0.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn late_liquidation_curve_exists_early_and_dives_near_the_horizon() {
        let cost = &*COST;
        let curve = gamma_curve(cost, cost.grid(), 0.02).unwrap();
        let n = cost.grid().n_steps();
        assert_eq!(curve.values.len(), n + 1);
        assert!(curve.values[n].is_none(), "undefined at the horizon");
        assert!(curve.values[0].is_some(), "must exist far from the horizon");
        assert!(curve.defined_len() < n, "must disappear before the horizon");
        let boundary = cost.require(BoundaryKind::CostExit).unwrap();
        let p = cost.params();
        let mut prev = f64::INFINITY;
        let mut seen_none_after_some = false;
        for (k, v) in curve.values.iter().enumerate() {
            match v {
                Some(level) => {
                    assert!(!seen_none_after_some, "defined nodes must form a prefix");
                    let t = curve.t_values[k];
                    assert!(*level < boundary.interp(t), "curve must sit below the boundary");
                    assert!(*level <= prev + 1e-9, "curve must fall over time");
                    let residual =
                        exit_long_cost_raw(p, boundary, 0.02, t, *level) - *level - 0.02;
                    assert!(residual.abs() <= 1e-9, "defining residual {residual:e}");
                    prev = *level;
                }
                None => {
                    if k > 0 && curve.values[k - 1].is_some() {
                        seen_none_after_some = true;
                    }
                }
            }
        }
        assert!(gamma_curve(cost, cost.grid(), 0.0).is_err());
        assert!(gamma_curve(&LONG_SHORT, LONG_SHORT.grid(), 0.02).is_err());
    }

    #[test]
    fn queries_are_validated() {
        let sol = &*LONG_SHORT;
        assert!(matches!(
            eval_v_exit_long(sol, q(ValueKind::ExitLong, -0.1, 0.0)),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            eval_v_exit_long(sol, q(ValueKind::ExitLong, 1.5, 0.0)),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            eval_v_exit_long(sol, q(ValueKind::ExitLong, 0.5, f64::NAN)),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            eval_v_exit_long(sol, q(ValueKind::EntryLong, 0.5, 0.0)),
            Err(Error::InvalidParams(_))
        ));
        assert!(matches!(
            eval_v_chooser(sol, q(ValueKind::Chooser, 0.5, 0.0)),
            Err(Error::MissingBoundary(BoundaryKind::ExitShort))
        ));
    }

    #[test]
    fn value_roles_round_trip_through_strings() {
        for kind in [
            ValueKind::ExitLong,
            ValueKind::EntryLong,
            ValueKind::ExitShort,
            ValueKind::EntryShort,
            ValueKind::Chooser,
            ValueKind::ChooserPayoff,
            ValueKind::CostExit,
        ] {
            assert_eq!(kind.name().parse::<ValueKind>().unwrap(), kind);
        }
        assert_eq!("exit-long".parse::<ValueKind>().unwrap(), ValueKind::ExitLong);
        assert!("sideways".parse::<ValueKind>().is_err());
    }

    #[test]
    fn surfaces_agree_with_pointwise_evaluation() {
        let sol = &*LONG_SHORT;
        let mesh = SpaceMesh::new(-0.05, 0.05, 5).unwrap();
        let times = [0.0, 0.5, 1.0];
        let s = surface(sol, ValueKind::ExitLong, &times, &mesh).unwrap();
        assert_eq!(s.x_values.len(), 5);
        assert_eq!(s.values.len(), 5);
        assert_eq!(*s.x_values.last().unwrap(), 0.05);
        for (i, &x) in s.x_values.iter().enumerate() {
            for (j, &t) in s.t_values.iter().enumerate() {
                let direct = eval_v_exit_long(sol, q(ValueKind::ExitLong, t, x)).unwrap();
                assert_eq!(s.values[i][j], direct);
            }
        }
        let again = surface(sol, ValueKind::ExitLong, &times, &mesh).unwrap();
        assert_eq!(s.values, again.values);
        assert!(SpaceMesh::new(0.1, -0.1, 5).is_err());
        assert!(SpaceMesh::new(0.0, 1.0, 1).is_err());
        assert!(surface(sol, ValueKind::ExitLong, &[], &mesh).is_err());
        assert!(surface(sol, ValueKind::ExitLong, &[2.0], &mesh).is_err());
    }
}
