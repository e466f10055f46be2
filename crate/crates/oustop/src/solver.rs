//! Backward recursion for the optimal action boundaries.
//!
//! Each boundary satisfies a value-matching equation at every time node: the
//! immediate payoff of acting equals the discounted terminal settlement plus
//! an integral of a kernel along the not-yet-solved part of the curve. On
//! the shared grid the integral becomes a right-endpoint sum over the nodes
//! after `t_k`, which depends only on already-solved levels, so each step
//! reduces to one scalar root find:
//!
//! ```text
//! exit family:   F(b) = (b - c) - e^{-r(T-t_k)} (m(T-t_k, b) - c) - sum_l w_l K(u_l, b, b_{l})
//! entry family:  F(b) = +-(V_exit(t_k, b) - b)  - sum_l w_l K(u_l, b, b_{l})
//! ```
//!
//! In exact arithmetic F vanishes identically on the whole stopping region,
//! not just at the boundary; the right-endpoint discretization error breaks
//! that degeneracy with a definite sign on each side, so the discrete F has
//! an honest sign change near the true boundary and bracketed root finding
//! is well posed. Terminal nodes are assigned their analytic levels, never
//! solved.

use serde::Serialize;

use crate::grid::{tail_sum, Boundary, BoundaryKind, TimeGrid};
use crate::kernels::{kernel, KernelKind};
use crate::ou::{self, OUParams};
use crate::value;
use crate::{Error, Result};

/// x-tolerance for boundary root finds; node levels are resolved far below
/// every downstream tolerance (symmetry 1e-8, oracle gaps 5e-3).
pub(crate) const ROOT_XTOL: f64 = 1e-10;

/// Monotonicity violations up to this size are floating-point noise and are
/// clamped to the neighboring node; anything larger aborts the solve.
const CLAMP_TOL: f64 = 1e-9;

const MAX_EXPANSIONS: usize = 64;
const MAX_BRENT_ITER: usize = 200;

/// Outcome of one scalar root find.
#[derive(Debug, Clone, Copy)]
pub struct RootResult {
    pub root: f64,
    /// Total function evaluations, bracketing included.
    pub iterations: usize,
    /// f at the returned root; signed.
    pub residual: f64,
}

/// Find a root of `f` near `seed` by geometric bracket expansion followed by
/// Brent iteration to an x-interval of width `xtol`.
///
/// The seed is typically the previously solved node's level, so the bracket
/// is found within a few expansions. Fails with [`Error::RootNotBracketed`]
/// if 64 doublings find no sign change or `f` returns NaN.
pub fn root_find(f: impl FnMut(f64) -> f64, seed: f64, xtol: f64) -> Result<RootResult> {
    root_find_bounded(f, seed, xtol, None, None)
}

/// Like [`root_find`], but probes are clamped to the given window edges.
/// Used where the root is known to lie above a floor (entry boundaries) or
/// below a ceiling (their mirrors); a sign change outside the window is then
/// reported as not bracketed instead of being chased indefinitely.
pub(crate) fn root_find_bounded(
    mut f: impl FnMut(f64) -> f64,
    seed: f64,
    xtol: f64,
    lo_limit: Option<f64>,
    hi_limit: Option<f64>,
) -> Result<RootResult> {
    let not_bracketed = |context: String| Error::RootNotBracketed { seed, context };
    let f0 = f(seed);
    let mut evals = 1usize;
    if f0.is_nan() {
        return Err(not_bracketed("f(seed) is NaN".into()));
    }
    if f0 == 0.0 {
        return Ok(RootResult { root: seed, iterations: evals, residual: 0.0 });
    }
    let seed_positive = f0 > 0.0;
    // Outermost probe on each side whose sign still matches f(seed).
    let (mut lo, mut flo) = (seed, f0);
    let (mut hi, mut fhi) = (seed, f0);
    let mut delta = 1e-4 * (1.0 + seed.abs());
    for _ in 0..MAX_EXPANSIONS {
        let below = match lo_limit {
            Some(limit) => (seed - delta).max(limit),
            None => seed - delta,
        };
        if below < lo {
            let fb = f(below);
            evals += 1;
            if fb.is_nan() {
                return Err(not_bracketed(format!("f({below}) is NaN")));
            }
            if fb == 0.0 {
                return Ok(RootResult { root: below, iterations: evals, residual: 0.0 });
            }
            if (fb > 0.0) != seed_positive {
                return Ok(brent_core(f, below, lo, fb, flo, xtol, evals));
            }
            (lo, flo) = (below, fb);
        }
        let above = match hi_limit {
            Some(limit) => (seed + delta).min(limit),
            None => seed + delta,
        };
        if above > hi {
            let fa = f(above);
            evals += 1;
            if fa.is_nan() {
                return Err(not_bracketed(format!("f({above}) is NaN")));
            }
            if fa == 0.0 {
                return Ok(RootResult { root: above, iterations: evals, residual: 0.0 });
            }
            if (fa > 0.0) != seed_positive {
                return Ok(brent_core(f, hi, above, fhi, fa, xtol, evals));
            }
            (hi, fhi) = (above, fa);
        }
        delta *= 2.0;
    }
    Err(not_bracketed(format!(
        "no sign change in [{lo}, {hi}] after {MAX_EXPANSIONS} expansions"
    )))
}

/// Find a root inside a known window `[lo, hi]`; the endpoints must straddle
/// a sign change.
pub fn root_find_within(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    xtol: f64,
) -> Result<RootResult> {
    let not_bracketed = |context: String| Error::RootNotBracketed { seed: 0.5 * (lo + hi), context };
    if !(lo < hi) {
        return Err(not_bracketed(format!("empty window [{lo}, {hi}]")));
    }
    let flo = f(lo);
    if flo == 0.0 {
        return Ok(RootResult { root: lo, iterations: 1, residual: 0.0 });
    }
    let fhi = f(hi);
    if fhi == 0.0 {
        return Ok(RootResult { root: hi, iterations: 2, residual: 0.0 });
    }
    if flo.is_nan() || fhi.is_nan() {
        return Err(not_bracketed("window endpoint evaluated to NaN".into()));
    }
    if (flo > 0.0) == (fhi > 0.0) {
        return Err(not_bracketed(format!("no sign change across [{lo}, {hi}]")));
    }
    Ok(brent_core(f, lo, hi, flo, fhi, xtol, 2))
}

/// Brent's method on a verified bracket: inverse quadratic / secant steps
/// guarded by bisection, iterated until the enclosing interval collapses to
/// `2 eps |b| + xtol / 2`.
pub(crate) fn brent_core(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    xtol: f64,
    mut evals: usize,
) -> RootResult {
    debug_assert!((fa > 0.0) != (fb > 0.0), "brent_core needs a sign change");
    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..MAX_BRENT_ITER {
        if (fb > 0.0) == (fc > 0.0) {
            (c, fc) = (a, fa);
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            break;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let inv = fa / fc;
                let rat = fb / fc;
                p = s * (2.0 * xm * inv * (inv - rat) - (b - a) * (rat - 1.0));
                q = (inv - 1.0) * (rat - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let accept_interp = 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs());
            if accept_interp {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        evals += 1;
        debug_assert!(!fb.is_nan(), "f({b}) is NaN inside brent");
        if fb.is_nan() {
            break;
        }
    }
    RootResult { root: b, iterations: evals, residual: fb }
}

/// Clamp sub-noise monotonicity violations to the later node, reject the
/// rest. Backward in time, a curve decreasing in t must not drop below its
/// later neighbor and an increasing one must not rise above it.
fn enforce_monotone(
    kind: BoundaryKind,
    step: usize,
    t: f64,
    solved: f64,
    later: f64,
) -> Result<f64> {
    let violation = if kind.decreasing_in_time() { later - solved } else { solved - later };
    if violation <= 0.0 {
        Ok(solved)
    } else if violation <= CLAMP_TOL {
        Ok(later)
    } else {
        Err(Error::NonMonotone { kind, step, t, violation })
    }
}

/// Root-finder effort for one solved boundary: function evaluations and the
/// signed residual left at each node. Terminal nodes are assigned, so their
/// entries are zero.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryDiag {
    pub kind: BoundaryKind,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

impl BoundaryDiag {
    pub fn total_iterations(&self) -> usize {
        self.iterations.iter().sum()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Diagnostics for every boundary of a strategy solve, in role order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveDiagnostics {
    pub boundaries: Vec<BoundaryDiag>,
}

impl SolveDiagnostics {
    pub fn total_iterations(&self) -> usize {
        self.boundaries.iter().map(BoundaryDiag::total_iterations).sum()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.boundaries.iter().fold(0.0, |m, b| m.max(b.max_abs_residual()))
    }
}

fn solve_exit_family(
    p: &OUParams,
    grid: &TimeGrid,
    kind: BoundaryKind,
    cost: f64,
) -> Result<(Boundary, BoundaryDiag)> {
    p.validate()?;
    if !(cost.is_finite() && cost >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "exit fee must be finite and nonnegative, got {cost}"
        )));
    }
    let kernel_kind = match kind {
        // One numeric path for the frictionless and fee cases: at cost = 0
        // the fee terms vanish identically, so the two solves agree bitwise.
        BoundaryKind::ExitLong | BoundaryKind::CostExit => KernelKind::ExitLongWithCost { cost },
        BoundaryKind::ExitShort => KernelKind::ExitShort,
        other => unreachable!("{other:?} is not an exit-family role"),
    };
    let n = grid.n_steps();
    let mut values = vec![0.0; n + 1];
    let mut iterations = vec![0usize; n + 1];
    let mut residuals = vec![0.0f64; n + 1];
    values[n] = match kind {
        BoundaryKind::CostExit => (p.mu * p.theta + p.r * cost) / (p.mu + p.r),
        _ => p.x_star(),
    };
    for k in (0..n).rev() {
        let t_k = grid.node(k);
        let span = grid.horizon() - t_k;
        let f = |b: f64| {
            let settle = (-p.r * span).exp() * (ou::transition_mean(p, span, b) - cost);
            let memory = tail_sum(grid, t_k, |idx, _, u| {
                kernel(p, &kernel_kind, t_k, u, b, values[idx])
            });
            (b - cost) - settle - memory
        };
        let found = root_find(f, values[k + 1], ROOT_XTOL).map_err(|e| locate(e, kind, k, t_k))?;
        values[k] = enforce_monotone(kind, k, t_k, found.root, values[k + 1])?;
        iterations[k] = found.iterations;
        residuals[k] = found.residual;
    }
    let boundary = Boundary::from_parts(kind, *grid, values)?;
    Ok((boundary, BoundaryDiag { kind, iterations, residuals }))
}

fn solve_entry_family(
    p: &OUParams,
    grid: &TimeGrid,
    kind: BoundaryKind,
    exit: &Boundary,
    v_exit: impl Fn(f64, f64) -> f64,
) -> Result<(Boundary, BoundaryDiag)> {
    p.validate()?;
    let wanted = match kind {
        BoundaryKind::EntryLong => BoundaryKind::ExitLong,
        BoundaryKind::EntryShort => BoundaryKind::ExitShort,
        other => unreachable!("{other:?} is not an entry-family role"),
    };
    if exit.kind() != wanted {
        return Err(Error::InvalidParams(format!(
            "solving {} needs a {} boundary, got {}",
            kind.role_name(),
            wanted.role_name(),
            exit.kind().role_name()
        )));
    }
    if exit.grid() != grid {
        return Err(Error::InvalidParams(
            "entry and exit boundaries must share one time grid".into(),
        ));
    }
    let kernel_kind = match kind {
        BoundaryKind::EntryLong => KernelKind::EntryLong { exit_boundary: exit },
        _ => KernelKind::EntryShort,
    };
    // The entry curves stay within a few stationary deviations of theta;
    // ten of them bound the search without constraining any real root.
    let reach = 10.0 * p.stationary_sd();
    let n = grid.n_steps();
    let mut values = vec![0.0; n + 1];
    let mut iterations = vec![0usize; n + 1];
    let mut residuals = vec![0.0f64; n + 1];
    values[n] = p.x_star();
    for k in (0..n).rev() {
        let t_k = grid.node(k);
        let f = |b: f64| {
            let gap = match kind {
                BoundaryKind::EntryLong => v_exit(t_k, b) - b,
                _ => b - v_exit(t_k, b),
            };
            let memory = tail_sum(grid, t_k, |idx, _, u| {
                kernel(p, &kernel_kind, t_k, u, b, values[idx])
            });
            gap - memory
        };
        let found = match kind {
            BoundaryKind::EntryLong => {
                root_find_bounded(f, values[k + 1], ROOT_XTOL, Some(p.theta - reach), None)
            }
            _ => root_find_bounded(f, values[k + 1], ROOT_XTOL, None, Some(p.theta + reach)),
        }
        .map_err(|e| locate(e, kind, k, t_k))?;
        values[k] = enforce_monotone(kind, k, t_k, found.root, values[k + 1])?;
        iterations[k] = found.iterations;
        residuals[k] = found.residual;
    }
    let boundary = Boundary::from_parts(kind, *grid, values)?;
    Ok((boundary, BoundaryDiag { kind, iterations, residuals }))
}

/// Tag a bracketing failure with the boundary and step it happened in.
fn locate(e: Error, kind: BoundaryKind, step: usize, t: f64) -> Error {
    match e {
        Error::RootNotBracketed { seed, context } => Error::RootNotBracketed {
            seed,
            context: format!("{} step {step} (t = {t}): {context}", kind.role_name()),
        },
        other => other,
    }
}

/// Optimal level to liquidate a long position, backward from `x*`.
pub fn solve_exit_long(p: &OUParams, grid: &TimeGrid) -> Result<(Boundary, BoundaryDiag)> {
    solve_exit_family(p, grid, BoundaryKind::ExitLong, 0.0)
}

/// Optimal level to buy back a short position, backward from `x*`.
pub fn solve_exit_short(p: &OUParams, grid: &TimeGrid) -> Result<(Boundary, BoundaryDiag)> {
    solve_exit_family(p, grid, BoundaryKind::ExitShort, 0.0)
}

/// Optimal liquidation level when selling pays a fixed fee; terminal level
/// shifts up to `(mu theta + r c)/(mu + r)`. At `cost = 0` this returns the
/// frictionless curve bit for bit.
pub fn solve_exit_long_cost(
    p: &OUParams,
    grid: &TimeGrid,
    cost: f64,
) -> Result<(Boundary, BoundaryDiag)> {
    solve_exit_family(p, grid, BoundaryKind::CostExit, cost)
}

/// Optimal level to open a long position, given the solved long exit curve
/// and an evaluator for the exit value function on the same grid.
pub fn solve_entry_long(
    p: &OUParams,
    grid: &TimeGrid,
    exit: &Boundary,
    v_exit: impl Fn(f64, f64) -> f64,
) -> Result<(Boundary, BoundaryDiag)> {
    solve_entry_family(p, grid, BoundaryKind::EntryLong, exit, v_exit)
}

/// Optimal level to open a short position, mirror of [`solve_entry_long`]
/// against the short exit curve and its value evaluator.
pub fn solve_entry_short(
    p: &OUParams,
    grid: &TimeGrid,
    exit: &Boundary,
    v_exit: impl Fn(f64, f64) -> f64,
) -> Result<(Boundary, BoundaryDiag)> {
    solve_entry_family(p, grid, BoundaryKind::EntryShort, exit, v_exit)
}

/// A trading plan determining which boundaries are solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Wait to buy the spread, then wait to sell it.
    LongShort,
    /// Wait to short the spread, then wait to buy it back.
    ShortLong,
    /// Decide long or short at entry time; solved via both exit problems.
    Chooser,
    /// Already long; liquidation pays a fixed fee.
    CostExit { cost: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::LongShort => "long-short",
            Strategy::ShortLong => "short-long",
            Strategy::Chooser => "chooser",
            Strategy::CostExit { .. } => "cost-exit",
        }
    }

    /// Boundary roles this strategy solves, in output order.
    pub fn roles(&self) -> &'static [BoundaryKind] {
        match self {
            Strategy::LongShort => &[BoundaryKind::ExitLong, BoundaryKind::EntryLong],
            Strategy::ShortLong => &[BoundaryKind::ExitShort, BoundaryKind::EntryShort],
            Strategy::Chooser => &[BoundaryKind::ExitLong, BoundaryKind::ExitShort],
            Strategy::CostExit { .. } => &[BoundaryKind::CostExit],
        }
    }

    pub fn fee(&self) -> f64 {
        match self {
            Strategy::CostExit { cost } => *cost,
            _ => 0.0,
        }
    }
}

/// Solved boundaries for one strategy, plus everything needed to evaluate
/// values and run simulations against them.
#[derive(Debug, Clone, Serialize)]
pub struct StrategySolution {
    params: OUParams,
    grid: TimeGrid,
    strategy: Strategy,
    boundaries: Vec<Boundary>,
    diagnostics: SolveDiagnostics,
}

impl StrategySolution {
    /// Bundle externally produced boundaries (a reloaded file, a test rig)
    /// into a solution. Checks structure only: the role set must match the
    /// strategy and all boundaries must share `grid`. Curve-level properties
    /// (monotonicity, ordering) are deliberately not enforced here so that
    /// stored artifacts can be loaded first and judged afterwards.
    pub fn from_parts(
        params: OUParams,
        grid: TimeGrid,
        strategy: Strategy,
        boundaries: Vec<Boundary>,
        diagnostics: SolveDiagnostics,
    ) -> Result<Self> {
        params.validate()?;
        let roles = strategy.roles();
        if boundaries.len() != roles.len()
            || roles.iter().any(|r| boundaries.iter().all(|b| b.kind() != *r))
        {
            let got: Vec<&str> = boundaries.iter().map(|b| b.kind().role_name()).collect();
            return Err(Error::InvalidParams(format!(
                "{} needs exactly the roles {:?}, got {:?}",
                strategy.name(),
                roles.iter().map(|r| r.role_name()).collect::<Vec<_>>(),
                got
            )));
        }
        if boundaries.iter().any(|b| b.grid() != &grid) {
            return Err(Error::InvalidParams(
                "all boundaries of a solution must share its time grid".into(),
            ));
        }
        let mut ordered = Vec::with_capacity(roles.len());
        for role in roles {
            let b = boundaries.iter().find(|b| b.kind() == *role).expect("role checked above");
            ordered.push(b.clone());
        }
        Ok(Self { params, grid, strategy, boundaries: ordered, diagnostics })
    }

    pub fn params(&self) -> &OUParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundaries
    }

    pub fn diagnostics(&self) -> &SolveDiagnostics {
        &self.diagnostics
    }

    pub fn boundary(&self, kind: BoundaryKind) -> Option<&Boundary> {
        self.boundaries.iter().find(|b| b.kind() == kind)
    }

    /// Boundary for `kind`, or [`Error::MissingBoundary`] if this strategy
    /// does not carry it.
    pub fn require(&self, kind: BoundaryKind) -> Result<&Boundary> {
        self.boundary(kind).ok_or(Error::MissingBoundary(kind))
    }
}

/// Solve every boundary a strategy needs, wiring entry solves to the exit
/// value evaluators on the same grid.
pub fn solve_strategy(
    p: &OUParams,
    grid: &TimeGrid,
    strategy: Strategy,
) -> Result<StrategySolution> {
    let (bounds, diags): (Vec<Boundary>, Vec<BoundaryDiag>) = match strategy {
        Strategy::LongShort => {
            let (exit, d_exit) = solve_exit_long(p, grid)?;
            let (entry, d_entry) =
                solve_entry_long(p, grid, &exit, |t, x| value::exit_long_raw(p, &exit, t, x))?;
            debug_assert!(ordered_about_star(p, &entry, &exit));
            (vec![exit, entry], vec![d_exit, d_entry])
        }
        Strategy::ShortLong => {
            let (exit, d_exit) = solve_exit_short(p, grid)?;
            let (entry, d_entry) =
                solve_entry_short(p, grid, &exit, |t, x| value::exit_short_raw(p, &exit, t, x))?;
            debug_assert!(ordered_about_star(p, &exit, &entry));
            (vec![exit, entry], vec![d_exit, d_entry])
        }
        Strategy::Chooser => {
            let (long, d_long) = solve_exit_long(p, grid)?;
            let (short, d_short) = solve_exit_short(p, grid)?;
            debug_assert!(ordered_about_star(p, &short, &long));
            (vec![long, short], vec![d_long, d_short])
        }
        Strategy::CostExit { cost } => {
            let (b, d) = solve_exit_long_cost(p, grid, cost)?;
            (vec![b], vec![d])
        }
    };
    StrategySolution::from_parts(*p, *grid, strategy, bounds, SolveDiagnostics {
        boundaries: diags,
    })
}

/// lower(t) <= x* <= upper(t) at every node; solver-output sanity.
fn ordered_about_star(p: &OUParams, lower: &Boundary, upper: &Boundary) -> bool {
    let star = p.x_star();
    lower
        .values()
        .iter()
        .zip(upper.values())
        .all(|(lo, hi)| *lo <= star + 1e-12 && star - 1e-12 <= *hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_params() -> OUParams {
        OUParams::new(16.0, 0.0, 0.16, 0.01, 1.0).unwrap()
    }

    fn small_grid() -> TimeGrid {
        TimeGrid::new(1.0, 20).unwrap()
    }

    #[test]
    fn root_find_on_a_line() {
        let r = root_find(|x| x - 1.0, 0.0, 1e-12).unwrap();
        assert!((r.root - 1.0).abs() <= 1e-12);
        assert!(r.residual.abs() <= 1e-12);
        assert!(r.iterations >= 2);
    }

    #[test]
    fn root_find_on_a_cubic_with_flat_root() {
        // f'(root) = 0, so convergence is bisection-paced; the x tolerance
        // still pins the root itself, not just the residual.
        let a = 0.3;
        let r = root_find(|x| (x - a).powi(3), -2.0, 1e-10).unwrap();
        assert!((r.root - a).abs() <= 1e-10, "root {} off by {:e}", r.root, (r.root - a).abs());
    }

    #[test]
    fn root_find_reports_hopeless_functions() {
        let err = root_find(|x| 1.0 + x * x, 0.0, 1e-10).unwrap_err();
        assert!(matches!(err, Error::RootNotBracketed { .. }));
        let err = root_find(|_| f64::NAN, 0.5, 1e-10).unwrap_err();
        assert!(matches!(err, Error::RootNotBracketed { .. }));
    }

    #[test]
    fn bounded_search_respects_its_floor() {
        // Root at -5 is below the floor at -1, so it must not be found.
        let err = root_find_bounded(|x| x + 5.0, 0.0, 1e-10, Some(-1.0), None).unwrap_err();
        assert!(matches!(err, Error::RootNotBracketed { .. }));
        // Without the floor the same search succeeds.
        let ok = root_find_bounded(|x| x + 5.0, 0.0, 1e-10, None, None).unwrap();
        assert!((ok.root + 5.0).abs() <= 1e-10);
    }

    #[test]
    fn windowed_search_needs_a_sign_change() {
        let ok = root_find_within(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((ok.root - std::f64::consts::SQRT_2).abs() <= 1e-12);
        assert!(root_find_within(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
        assert!(root_find_within(|x| x, 1.0, -1.0, 1e-12).is_err());
    }

    #[test]
    fn clamp_absorbs_noise_and_rejects_real_violations() {
        let kind = BoundaryKind::ExitLong;
        assert_eq!(enforce_monotone(kind, 3, 0.1, 0.5, 0.4).unwrap(), 0.5);
        // 5e-10 below the later node: noise, clamped up.
        assert_eq!(enforce_monotone(kind, 3, 0.1, 0.4 - 5e-10, 0.4).unwrap(), 0.4);
        let err = enforce_monotone(kind, 3, 0.1, 0.39, 0.4).unwrap_err();
        assert!(matches!(err, Error::NonMonotone { step: 3, .. }));
        // Increasing roles measure the violation with the opposite sign.
        let kind = BoundaryKind::EntryLong;
        assert_eq!(enforce_monotone(kind, 1, 0.0, -0.5, -0.4).unwrap(), -0.5);
        assert!(enforce_monotone(kind, 1, 0.0, -0.39, -0.4).is_err());
    }

    #[test]
    fn exit_long_terminates_at_x_star_and_decreases() {
        let p = fig_params();
        let g = small_grid();
        let (b, diag) = solve_exit_long(&p, &g).unwrap();
        assert_eq!(b.terminal(), p.x_star());
        assert_eq!(b.terminal(), 0.0);
        // The clamp guarantees exact non-strict ordering; far from the
        // horizon the curve is exponentially flat, so neighbors may tie.
        for w in b.values().windows(2) {
            assert!(w[0] >= w[1], "exit curve must not increase toward the horizon");
        }
        assert!(b.values()[0] > 0.01, "the curve must move materially off its terminal level");
        assert!(diag.iterations[g.n_steps()] == 0);
        assert!(diag.iterations[0] > 0);
        assert!(diag.max_abs_residual() <= 1e-9);
    }

    #[test]
    fn zero_fee_solve_is_bitwise_the_frictionless_solve() {
        let p = fig_params();
        let g = small_grid();
        let (plain, _) = solve_exit_long(&p, &g).unwrap();
        let (fee, _) = solve_exit_long_cost(&p, &g, 0.0).unwrap();
        assert_eq!(plain.values(), fee.values());
    }

    #[test]
    fn fee_shifts_the_terminal_level_up() {
        let p = fig_params();
        let g = small_grid();
        let cost = 0.02;
        let (b, _) = solve_exit_long_cost(&p, &g, cost).unwrap();
        assert_eq!(b.terminal(), (p.mu * p.theta + p.r * cost) / (p.mu + p.r));
        let (plain, _) = solve_exit_long(&p, &g).unwrap();
        for (with_fee, without) in b.values().iter().zip(plain.values()) {
            assert!(with_fee >= without, "a fee can only raise the exit level");
        }
        assert!(solve_exit_long_cost(&p, &g, -0.01).is_err());
    }

    #[test]
    fn short_exit_mirrors_long_exit_at_zero_theta() {
        let p = fig_params();
        let g = small_grid();
        let (long, _) = solve_exit_long(&p, &g).unwrap();
        let (short, _) = solve_exit_short(&p, &g).unwrap();
        for (l, s) in long.values().iter().zip(short.values()) {
            assert!((l + s).abs() <= 1e-10, "mirror gap {:e}", (l + s).abs());
        }
        for w in short.values().windows(2) {
            assert!(w[0] <= w[1], "short exit must not decrease toward the horizon");
        }
    }

    #[test]
    fn entry_solver_checks_its_inputs() {
        let p = fig_params();
        let g = small_grid();
        let (short_exit, _) = solve_exit_short(&p, &g).unwrap();
        let err = solve_entry_long(&p, &g, &short_exit, |_, x| x).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
        let other = TimeGrid::new(1.0, 30).unwrap();
        let (exit, _) = solve_exit_long(&p, &other).unwrap();
        let err = solve_entry_long(&p, &g, &exit, |_, x| x).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
    }

    #[test]
    fn long_short_strategy_solves_an_ordered_pair() {
        let p = fig_params();
        let g = small_grid();
        let sol = solve_strategy(&p, &g, Strategy::LongShort).unwrap();
        let exit = sol.require(BoundaryKind::ExitLong).unwrap();
        let entry = sol.require(BoundaryKind::EntryLong).unwrap();
        for k in 0..g.n_steps() {
            assert!(
                entry.value_at_node(k) < 0.0 && 0.0 < exit.value_at_node(k),
                "node {k}: entry {} exit {}",
                entry.value_at_node(k),
                exit.value_at_node(k)
            );
        }
        for w in entry.values().windows(2) {
            assert!(w[0] <= w[1], "entry curve must not decrease toward the horizon");
        }
        assert_eq!(entry.terminal(), 0.0);
        assert!(matches!(
            sol.require(BoundaryKind::CostExit).unwrap_err(),
            Error::MissingBoundary(BoundaryKind::CostExit)
        ));
        assert_eq!(sol.diagnostics().boundaries.len(), 2);
        assert!(sol.diagnostics().total_iterations() > 0);
    }

    #[test]
    fn strategies_carry_exactly_their_roles() {
        let p = fig_params();
        let g = small_grid();
        for (strategy, roles) in [
            (Strategy::LongShort, vec![BoundaryKind::ExitLong, BoundaryKind::EntryLong]),
            (Strategy::ShortLong, vec![BoundaryKind::ExitShort, BoundaryKind::EntryShort]),
            (Strategy::Chooser, vec![BoundaryKind::ExitLong, BoundaryKind::ExitShort]),
            (Strategy::CostExit { cost: 0.02 }, vec![BoundaryKind::CostExit]),
        ] {
            let sol = solve_strategy(&p, &g, strategy).unwrap();
            let got: Vec<BoundaryKind> = sol.boundaries().iter().map(|b| b.kind()).collect();
            assert_eq!(got, roles, "{}", strategy.name());
        }
    }

    #[test]
    fn from_parts_rejects_role_mismatches() {
        let p = fig_params();
        let g = small_grid();
        let (exit, d) = solve_exit_long(&p, &g).unwrap();
        let err = StrategySolution::from_parts(
            p,
            g,
            Strategy::LongShort,
            vec![exit.clone()],
            SolveDiagnostics { boundaries: vec![d] },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
        let ok = StrategySolution::from_parts(
            p,
            g,
            Strategy::CostExit { cost: 0.0 },
            vec![Boundary::from_parts(BoundaryKind::CostExit, g, exit.values().to_vec()).unwrap()],
            SolveDiagnostics::default(),
        );
        assert!(ok.is_ok());
    }
}
