//! Bermudan dynamic-programming lattice.
//!
//! Backward induction on a uniform space-time lattice: at each step the
//! continuation value is the discounted expectation of the next slice under
//! the exact one-step transition law, computed by Gauss-Legendre quadrature
//! of the Gaussian integrand over eight standard deviations. Entry stages
//! roll their exit stage alongside and use it as the exercise payoff.
//!
//! Because the step distribution only depends on the node, the quadrature
//! samples and interpolation stencils are precomputed once; a backward step
//! is then a fixed sparse weight matrix applied to the value slice.

use rayon::prelude::*;

use crate::grid::BoundaryKind;
use crate::ou::{self, OUParams};
use crate::{Error, Result};

/// Standardized half-width of the quadrature window; the omitted Gaussian
/// mass is below 1e-15.
const QUAD_REACH: f64 = 8.0;

/// Lattice geometry: `n_time` backward steps over the horizon and
/// `n_space` uniform nodes spanning `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub n_time: usize,
    pub n_space: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub quad_order: usize,
}

impl LatticeSpec {
    pub fn new(
        n_time: usize,
        n_space: usize,
        x_min: f64,
        x_max: f64,
        quad_order: usize,
    ) -> Result<Self> {
        if n_time < 1 {
            return Err(Error::InvalidParams("lattice needs at least one time step".into()));
        }
        if n_space < 5 {
            return Err(Error::InvalidParams(format!(
                "lattice needs at least 5 space nodes, got {n_space}"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidParams(format!(
                "lattice needs finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if quad_order < 2 {
            return Err(Error::InvalidParams(format!(
                "quadrature order must be at least 2, got {quad_order}"
            )));
        }
        Ok(Self { n_time, n_space, x_min, x_max, quad_order })
    }

    /// Lattice centered on the process mean, eight stationary deviations
    /// each side, 64-point quadrature.
    pub fn centered(p: &OUParams, n_time: usize, n_space: usize) -> Result<Self> {
        p.validate()?;
        let reach = 8.0 * p.stationary_sd();
        Self::new(n_time, n_space, p.theta - reach, p.theta + reach, 64)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_space - 1) as f64
    }

    /// Space nodes, endpoints exact.
    pub fn points(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_space)
            .map(|i| if i + 1 == self.n_space { self.x_max } else { self.x_min + i as f64 * dx })
            .collect()
    }
}

/// Which stopping problem the lattice prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    ExitLong,
    ExitShort,
    EntryLong,
    EntryShort,
    CostExit(f64),
}

/// Where the stopping region sits relative to the frontier.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Region {
    Upper,
    Lower,
}

impl Stage {
    /// Boundary role this stage's frontier validates.
    pub fn role(&self) -> BoundaryKind {
        match self {
            Stage::ExitLong => BoundaryKind::ExitLong,
            Stage::ExitShort => BoundaryKind::ExitShort,
            Stage::EntryLong => BoundaryKind::EntryLong,
            Stage::EntryShort => BoundaryKind::EntryShort,
            Stage::CostExit(_) => BoundaryKind::CostExit,
        }
    }

    fn region(&self) -> Region {
        match self {
            Stage::ExitLong | Stage::CostExit(_) | Stage::EntryShort => Region::Upper,
            Stage::ExitShort | Stage::EntryLong => Region::Lower,
        }
    }

    fn is_entry(&self) -> bool {
        matches!(self, Stage::EntryLong | Stage::EntryShort)
    }

    /// The short side's exit problem is an infimum, so its lattice uses min
    /// where the long side uses max.
    fn minimizes_exit(&self) -> bool {
        matches!(self, Stage::ExitShort | Stage::EntryShort)
    }
}

/// Value slice at t = 0 plus the exercise frontier at every time step.
#[derive(Debug, Clone)]
pub struct DpResult {
    pub stage: Stage,
    pub spec: LatticeSpec,
    pub x_nodes: Vec<f64>,
    pub t0_values: Vec<f64>,
    /// Per time step, the node index where the contiguous stopping suffix
    /// (upper regions) or prefix (lower regions) begins or ends; `None`
    /// where no node stops. The terminal entry is always `None`: there is
    /// no decision at the horizon.
    pub frontiers: Vec<Option<usize>>,
}

impl DpResult {
    /// Frontier positions in spread units.
    pub fn frontier_x(&self) -> Vec<Option<f64>> {
        self.frontiers.iter().map(|f| f.map(|i| self.x_nodes[i])).collect()
    }

    /// Value at the node nearest to `x` in the t = 0 slice.
    pub fn value_near(&self, x: f64) -> f64 {
        let dx = self.spec.dx();
        let i = ((x - self.spec.x_min) / dx).round().clamp(0.0, (self.spec.n_space - 1) as f64);
        self.t0_values[i as usize]
    }
}

/// One backward step as a precomputed sparse weight matrix: row i holds the
/// quadrature-times-interpolation weights that turn the next value slice
/// into the continuation value at node i, discount included.
struct Propagator {
    disc: f64,
    offsets: Vec<u32>,
    pairs: Vec<(u32, f64)>,
}

impl Propagator {
    fn build(p: &OUParams, spec: &LatticeSpec, h: f64) -> Self {
        let xs = spec.points();
        let dx = spec.dx();
        let sd = ou::transition_law(p, h, 0.0).sd();
        let (raw_nodes, raw_weights) = gauss_legendre(spec.quad_order);
        // Affine map from [-1, 1] to the standardized window.
        let quad: Vec<(f64, f64)> = raw_nodes
            .iter()
            .zip(&raw_weights)
            .map(|(&z, &w)| {
                let zz = QUAD_REACH * z;
                (zz, QUAD_REACH * w * ou::std_normal_pdf(zz))
            })
            .collect();
        let mut offsets = Vec::with_capacity(spec.n_space + 1);
        let mut pairs = Vec::with_capacity(spec.n_space * spec.quad_order * 4);
        offsets.push(0u32);
        for &x in &xs {
            let mean = ou::transition_mean(p, h, x);
            for &(z, w) in &quad {
                push_stencil(&xs, spec.x_min, dx, mean + sd * z, w, &mut pairs);
            }
            offsets.push(pairs.len() as u32);
        }
        Propagator { disc: (-p.r * h).exp(), offsets, pairs }
    }

    fn apply(&self, values: &[f64]) -> Vec<f64> {
        (0..self.offsets.len() - 1)
            .into_par_iter()
            .map(|i| {
                let lo = self.offsets[i] as usize;
                let hi = self.offsets[i + 1] as usize;
                let mut acc = 0.0;
                for &(j, w) in &self.pairs[lo..hi] {
                    acc += w * values[j as usize];
                }
                acc * self.disc
            })
            .collect()
    }
}

/// Append interpolation weights for reading a value slice at `y`, scaled by
/// `scale`: four-point cubic inside, linear in the edge cells and linearly
/// continued beyond the domain.
fn push_stencil(xs: &[f64], x_min: f64, dx: f64, y: f64, scale: f64, out: &mut Vec<(u32, f64)>) {
    let last = xs.len() - 1;
    if y <= xs[0] {
        let w = (y - xs[0]) / dx;
        out.push((0, (1.0 - w) * scale));
        out.push((1, w * scale));
        return;
    }
    if y >= xs[last] {
        let w = (y - xs[last - 1]) / dx;
        out.push(((last - 1) as u32, (1.0 - w) * scale));
        out.push((last as u32, w * scale));
        return;
    }
    let cell = (((y - x_min) / dx).floor() as usize).min(last - 1);
    if cell == 0 || cell + 2 > last {
        let w = (y - xs[cell]) / dx;
        out.push((cell as u32, (1.0 - w) * scale));
        out.push(((cell + 1) as u32, w * scale));
        return;
    }
    let i0 = cell - 1;
    let u = (y - xs[i0]) / dx;
    out.push((i0 as u32, -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0 * scale));
    out.push(((i0 + 1) as u32, u * (u - 2.0) * (u - 3.0) / 2.0 * scale));
    out.push(((i0 + 2) as u32, -u * (u - 1.0) * (u - 3.0) / 2.0 * scale));
    out.push(((i0 + 3) as u32, u * (u - 1.0) * (u - 2.0) / 6.0 * scale));
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "quadrature order must be at least 2");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (pn, dpn) = legendre_with_derivative(n, z);
            let dz = pn / dpn;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, dpn) = legendre_with_derivative(n, z);
        let w = 2.0 / ((1.0 - z * z) * dpn * dpn);
        // The initial guesses run from the +1 end downward.
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    for k in 2..=n {
        let next = ((2 * k - 1) as f64 * x * cur - (k - 1) as f64 * prev) / k as f64;
        prev = cur;
        cur = next;
    }
    let deriv = n as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, deriv)
}

/// Contiguous stopping suffix start (upper regions) or prefix end (lower).
fn stop_frontier(stops: &[bool], region: Region) -> Option<usize> {
    match region {
        Region::Upper => {
            if !*stops.last().unwrap() {
                return None;
            }
            let mut i = stops.len() - 1;
            while i > 0 && stops[i - 1] {
                i -= 1;
            }
            Some(i)
        }
        Region::Lower => {
            if !stops[0] {
                return None;
            }
            let mut i = 0;
            while i + 1 < stops.len() && stops[i + 1] {
                i += 1;
            }
            Some(i)
        }
    }
}

/// Price `stage` on the lattice by backward induction. Returns the t = 0
/// value slice and the exercise frontier per time step.
pub fn dp_value(p: &OUParams, spec: &LatticeSpec, stage: Stage) -> Result<DpResult> {
    p.validate()?;
    let fee = match stage {
        Stage::CostExit(c) => {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidParams(format!(
                    "exit fee must be finite and nonnegative, got {c}"
                )));
            }
            c
        }
        _ => 0.0,
    };
    let xs = spec.points();
    let h = p.horizon / spec.n_time as f64;
    let prop = Propagator::build(p, spec, h);
    let exit_payoff: Vec<f64> = xs.iter().map(|x| x - fee).collect();
    let minimize = stage.minimizes_exit();
    let mut exit_slab = exit_payoff.clone();
    // Entering at the horizon round-trips instantly, so entry starts at 0.
    let mut entry_slab = stage.is_entry().then(|| vec![0.0; xs.len()]);
    let mut frontiers: Vec<Option<usize>> = vec![None; spec.n_time + 1];
    let mut stops = vec![false; xs.len()];
    for step in (0..spec.n_time).rev() {
        let cont = prop.apply(&exit_slab);
        for i in 0..xs.len() {
            let pay = exit_payoff[i];
            let (v, stop) = if minimize {
                (pay.min(cont[i]), pay <= cont[i])
            } else {
                (pay.max(cont[i]), pay >= cont[i])
            };
            exit_slab[i] = v;
            stops[i] = stop;
        }
        if let Some(entry) = entry_slab.as_mut() {
            let cont = prop.apply(entry);
            for i in 0..xs.len() {
                let pay = match stage {
                    Stage::EntryLong => exit_slab[i] - xs[i],
                    _ => xs[i] - exit_slab[i],
                };
                entry[i] = pay.max(cont[i]);
                // Ties do not stop: far from the action the entry payoff is
                // exactly zero and waiting still has value.
                stops[i] = pay > cont[i];
            }
        }
        frontiers[step] = stop_frontier(&stops, stage.region());
    }
    let t0_values = entry_slab.unwrap_or(exit_slab);
    Ok(DpResult { stage, spec: *spec, x_nodes: xs, t0_values, frontiers })
}

/// [`dp_value`], then rerun on a domain widened by half the node count on
/// each side (cell size preserved) and demand the t = 0 values over the mid
/// 60% of the original domain move by at most `tol`. Catches domains too
/// narrow for the boundary effects they truncate.
pub fn dp_value_checked(
    p: &OUParams,
    spec: &LatticeSpec,
    stage: Stage,
    tol: f64,
) -> Result<DpResult> {
    assert!(tol > 0.0, "tolerance must be positive");
    let base = dp_value(p, spec, stage)?;
    let pad = (spec.n_space - 1) / 2;
    let dx = spec.dx();
    let wide_spec = LatticeSpec::new(
        spec.n_time,
        spec.n_space + 2 * pad,
        spec.x_min - pad as f64 * dx,
        spec.x_max + pad as f64 * dx,
        spec.quad_order,
    )?;
    let wide = dp_value(p, &wide_spec, stage)?;
    let span = spec.x_max - spec.x_min;
    let (lo, hi) = (spec.x_min + 0.2 * span, spec.x_max - 0.2 * span);
    let mut moved = 0.0f64;
    for (i, &x) in base.x_nodes.iter().enumerate() {
        if x < lo || x > hi {
            continue;
        }
        moved = moved.max((base.t0_values[i] - wide.t0_values[i + pad]).abs());
    }
    if moved > tol {
        return Err(Error::BoundsTooTight { moved, tolerance: tol });
    }
    Ok(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_params() -> OUParams {
        OUParams::new(16.0, 0.0, 0.16, 0.01, 1.0).unwrap()
    }

    #[test]
    fn quadrature_integrates_low_polynomials_exactly() {
        for order in [2, 8, 64] {
            let (nodes, weights) = gauss_legendre(order);
            let total: f64 = weights.iter().sum();
            assert!((total - 2.0).abs() <= 1e-14, "order {order}: weight sum {total}");
            let second: f64 = nodes.iter().zip(&weights).map(|(z, w)| w * z * z).sum();
            assert!((second - 2.0 / 3.0).abs() <= 1e-14, "order {order}: {second}");
            for (i, z) in nodes.iter().enumerate() {
                assert_eq!(*z, -nodes[nodes.len() - 1 - i], "nodes must be symmetric");
            }
        }
        let (nodes, weights) = gauss_legendre(64);
        let fourth: f64 = nodes.iter().zip(&weights).map(|(z, w)| w * z.powi(4)).sum();
        assert!((fourth - 2.0 / 5.0).abs() <= 1e-14);
    }

    #[test]
    fn single_step_lattice_matches_the_closed_form() {
        // With one step the value is max(x, e^{-rT} E[X_T]) and the
        // expectation of a linear payoff is the transition mean, which the
        // cubic-with-linear-tails interpolation reproduces exactly.
        let p = fig_params();
        let spec = LatticeSpec::centered(&p, 1, 201).unwrap();
        let res = dp_value(&p, &spec, Stage::ExitLong).unwrap();
        for (i, &x) in res.x_nodes.iter().enumerate() {
            let expect = x.max((-p.r * p.horizon).exp() * ou::transition_mean(&p, p.horizon, x));
            assert!(
                (res.t0_values[i] - expect).abs() <= 1e-12,
                "node {i} (x = {x}): {} vs {expect}",
                res.t0_values[i]
            );
        }
    }

    #[test]
    fn short_exit_slice_mirrors_long_exit_at_zero_theta() {
        let p = fig_params();
        let spec = LatticeSpec::centered(&p, 40, 151).unwrap();
        let long = dp_value(&p, &spec, Stage::ExitLong).unwrap();
        let short = dp_value(&p, &spec, Stage::ExitShort).unwrap();
        let n = spec.n_space;
        for i in 0..n {
            let gap = (short.t0_values[i] + long.t0_values[n - 1 - i]).abs();
            assert!(gap <= 1e-12, "node {i}: mirror gap {gap:e}");
        }
    }

    #[test]
    fn exit_frontier_lands_near_the_known_scale() {
        let p = fig_params();
        let spec = LatticeSpec::centered(&p, 80, 201).unwrap();
        let res = dp_value(&p, &spec, Stage::ExitLong).unwrap();
        assert_eq!(res.frontiers.len(), spec.n_time + 1);
        assert!(res.frontiers[spec.n_time].is_none(), "no decision at the horizon");
        let fx = res.frontier_x();
        for step in 0..spec.n_time {
            let x = fx[step].expect("exit frontier exists at every decision step");
            assert!(x > -1e-12 && x < 0.05, "step {step}: frontier at {x}");
        }
        // Later steps must not raise the frontier by more than one cell.
        let dx = spec.dx();
        for w in fx[..spec.n_time].windows(2) {
            assert!(w[1].unwrap() <= w[0].unwrap() + dx + 1e-12);
        }
    }

    #[test]
    fn entry_values_are_nonnegative_and_frontier_sits_low() {
        let p = fig_params();
        let spec = LatticeSpec::centered(&p, 80, 201).unwrap();
        let res = dp_value(&p, &spec, Stage::EntryLong).unwrap();
        assert!(res.t0_values.iter().all(|v| *v >= 0.0));
        let fx = res.frontier_x();
        for step in 0..spec.n_time {
            let x = fx[step].expect("entry frontier exists at every decision step");
            assert!(x < 1e-12, "step {step}: long entry frontier must sit below the mean");
        }
        assert!(res.value_near(0.0) > 0.0);
    }

    #[test]
    fn narrow_domains_are_rejected_by_the_widening_check() {
        let p = fig_params();
        let reach = 2.0 * p.stationary_sd();
        let spec = LatticeSpec::new(50, 41, p.theta - reach, p.theta + reach, 32).unwrap();
        let err = dp_value_checked(&p, &spec, Stage::ExitLong, 1e-9).unwrap_err();
        match err {
            Error::BoundsTooTight { moved, tolerance } => {
                assert!(moved > tolerance);
            }
            other => panic!("expected BoundsTooTight, got {other:?}"),
        }
        // The properly sized domain passes the same check.
        let spec = LatticeSpec::centered(&p, 50, 101).unwrap();
        assert!(dp_value_checked(&p, &spec, Stage::ExitLong, 1e-3).is_ok());
    }

    #[test]
    fn lattice_spec_is_validated() {
        assert!(LatticeSpec::new(0, 11, -1.0, 1.0, 16).is_err());
        assert!(LatticeSpec::new(10, 4, -1.0, 1.0, 16).is_err());
        assert!(LatticeSpec::new(10, 11, 1.0, -1.0, 16).is_err());
        assert!(LatticeSpec::new(10, 11, -1.0, 1.0, 1).is_err());
        assert!(dp_value(&fig_params(), &LatticeSpec::centered(&fig_params(), 2, 11).unwrap(), Stage::CostExit(f64::NAN)).is_err());
    }
}
