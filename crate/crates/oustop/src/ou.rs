//! Exact distributional primitives for the mean-reverting spread.
//!
//! The spread follows `dX_t = mu (theta - X_t) dt + sigma dB_t`. Conditional
//! on `X_0 = x`, the level after an elapsed time `u` is Gaussian with
//!
//! ```text
//! m(u, x) = x e^{-mu u} + theta (1 - e^{-mu u})
//! var(u)  = sigma^2 / (2 mu) * (1 - e^{-2 mu u})
//! ```
//!
//! Everything downstream (kernels, boundary recursions, the lattice and the
//! simulator) is built on these closed forms; no Euler stepping is used
//! anywhere in the crate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::{Error, Result};

/// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Model and discounting parameters for the traded spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    /// Mean-reversion speed, per year. Must be positive.
    pub mu: f64,
    /// Long-run level the spread reverts to.
    pub theta: f64,
    /// Diffusion volatility, per square-root year. Must be positive.
    pub sigma: f64,
    /// Continuously compounded discount rate. Must be positive.
    pub r: f64,
    /// Trading horizon in years. Boundaries and values live on `[0, horizon]`.
    pub horizon: f64,
}

impl OUParams {
    pub fn new(mu: f64, theta: f64, sigma: f64, r: f64, horizon: f64) -> Result<Self> {
        let p = Self {
            mu,
            theta,
            sigma,
            r,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str, v: f64| Err(Error::InvalidParams(format!("{msg}, got {v}")));
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return bad("mu must be finite and positive", self.mu);
        }
        if !self.theta.is_finite() {
            return bad("theta must be finite", self.theta);
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad("sigma must be finite and positive", self.sigma);
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return bad("r must be finite and positive", self.r);
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("horizon must be finite and positive", self.horizon);
        }
        Ok(())
    }

    /// Root of the discounted holding drift: `x* = mu theta / (mu + r)`.
    ///
    /// Every optimal action boundary terminates at this level at the horizon
    /// (shifted to `(mu theta + r c) / (mu + r)` when exiting costs `c`).
    pub fn x_star(&self) -> f64 {
        self.mu * self.theta / (self.mu + self.r)
    }

    /// Standard deviation of the stationary law, `sigma / sqrt(2 mu)`.
    pub fn stationary_sd(&self) -> f64 {
        self.sigma / (2.0 * self.mu).sqrt()
    }
}

/// Gaussian law of `X_u` given `X_0 = x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionLaw {
    pub mean: f64,
    pub var: f64,
}

impl TransitionLaw {
    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Conditional mean `m(u, x)`. Panics on negative or non-finite `u` or `x`.
pub fn transition_mean(p: &OUParams, u: f64, x: f64) -> f64 {
    assert!(
        u >= 0.0 && u.is_finite(),
        "elapsed time must be finite and nonnegative, got {u}"
    );
    assert!(x.is_finite(), "state must be finite, got {x}");
    let decay = (-p.mu * u).exp();
    x * decay + p.theta * (1.0 - decay)
}

/// Conditional variance `var(u)`; independent of the starting state.
pub fn transition_var(p: &OUParams, u: f64) -> f64 {
    assert!(
        u >= 0.0 && u.is_finite(),
        "elapsed time must be finite and nonnegative, got {u}"
    );
    p.sigma * p.sigma / (2.0 * p.mu) * (1.0 - (-2.0 * p.mu * u).exp())
}

pub fn transition_law(p: &OUParams, u: f64, x: f64) -> TransitionLaw {
    TransitionLaw {
        mean: transition_mean(p, u, x),
        var: transition_var(p, u),
    }
}

/// Transition density of `X_u` given `X_0 = x`, evaluated at `y`.
///
/// `u = 0` is rejected (the law degenerates to a point mass); callers handle
/// zero elapsed time separately.
pub fn transition_pdf(p: &OUParams, u: f64, x: f64, y: f64) -> f64 {
    assert!(u > 0.0, "density requires positive elapsed time, got {u}");
    let law = transition_law(p, u, x);
    let s = law.sd();
    std_normal_pdf((y - law.mean) / s) / s
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() * INV_SQRT_2PI
}

/// Standard normal distribution function, `P(Z <= z)`.
///
/// Routed through the complementary error function so that both tails keep
/// full relative accuracy; far tails underflow cleanly to 0 and 1.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal survival function, `P(Z >= z)`.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Side of a level used when restricting the transition law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Above,
    Below,
}

/// Mass and first partial moment of the restricted transition law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailMoments {
    /// `P(X_u >= z)` or `P(X_u <= z)` depending on the side.
    pub prob: f64,
    /// `E[X_u 1{X_u >= z}]` or `E[X_u 1{X_u <= z}]`.
    pub partial_mean: f64,
}

/// Closed-form truncated first moments of the transition law.
///
/// With `d = (z - m) / s` standardized, the restricted mass and moment are
/// `m Phi_bar(d) + s phi(d)` above the level and `m Phi(d) - s phi(d)` below
/// it, so the two sides always sum to `(1, m)`.
pub fn truncated_moments(p: &OUParams, u: f64, x: f64, z: f64, tail: Tail) -> TailMoments {
    assert!(u > 0.0, "truncation requires positive elapsed time, got {u}");
    assert!(z.is_finite(), "truncation level must be finite, got {z}");
    let law = transition_law(p, u, x);
    let s = law.sd();
    let d = (z - law.mean) / s;
    let density = std_normal_pdf(d);
    match tail {
        Tail::Above => {
            let prob = std_normal_sf(d);
            TailMoments {
                prob,
                partial_mean: law.mean * prob + s * density,
            }
        }
        Tail::Below => {
            let prob = std_normal_cdf(d);
            TailMoments {
                prob,
                partial_mean: law.mean * prob - s * density,
            }
        }
    }
}

/// Infinitesimal generator applied to a function with known derivatives:
/// `mu (theta - x) f'(x) + sigma^2 / 2 f''(x)`.
pub fn apply_generator(p: &OUParams, x: f64, df: f64, d2f: f64) -> f64 {
    p.mu * (p.theta - x) * df + 0.5 * p.sigma * p.sigma * d2f
}

/// Generator evaluated with central finite differences of step `step`.
pub fn apply_generator_fd(p: &OUParams, x: f64, f: impl Fn(f64) -> f64, step: f64) -> f64 {
    assert!(step > 0.0, "finite-difference step must be positive");
    let (fp, f0, fm) = (f(x + step), f(x), f(x - step));
    let df = (fp - fm) / (2.0 * step);
    let d2f = (fp - 2.0 * f0 + fm) / (step * step);
    apply_generator(p, x, df, d2f)
}

/// Draw `X_u` given `X_0 = x` from the exact transition law.
pub fn sample_transition<R: Rng + ?Sized>(p: &OUParams, u: f64, x: f64, rng: &mut R) -> f64 {
    let law = transition_law(p, u, x);
    let z: f64 = rng.sample(StandardNormal);
    law.mean + law.sd() * z
}
