//! Closed-form conditional (no-decay) dynamics of a Gaussian momentum state
//! under the first-order dilated decay rate.
//!
//! With Γ(p) = Γ₀(1 − p²/2m²c²) the no-decay weight e^{−Γ(p)t} is itself a
//! Gaussian in p, so the surviving density stays Gaussian with
//!
//! ```text
//! 1/σ_t² = 1/σ² − Γ₀t/(m²c²)        μ_t = σ_t² p₀/σ² = p₀ / (1 − t/T)
//! ```
//!
//! where T = m²c²/(σ²Γ₀) is the time at which σ_t² diverges. Everything here
//! is only defined for t < (1 − [`THRESHOLD_MARGIN`])·T.
//!
//! [`unnormalized_density`] follows the non-normalised |ψ(p,t)|² (what one
//! would plot); [`mean_momentum`] is the conditional expectation, normalised
//! by the surviving norm.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::physics::{non_negative_time, AtomParams, PhysicalConstants};

/// Times at or beyond (1 − margin)·threshold are rejected.
pub const THRESHOLD_MARGIN: f64 = 1e-9;

/// Initial momentum wavefunction (2πσ²)^{-1/4} exp(−(p − p₀)²/4σ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianMomentumState {
    p0: f64,
    sigma: f64,
}

impl GaussianMomentumState {
    pub fn new(p0: f64, sigma: f64) -> Result<Self> {
        if !p0.is_finite() {
            return Err(Error::InvalidParameter {
                name: "p0",
                value: p0,
                reason: "must be finite",
            });
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: sigma,
                reason: "must be finite and strictly positive",
            });
        }
        Ok(Self { p0, sigma })
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// ψ(p, 0), real and positive.
    pub fn amplitude(&self, p: f64) -> f64 {
        let d = p - self.p0;
        (2.0 * PI * self.variance()).powf(-0.25) * (-d * d / (4.0 * self.variance())).exp()
    }
}

/// σ²Γ₀/(m²c²), the rate at which t/T grows.
fn drift_rate(state: &GaussianMomentumState, atom: &AtomParams, consts: &PhysicalConstants) -> f64 {
    let r = state.sigma / atom.mc(consts);
    r * r * atom.gamma0()
}

/// T = m²c²/(σ²Γ₀). Infinite for a stable atom.
pub fn validity_threshold(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
) -> f64 {
    1.0 / drift_rate(state, atom, consts)
}

/// Largest accepted time, (1 − margin)·T.
pub fn validity_limit(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
) -> f64 {
    (1.0 - THRESHOLD_MARGIN) * validity_threshold(state, atom, consts)
}

/// Validates `t` and returns the dimensionless drift t/T.
pub fn check_time(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    t: f64,
) -> Result<f64> {
    non_negative_time(t)?;
    let limit = validity_limit(state, atom, consts);
    if t >= limit {
        return Err(Error::BeyondThreshold {
            t,
            limit,
            threshold: validity_threshold(state, atom, consts),
        });
    }
    Ok(drift_rate(state, atom, consts) * t)
}

/// σ_t² = (1/σ² − Γ₀t/m²c²)⁻¹
pub fn effective_variance(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    t: f64,
) -> Result<f64> {
    check_time(state, atom, consts, t)?;
    let mc = atom.mc(consts);
    Ok(1.0 / (1.0 / state.variance() - atom.gamma0() * t / (mc * mc)))
}

/// μ_t = σ_t²·p₀/σ², the completed-square route to the mean.
pub fn shifted_mean(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    t: f64,
) -> Result<f64> {
    Ok(effective_variance(state, atom, consts, t)? * state.p0 / state.variance())
}

/// Conditional ⟨p⟩_t = p₀/(1 − σ²Γ₀t/m²c²).
pub fn mean_momentum(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    t: f64,
) -> Result<f64> {
    let x = check_time(state, atom, consts, t)?;
    Ok(state.p0 / (1.0 - x))
}

/// ⟨p⟩_t − p₀ = p₀·x/(1 − x), resolved even when x is far below machine epsilon.
pub fn mean_momentum_shift(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    t: f64,
) -> Result<f64> {
    let x = check_time(state, atom, consts, t)?;
    Ok(state.p0 * x / (1.0 - x))
}

/// d⟨p⟩_t/dt at time t.
pub fn survival_force(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    t: f64,
) -> Result<f64> {
    let x = check_time(state, atom, consts, t)?;
    let denom = 1.0 - x;
    Ok(constant_survival_force(state, atom, consts) / (denom * denom))
}

/// The force to first order in 1/c², i.e. its t = 0 value p₀σ²Γ₀/(m²c²).
pub fn constant_survival_force(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
) -> f64 {
    state.p0 * drift_rate(state, atom, consts)
}

pub fn survival_acceleration(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
) -> f64 {
    constant_survival_force(state, atom, consts) / atom.mass()
}

/// Non-normalised |ψ(p,t)|² under the first-order rate.
///
/// Defined for every finite p and t ≥ 0, including |p| > √2·mc where the
/// expanded rate is negative and the density grows.
pub fn unnormalized_density(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    p: f64,
    t: f64,
) -> Result<f64> {
    non_negative_time(t)?;
    let var = state.variance();
    let mc = atom.mc(consts);
    let d = p - state.p0;
    let exponent = -d * d / (2.0 * var) + p * p * atom.gamma0() * t / (2.0 * mc * mc);
    Ok((2.0 * PI * var).powf(-0.5) * exponent.exp() * (-atom.gamma0() * t).exp())
}

/// ∫|ψ(p,t)|² dp in closed form:
/// e^{−Γ₀t} (σ_t/σ) exp((p₀²/2σ²)(σ_t²/σ² − 1)).
pub fn ensemble_survival_probability(
    state: &GaussianMomentumState,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    t: f64,
) -> Result<f64> {
    let x = check_time(state, atom, consts, t)?;
    // σ_t²/σ² = 1/(1 − x), so σ_t²/σ² − 1 = x/(1 − x).
    let ratio = 1.0 / (1.0 - x);
    let gain = state.p0 * state.p0 / (2.0 * state.variance()) * x / (1.0 - x);
    Ok((-atom.gamma0() * t + gain).exp() * ratio.sqrt())
}

/// Every closed-form quantity at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticReport {
    pub t: f64,
    pub sigma_t_sq: f64,
    pub mu_t: f64,
    pub mean_shift: f64,
    /// Time-dependent d⟨p⟩/dt.
    pub force: f64,
    /// First-order constant force (the t → 0 value).
    pub constant_force: f64,
    pub accel: f64,
    pub threshold_time: f64,
    pub survival_prob: f64,
}

impl AnalyticReport {
    pub fn evaluate(
        state: &GaussianMomentumState,
        atom: &AtomParams,
        consts: &PhysicalConstants,
        t: f64,
    ) -> Result<Self> {
        Ok(Self {
            t,
            sigma_t_sq: effective_variance(state, atom, consts, t)?,
            mu_t: mean_momentum(state, atom, consts, t)?,
            mean_shift: mean_momentum_shift(state, atom, consts, t)?,
            force: survival_force(state, atom, consts, t)?,
            constant_force: constant_survival_force(state, atom, consts),
            accel: survival_acceleration(state, atom, consts),
            threshold_time: validity_threshold(state, atom, consts),
            survival_prob: ensemble_survival_probability(state, atom, consts, t)?,
        })
    }
}
