//! Constants, dispersion relations and momentum-dependent decay rates.
//!
//! Every quantity comes in two flavours selected by [`DispersionModel`]: the
//! first-order expansion in 1/c² used throughout the analytic results, and the
//! exact relativistic form, which is kept around to measure how much the
//! expansion costs.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitSystem {
    Si,
    /// c = ħ = 1 exactly.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DispersionModel {
    /// γ(p) ≈ 1 + p²/2m²c², Γ(p) ≈ Γ₀(1 − p²/2m²c²), E(p) ≈ mc² + p²/2m − p⁴/8m³c².
    #[serde(rename = "first-order")]
    FirstOrder,
    /// γ(p) = √(1 + p²/m²c²), Γ(p) = Γ₀/γ(p), E(p) = √(m²c⁴ + p²c²).
    #[serde(rename = "exact")]
    ExactRelativistic,
}

/// How the first-order decay rate is treated once it stops being positive.
///
/// `Strict` rejects any momentum with |p| ≥ √2·mc. `Formal` keeps evaluating
/// Γ₀(1 − p²/2m²c²) as a formal exponent, so the no-decay weight e^{−Γt}
/// exceeds one there. That is the reading behind the closed-form Gaussian
/// density, which is plotted well past that bound for m = c = 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatePolicy {
    #[default]
    Strict,
    Formal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    c: f64,
    hbar: f64,
}

impl PhysicalConstants {
    pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
    pub const HBAR: f64 = 1.054_571_817e-34;

    pub fn new(c: f64, hbar: f64) -> Result<Self> {
        positive("c", c)?;
        positive("hbar", hbar)?;
        Ok(Self { c, hbar })
    }

    /// CODATA SI values.
    pub fn si() -> Self {
        Self {
            c: Self::SPEED_OF_LIGHT,
            hbar: Self::HBAR,
        }
    }

    pub fn natural() -> Self {
        Self { c: 1.0, hbar: 1.0 }
    }

    pub fn for_units(units: UnitSystem) -> Self {
        match units {
            UnitSystem::Si => Self::si(),
            UnitSystem::Natural => Self::natural(),
        }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
}

/// A two-level atom: rest mass and proper (rest-frame) decay rate Γ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AtomParams {
    mass: f64,
    gamma0: f64,
}

impl AtomParams {
    /// `gamma0 = 0` is accepted and gives a stable atom (pure unitary motion).
    pub fn new(mass: f64, gamma0: f64) -> Result<Self> {
        positive("mass", mass)?;
        if !(gamma0.is_finite() && gamma0 >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma0",
                value: gamma0,
                reason: "must be finite and non-negative",
            });
        }
        Ok(Self { mass, gamma0 })
    }

    pub fn from_lifetime(mass: f64, tau0: f64) -> Result<Self> {
        positive("tau0", tau0)?;
        Self::new(mass, 1.0 / tau0)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Proper lifetime τ₀ = 1/Γ₀ (infinite for a stable atom).
    pub fn tau0(&self) -> f64 {
        1.0 / self.gamma0
    }

    /// m·c, the natural momentum scale.
    pub fn mc(&self, consts: &PhysicalConstants) -> f64 {
        self.mass * consts.c
    }

    pub fn rest_energy(&self, consts: &PhysicalConstants) -> f64 {
        self.mass * consts.c * consts.c
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and strictly positive",
        })
    }
}

/// (p/mc)²
#[inline]
fn beta_sq(p: f64, atom: &AtomParams, consts: &PhysicalConstants) -> f64 {
    let r = p / atom.mc(consts);
    r * r
}

/// |p| at which the first-order rate Γ₀(1 − p²/2m²c²) reaches zero: √2·mc.
pub fn first_order_momentum_limit(atom: &AtomParams, consts: &PhysicalConstants) -> f64 {
    SQRT_2 * atom.mc(consts)
}

pub fn lorentz_factor(
    p: f64,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    model: DispersionModel,
) -> f64 {
    let x = beta_sq(p, atom, consts);
    match model {
        DispersionModel::FirstOrder => 1.0 + 0.5 * x,
        DispersionModel::ExactRelativistic => (1.0 + x).sqrt(),
    }
}

/// Lab-frame decay rate Γ(p). Under [`DispersionModel::FirstOrder`] this is
/// the expanded form Γ₀(1 − p²/2m²c²), which is rejected once non-positive.
pub fn lab_decay_rate(
    p: f64,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    model: DispersionModel,
) -> Result<f64> {
    lab_decay_rate_with(p, atom, consts, model, RatePolicy::Strict)
}

pub fn lab_decay_rate_with(
    p: f64,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    model: DispersionModel,
    policy: RatePolicy,
) -> Result<f64> {
    let x = beta_sq(p, atom, consts);
    match model {
        DispersionModel::FirstOrder => {
            let factor = 1.0 - 0.5 * x;
            if factor <= 0.0 && policy == RatePolicy::Strict {
                return Err(Error::UnphysicalRate {
                    p,
                    limit: first_order_momentum_limit(atom, consts),
                });
            }
            Ok(atom.gamma0 * factor)
        }
        DispersionModel::ExactRelativistic => Ok(atom.gamma0 / (1.0 + x).sqrt()),
    }
}

/// Relative rate reduction 1 − Γ(p)/Γ₀, computed without cancellation.
///
/// For Rb-87 at 1 cm/s this is ~5.6e-22, far below what `1 − x` can resolve.
pub fn dilation_defect(
    p: f64,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    model: DispersionModel,
) -> f64 {
    let x = beta_sq(p, atom, consts);
    match model {
        DispersionModel::FirstOrder => 0.5 * x,
        DispersionModel::ExactRelativistic => {
            let g = (1.0 + x).sqrt();
            x / (g * (1.0 + g))
        }
    }
}

/// Total energy E(p) including the rest energy mc².
pub fn total_energy(
    p: f64,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    model: DispersionModel,
) -> f64 {
    atom.rest_energy(consts) + kinetic_energy(p, atom, consts, model)
}

/// E(p) − mc², evaluated directly so it survives when mc² swamps it.
pub fn kinetic_energy(
    p: f64,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    model: DispersionModel,
) -> f64 {
    let m = atom.mass;
    let p2 = p * p;
    match model {
        DispersionModel::FirstOrder => {
            let c2 = consts.c * consts.c;
            p2 / (2.0 * m) - p2 * p2 / (8.0 * m * m * m * c2)
        }
        DispersionModel::ExactRelativistic => {
            let g = (1.0 + beta_sq(p, atom, consts)).sqrt();
            p2 / (m * (1.0 + g))
        }
    }
}

/// Probability exp(−Γ(p)·t) that an atom of sharp momentum p has not decayed.
pub fn survival_probability_single(
    p: f64,
    atom: &AtomParams,
    consts: &PhysicalConstants,
    t: f64,
    model: DispersionModel,
) -> Result<f64> {
    non_negative_time(t)?;
    Ok((-lab_decay_rate(p, atom, consts, model)? * t).exp())
}

pub(crate) fn non_negative_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "time must be finite and non-negative",
        })
    }
}

/// Everything needed to propagate one momentum component: the atom, the
/// constants, which dispersion to use and how to treat negative first-order
/// rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dynamics {
    pub atom: AtomParams,
    pub consts: PhysicalConstants,
    pub model: DispersionModel,
    pub policy: RatePolicy,
}

impl Dynamics {
    pub fn new(atom: AtomParams, consts: PhysicalConstants, model: DispersionModel) -> Self {
        Self {
            atom,
            consts,
            model,
            policy: RatePolicy::Strict,
        }
    }

    pub fn with_policy(mut self, policy: RatePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_model(mut self, model: DispersionModel) -> Self {
        self.model = model;
        self
    }

    /// The momentum bound enforced by this configuration, if any.
    pub fn momentum_limit(&self) -> Option<f64> {
        match (self.model, self.policy) {
            (DispersionModel::FirstOrder, RatePolicy::Strict) => {
                Some(first_order_momentum_limit(&self.atom, &self.consts))
            }
            _ => None,
        }
    }

    pub fn decay_rate(&self, p: f64) -> Result<f64> {
        lab_decay_rate_with(p, &self.atom, &self.consts, self.model, self.policy)
    }

    pub fn energy(&self, p: f64) -> f64 {
        total_energy(p, &self.atom, &self.consts, self.model)
    }

    pub fn kinetic_energy(&self, p: f64) -> f64 {
        kinetic_energy(p, &self.atom, &self.consts, self.model)
    }

    /// No-decay weight exp(−Γ(p)·t); above one only under [`RatePolicy::Formal`].
    pub fn survival_weight(&self, p: f64, t: f64) -> Result<f64> {
        non_negative_time(t)?;
        Ok((-self.decay_rate(p)? * t).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_atom(gamma0: f64) -> (AtomParams, PhysicalConstants) {
        (
            AtomParams::new(1.0, gamma0).unwrap(),
            PhysicalConstants::natural(),
        )
    }

    fn rb87() -> (AtomParams, PhysicalConstants) {
        (
            AtomParams::from_lifetime(1.44e-25, 27e-9).unwrap(),
            PhysicalConstants::new(3.00e8, PhysicalConstants::HBAR).unwrap(),
        )
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(AtomParams::new(0.0, 1.0).is_err());
        assert!(AtomParams::new(1.0, -1.0).is_err());
        assert!(AtomParams::new(f64::NAN, 1.0).is_err());
        assert!(PhysicalConstants::new(0.0, 1.0).is_err());
        assert!(PhysicalConstants::new(1.0, -1.0).is_err());
    }

    #[test]
    fn natural_units_are_exactly_one() {
        let k = PhysicalConstants::for_units(UnitSystem::Natural);
        assert_eq!(k.c(), 1.0);
        assert_eq!(k.hbar(), 1.0);
    }

    #[test]
    fn lifetime_and_rate_are_reciprocal() {
        let (atom, _) = rb87();
        assert!((atom.tau0() * atom.gamma0() - 1.0).abs() <= f64::EPSILON);
        assert_eq!(atom.tau0(), 27e-9);
    }

    #[test]
    fn lorentz_factor_examples() {
        let (atom, k) = unit_atom(5.0);
        for model in [
            DispersionModel::FirstOrder,
            DispersionModel::ExactRelativistic,
        ] {
            assert_eq!(lorentz_factor(0.0, &atom, &k, model), 1.0);
        }
        assert_eq!(
            lorentz_factor(1.0, &atom, &k, DispersionModel::FirstOrder),
            1.5
        );
        let exact = lorentz_factor(1.0, &atom, &k, DispersionModel::ExactRelativistic);
        assert!((exact - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn decay_rate_examples() {
        let (atom, k) = unit_atom(5.0);
        assert_eq!(
            lab_decay_rate(0.0, &atom, &k, DispersionModel::FirstOrder).unwrap(),
            5.0
        );
        assert_eq!(
            lab_decay_rate(1.0, &atom, &k, DispersionModel::FirstOrder).unwrap(),
            2.5
        );

        let (atom, k) = rb87();
        let p0 = 1.44e-27;
        let fo = lab_decay_rate(p0, &atom, &k, DispersionModel::FirstOrder).unwrap();
        let ex = lab_decay_rate(p0, &atom, &k, DispersionModel::ExactRelativistic).unwrap();
        assert!(((fo - ex) / ex).abs() < 1e-21);
        let defect = dilation_defect(p0, &atom, &k, DispersionModel::FirstOrder);
        // (1.44e-27)² / (2 · (1.44e-25 · 3e8)²)
        assert!((defect / 5.555_555_555_555_556e-22 - 1.0).abs() < 1e-12);
        let exact_defect = dilation_defect(p0, &atom, &k, DispersionModel::ExactRelativistic);
        assert!((exact_defect / defect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_order_rate_fails_beyond_sqrt2_mc() {
        let (atom, k) = unit_atom(5.0);
        let err = lab_decay_rate(1.5, &atom, &k, DispersionModel::FirstOrder).unwrap_err();
        assert!(err.is_validity());
        assert!(lab_decay_rate(SQRT_2, &atom, &k, DispersionModel::FirstOrder).is_err());
        assert!(lab_decay_rate(-1.5, &atom, &k, DispersionModel::FirstOrder).is_err());
        assert!(lab_decay_rate(1.5, &atom, &k, DispersionModel::ExactRelativistic).is_ok());
        // Formal policy evaluates the expansion literally.
        let formal = lab_decay_rate_with(
            2.0,
            &atom,
            &k,
            DispersionModel::FirstOrder,
            RatePolicy::Formal,
        )
        .unwrap();
        assert_eq!(formal, -5.0);
    }

    #[test]
    fn energy_examples() {
        let (atom, k) = unit_atom(5.0);
        for model in [
            DispersionModel::FirstOrder,
            DispersionModel::ExactRelativistic,
        ] {
            assert_eq!(total_energy(0.0, &atom, &k, model), 1.0);
        }
        assert_eq!(
            total_energy(1.0, &atom, &k, DispersionModel::FirstOrder),
            1.375
        );
        let e = total_energy(1.0, &atom, &k, DispersionModel::ExactRelativistic);
        assert!((e - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn survival_examples() {
        let (atom, k) = unit_atom(5.0);
        let fo = DispersionModel::FirstOrder;
        assert_eq!(
            survival_probability_single(0.3, &atom, &k, 0.0, fo).unwrap(),
            1.0
        );
        let s = survival_probability_single(0.0, &atom, &k, atom.tau0(), fo).unwrap();
        assert!((s - (-1.0f64).exp()).abs() < 1e-15);
        let s = survival_probability_single(1.0, &atom, &k, 1.0, fo).unwrap();
        assert!((s - 0.082_084_998_623_898_8).abs() < 1e-15);
        assert!(survival_probability_single(0.0, &atom, &k, -1.0, fo).is_err());
    }

    #[test]
    fn dynamics_limit_depends_on_policy() {
        let (atom, k) = unit_atom(5.0);
        let d = Dynamics::new(atom, k, DispersionModel::FirstOrder);
        assert_eq!(d.momentum_limit(), Some(SQRT_2));
        assert_eq!(d.with_policy(RatePolicy::Formal).momentum_limit(), None);
        assert_eq!(
            d.with_model(DispersionModel::ExactRelativistic)
                .momentum_limit(),
            None
        );
        let w = d
            .with_policy(RatePolicy::Formal)
            .survival_weight(2.0, 1.0)
            .unwrap();
        assert!((w - 5f64.exp()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lorentz_factor_even_and_at_least_one(p in -10.0f64..10.0) {
            let (atom, k) = unit_atom(1.0);
            for model in [DispersionModel::FirstOrder, DispersionModel::ExactRelativistic] {
                let g = lorentz_factor(p, &atom, &k, model);
                prop_assert!(g >= 1.0);
                prop_assert_eq!(g, lorentz_factor(-p, &atom, &k, model));
            }
        }

        #[test]
        fn exact_rate_within_bounds(p in -10.0f64..10.0) {
            let (atom, k) = unit_atom(3.0);
            let r = lab_decay_rate(p, &atom, &k, DispersionModel::ExactRelativistic).unwrap();
            prop_assert!(r > 0.0 && r <= 3.0);
            if p != 0.0 {
                prop_assert!(r < 3.0);
            }
        }

        #[test]
        fn models_agree_at_low_velocity(beta in 1e-3f64..0.1, sign in prop::bool::ANY) {
            let (atom, k) = unit_atom(1.0);
            let p = if sign { beta } else { -beta };
            let fo = lorentz_factor(p, &atom, &k, DispersionModel::FirstOrder);
            let ex = lorentz_factor(p, &atom, &k, DispersionModel::ExactRelativistic);
            prop_assert!(((fo - ex) / ex).abs() < beta.powi(4));
        }

        #[test]
        fn first_order_energy_below_exact(beta in 0.05f64..=1.0, sign in prop::bool::ANY) {
            let (atom, k) = unit_atom(1.0);
            let p = if sign { beta } else { -beta };
            let fo = total_energy(p, &atom, &k, DispersionModel::FirstOrder);
            let ex = total_energy(p, &atom, &k, DispersionModel::ExactRelativistic);
            prop_assert!(fo < ex);
        }

        #[test]
        fn kinetic_energy_matches_difference(p in -1.0f64..1.0) {
            let (atom, k) = unit_atom(1.0);
            for model in [DispersionModel::FirstOrder, DispersionModel::ExactRelativistic] {
                let direct = kinetic_energy(p, &atom, &k, model);
                let diff = total_energy(p, &atom, &k, model) - 1.0;
                prop_assert!((direct - diff).abs() < 1e-15);
            }
        }

        #[test]
        fn survival_is_multiplicative(p in -1.3f64..1.3, t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
            let (atom, k) = unit_atom(5.0);
            for model in [DispersionModel::FirstOrder, DispersionModel::ExactRelativistic] {
                let s12 = survival_probability_single(p, &atom, &k, t1 + t2, model).unwrap();
                let s1 = survival_probability_single(p, &atom, &k, t1, model).unwrap();
                let s2 = survival_probability_single(p, &atom, &k, t2, model).unwrap();
                prop_assert!(s12 > 0.0 && s12 <= 1.0);
                prop_assert!(((s12 - s1 * s2) / s12).abs() < 1e-12);
                prop_assert!(s12 <= s1);
            }
        }
    }
}
