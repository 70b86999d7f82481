//! Conditional no-emission dynamics of an excited atom in a Gaussian momentum
//! superposition.
//!
//! Time dilation lowers the lab-frame decay rate of the faster momentum
//! components, so conditioning on "no photon yet" shifts the momentum
//! distribution upward. The crate computes that drift three independent ways:
//!
//! - [`analytic`]: closed forms for the Gaussian case.
//! - [`numeric`]: exact pointwise propagation on a momentum grid plus
//!   Simpson quadrature, for arbitrary initial fields.
//! - [`trajectory`]: a seeded quantum-jump Monte Carlo ensemble.
//!
//! [`physics`] holds the shared constants, dispersion relations and rates.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod numeric;
pub mod physics;
pub mod quadrature;
pub mod trajectory;

pub use analytic::{AnalyticReport, GaussianMomentumState};
pub use error::{Error, Result};
pub use numeric::{ComplexAmplitudeField, EvolutionSnapshot, MomentumGrid};
pub use physics::{
    AtomParams, DispersionModel, Dynamics, PhysicalConstants, RatePolicy, UnitSystem,
};
pub use trajectory::{Ensemble, EnsembleStats, SeedSpec, TrajectoryRecord};
