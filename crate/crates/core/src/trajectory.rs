//! Quantum-jump ensemble for a momentum-diagonal effective Hamiltonian.
//!
//! Each atom carries a fixed momentum drawn from |ψ(p,0)|² and decays after an
//! exponential waiting time with its own lab-frame rate Γ(p). The surviving
//! sub-ensemble then samples the conditional density |ψ(p,t)|²/‖ψ(t)‖².
//! Photon recoil is not modelled: decayed atoms keep their momentum.
//!
//! Under [`RatePolicy::Formal`](crate::physics::RatePolicy::Formal) a
//! first-order rate can be negative. Such trajectories never decay and carry
//! the survival weight e^{−Γ(p)t} > 1 instead, which keeps the survivor
//! estimators unbiased for the formal density. Each trajectory contributes
//! weight w to the survivors and 1 − w to the decayed branch, so the two
//! sub-ensembles always recompose the full sample. Under the strict policy
//! every weight is 0 or 1 and the statistics are plain counts and means.
//!
//! Random streams are keyed by (master seed, purpose, trajectory index), so an
//! ensemble is bit-identical for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::GaussianMomentumState;
use crate::error::{Error, Result};
use crate::physics::Dynamics;
use crate::quadrature::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    Momentum = 1,
    Fate = 2,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    fn rng(&self, purpose: Purpose, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&index.to_le_bytes());
        key[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
        key[24..].copy_from_slice(b"survival");
        ChaCha8Rng::from_seed(key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Fate {
    /// Photon emitted at this lab time.
    Decayed { at: f64 },
    /// No emission up to the simulated horizon.
    Survived { until: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub p: f64,
    /// Lab-frame rate Γ(p) the trajectory was simulated with.
    pub rate: f64,
    pub fate: Fate,
}

impl TrajectoryRecord {
    /// Survivor weight at `t`: 0 if decayed, 1 for an ordinary survivor,
    /// e^{−Γt} for a formally growing one.
    fn survivor_weight(&self, t: f64) -> Result<f64> {
        match self.fate {
            Fate::Decayed { at } if at <= t => Ok(0.0),
            Fate::Survived { until } if t > until => Err(Error::InvalidParameter {
                name: "t",
                value: t,
                reason: "evaluation time lies beyond the simulated horizon",
            }),
            _ if self.rate < 0.0 => Ok((-self.rate * t).exp()),
            _ => Ok(1.0),
        }
    }
}

/// `n` i.i.d. draws from N(p₀, σ²), the momentum density |ψ(p,0)|².
pub fn sample_momenta(
    state: &GaussianMomentumState,
    n: usize,
    seeds: SeedSpec,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: 0.0,
            reason: "need at least one trajectory",
        });
    }
    let normal = Normal::new(state.p0(), state.sigma()).map_err(|_| Error::InvalidParameter {
        name: "sigma",
        value: state.sigma(),
        reason: "not a valid normal standard deviation",
    })?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| normal.sample(&mut seeds.rng(Purpose::Momentum, i)))
        .collect())
}

/// Draws an emission time for every momentum, censored at `horizon`.
pub fn simulate_fates(
    momenta: &[f64],
    dynamics: &Dynamics,
    horizon: f64,
    seeds: SeedSpec,
) -> Result<Vec<TrajectoryRecord>> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon,
            reason: "must be finite and strictly positive",
        });
    }
    momenta
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let rate = dynamics.decay_rate(p)?;
            let fate = if rate > 0.0 {
                let u: f64 = Exp1.sample(&mut seeds.rng(Purpose::Fate, i as u64));
                let at = u / rate;
                if at <= horizon {
                    Fate::Decayed { at }
                } else {
                    Fate::Survived { until: horizon }
                }
            } else {
                Fate::Survived { until: horizon }
            };
            Ok(TrajectoryRecord { p, rate, fate })
        })
        .collect()
}

/// Sampled momenta and fates for one seed.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub seeds: SeedSpec,
    pub horizon: f64,
    pub records: Vec<TrajectoryRecord>,
}

impl Ensemble {
    pub fn simulate(
        state: &GaussianMomentumState,
        dynamics: &Dynamics,
        n: usize,
        horizon: f64,
        seeds: SeedSpec,
    ) -> Result<Self> {
        let momenta = sample_momenta(state, n, seeds)?;
        let records = simulate_fates(&momenta, dynamics, horizon, seeds)?;
        Ok(Self {
            seeds,
            horizon,
            records,
        })
    }

    pub fn stats(&self, dynamics: &Dynamics, t: f64) -> Result<EnsembleStats> {
        conditional_stats(&self.records, dynamics, t)
    }
}

/// Sub-ensemble statistics at one evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub t: f64,
    pub n_total: usize,
    pub n_survived: usize,
    pub n_decayed: usize,
    /// True when some survivor carries a formal weight above one.
    pub weighted: bool,
    /// Weighted survivor mass / n_total (= n_survived/n_total when unweighted).
    pub survival_fraction: f64,
    pub survival_fraction_se: Option<f64>,
    pub sample_mean_p: f64,
    pub mean_p_survived: f64,
    /// Standard error of `mean_p_survived`; `None` with fewer than two survivors.
    pub se_survived: Option<f64>,
    /// `None` when the decayed branch carries no weight.
    pub mean_p_decayed: Option<f64>,
    pub mean_energy_total: f64,
    pub mean_energy_survived: f64,
    pub mean_energy_decayed: Option<f64>,
    pub mean_kinetic_total: f64,
    pub mean_kinetic_survived: f64,
    pub mean_kinetic_decayed: Option<f64>,
}

#[derive(Default)]
struct BranchSums {
    weight: CompensatedSum,
    p: CompensatedSum,
    energy: CompensatedSum,
    kinetic: CompensatedSum,
}

impl BranchSums {
    fn add(&mut self, w: f64, p: f64, e: f64, k: f64) {
        self.weight.add(w);
        self.p.add(w * p);
        self.energy.add(w * e);
        self.kinetic.add(w * k);
    }

    fn means(&self) -> Option<(f64, f64, f64)> {
        let w = self.weight.value();
        (w != 0.0).then(|| {
            (
                self.p.value() / w,
                self.energy.value() / w,
                self.kinetic.value() / w,
            )
        })
    }
}

/// Conditional statistics of the survivors (no emission by `t`) and of the
/// decayed atoms.
pub fn conditional_stats(
    records: &[TrajectoryRecord],
    dynamics: &Dynamics,
    t: f64,
) -> Result<EnsembleStats> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "time must be finite and non-negative",
        });
    }
    let weights = records
        .iter()
        .map(|r| r.survivor_weight(t))
        .collect::<Result<Vec<_>>>()?;
    let n_total = records.len();
    let n_survived = weights.iter().filter(|&&w| w > 0.0).count();
    if n_survived == 0 {
        return Err(Error::EmptySurvivors { t });
    }

    let mut all = BranchSums::default();
    let mut survived = BranchSums::default();
    let mut decayed = BranchSums::default();
    for (r, &w) in records.iter().zip(&weights) {
        let e = dynamics.energy(r.p);
        let k = dynamics.kinetic_energy(r.p);
        all.add(1.0, r.p, e, k);
        survived.add(w, r.p, e, k);
        decayed.add(1.0 - w, r.p, e, k);
    }
    let (sample_mean_p, mean_energy_total, mean_kinetic_total) =
        all.means().expect("non-empty ensemble");
    let (mean_p_survived, mean_energy_survived, mean_kinetic_survived) =
        survived.means().expect("at least one survivor");
    let decayed_means = decayed.means();

    let n = n_total as f64;
    let survivor_mass = survived.weight.value();
    let survival_fraction = survivor_mass / n;

    let se_survived = (n_survived >= 2).then(|| {
        let ss: f64 = records
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(r, &w)| (w * (r.p - mean_p_survived)).powi(2))
            .collect::<CompensatedSum>()
            .value();
        let ns = n_survived as f64;
        (ns / (ns - 1.0) * ss).sqrt() / survivor_mass
    });
    let survival_fraction_se = (n_total >= 2).then(|| {
        let ss = weights
            .iter()
            .map(|w| (w - survival_fraction).powi(2))
            .collect::<CompensatedSum>()
            .value();
        (ss / (n * (n - 1.0))).sqrt()
    });

    Ok(EnsembleStats {
        t,
        n_total,
        n_survived,
        n_decayed: n_total - n_survived,
        weighted: weights.iter().any(|&w| w > 1.0),
        survival_fraction,
        survival_fraction_se,
        sample_mean_p,
        mean_p_survived,
        se_survived,
        mean_p_decayed: decayed_means.map(|m| m.0),
        mean_energy_total,
        mean_energy_survived,
        mean_energy_decayed: decayed_means.map(|m| m.1),
        mean_kinetic_total,
        mean_kinetic_survived,
        mean_kinetic_decayed: decayed_means.map(|m| m.2),
    })
}

/// How well the two sub-ensembles recompose the full sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionResiduals {
    /// |f·⟨p⟩_surv + (1 − f)·⟨p⟩_dec − ⟨p⟩_all|
    pub momentum: f64,
    pub energy: f64,
    pub kinetic_energy: f64,
}

impl PartitionResiduals {
    /// Residuals divided by the magnitude of the corresponding full-sample mean.
    pub fn relative_to(&self, stats: &EnsembleStats) -> Self {
        Self {
            momentum: self.momentum / stats.sample_mean_p.abs(),
            energy: self.energy / stats.mean_energy_total.abs(),
            kinetic_energy: self.kinetic_energy / stats.mean_kinetic_total.abs(),
        }
    }
}

pub fn conservation_check(stats: &EnsembleStats) -> PartitionResiduals {
    let f = stats.survival_fraction;
    let recompose = |survived: f64, decayed: Option<f64>, total: f64| {
        let decayed_term = decayed.map_or(0.0, |d| (1.0 - f) * d);
        (f * survived + decayed_term - total).abs()
    };
    PartitionResiduals {
        momentum: recompose(
            stats.mean_p_survived,
            stats.mean_p_decayed,
            stats.sample_mean_p,
        ),
        energy: recompose(
            stats.mean_energy_survived,
            stats.mean_energy_decayed,
            stats.mean_energy_total,
        ),
        kinetic_energy: recompose(
            stats.mean_kinetic_survived,
            stats.mean_kinetic_decayed,
            stats.mean_kinetic_total,
        ),
    }
}
