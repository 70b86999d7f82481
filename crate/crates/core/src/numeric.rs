//! Momentum-grid propagation of the conditional wavefunction.
//!
//! The effective Hamiltonian is diagonal in momentum, so propagation is an
//! exact pointwise multiplication
//!
//! ```text
//! ψ(p,t) = ψ(p,0) e^{−iE(p)t/ħ} e^{−Γ(p)t/2}
//! χ(p,t) = ψ(p,0) √(1 − e^{−Γ(p)t}) e^{−iE(p)t/ħ}
//! ```
//!
//! with no time stepping. The only discretisation error left is the
//! composite-Simpson quadrature of the moments.
//!
//! Phases use E(p) including the rest energy mc². Only moduli enter any
//! reported moment, so this global phase is unobservable; in SI units it is
//! also far too large (~10¹⁸ rad) to carry meaningful digits.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{effective_variance, GaussianMomentumState};
use crate::error::{Error, Result};
use crate::physics::{non_negative_time, DispersionModel, Dynamics};
use crate::quadrature::simpson;

/// Smallest accepted grid half-width, in units of σ_t(t_max).
pub const MIN_COVERAGE: f64 = 6.0;
pub const DEFAULT_COVERAGE: f64 = 8.0;
pub const DEFAULT_POINTS: usize = 4097;
/// Surviving norms at or below this are treated as empty post-selections.
pub const MIN_CONDITIONING_NORM: f64 = 1e-30;

/// Uniform momentum grid with an odd number of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentumGrid {
    p_min: f64,
    p_max: f64,
    n: usize,
}

impl MomentumGrid {
    pub fn new(p_min: f64, p_max: f64, n: usize) -> Result<Self> {
        if !(p_min.is_finite() && p_max.is_finite() && p_min < p_max) {
            return Err(Error::InvalidGrid(format!(
                "bounds must be finite with p_min < p_max, got [{p_min:e}, {p_max:e}]"
            )));
        }
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "point count must be odd and at least 3, got {n}"
            )));
        }
        Ok(Self { p_min, p_max, n })
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.p_max - self.p_min) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.p_max
        } else {
            self.p_min + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Same bounds, 2(n − 1) intervals instead of n − 1.
    pub fn refined(&self) -> Self {
        Self {
            n: 2 * self.n - 1,
            ..*self
        }
    }

    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.n {
            return Err(Error::InvalidGrid(format!(
                "{} samples on a {}-point grid",
                values.len(),
                self.n
            )));
        }
        simpson(values, self.spacing())
    }

    /// Largest |p| on the grid.
    pub fn max_abs_momentum(&self) -> f64 {
        self.p_min.abs().max(self.p_max.abs())
    }
}

/// Grid spanning p₀ ± coverage·σ_t(t_max).
///
/// Fails if `t_max` is past the validity limit, if coverage is below
/// [`MIN_COVERAGE`], or if the span reaches the first-order momentum bound
/// that `dynamics` enforces.
pub fn build_grid(
    state: &GaussianMomentumState,
    dynamics: &Dynamics,
    t_max: f64,
    coverage_sigmas: f64,
    n: usize,
) -> Result<MomentumGrid> {
    if !(coverage_sigmas.is_finite() && coverage_sigmas >= MIN_COVERAGE) {
        return Err(Error::InvalidParameter {
            name: "coverage",
            value: coverage_sigmas,
            reason: "grid must cover at least 6 effective standard deviations",
        });
    }
    let var = effective_variance(state, &dynamics.atom, &dynamics.consts, t_max)?;
    let half = coverage_sigmas * var.sqrt();
    let grid = MomentumGrid::new(state.p0() - half, state.p0() + half, n)?;
    check_grid(&grid, dynamics)?;
    Ok(grid)
}

fn check_grid(grid: &MomentumGrid, dynamics: &Dynamics) -> Result<()> {
    if let Some(limit) = dynamics.momentum_limit() {
        if grid.max_abs_momentum() >= limit {
            return Err(Error::GridOutOfValidity {
                p_min: grid.p_min,
                p_max: grid.p_max,
                limit,
            });
        }
    }
    Ok(())
}

/// Complex amplitude sampled on a momentum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexAmplitudeField {
    grid: MomentumGrid,
    values: Vec<Complex64>,
}

impl ComplexAmplitudeField {
    pub fn new(grid: MomentumGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} amplitudes on a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values
            .iter()
            .position(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::InvalidGrid(format!(
                "non-finite amplitude at node {bad}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn abs2(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// ∫|f|² dp.
    pub fn norm_sq(&self) -> f64 {
        self.grid
            .integrate(&self.abs2())
            .expect("grid invariants guarantee an odd node count")
    }

    /// ∫p|f|² dp / ∫|f|² dp.
    pub fn mean_momentum(&self) -> Result<f64> {
        let density = self.abs2();
        let norm = self.grid.integrate(&density)?;
        if !(norm > MIN_CONDITIONING_NORM) {
            return Err(Error::VanishingNorm { norm });
        }
        let first: Vec<f64> = density
            .iter()
            .enumerate()
            .map(|(i, d)| self.grid.point(i) * d)
            .collect();
        Ok(self.grid.integrate(&first)? / norm)
    }

    /// Multiplies every amplitude by e^{iθ}.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * phase).collect(),
        }
    }
}

/// Real Gaussian ψ(p,0) = (2πσ²)^{-1/4} exp(−(p − p₀)²/4σ²) on `grid`.
pub fn initial_wavefunction(
    state: &GaussianMomentumState,
    grid: &MomentumGrid,
) -> ComplexAmplitudeField {
    let values = (0..grid.len())
        .map(|i| Complex64::new(state.amplitude(grid.point(i)), 0.0))
        .collect();
    ComplexAmplitudeField {
        grid: *grid,
        values,
    }
}

/// Both branches of the system–detector state at one time.
#[derive(Debug, Clone)]
pub struct EvolutionSnapshot {
    pub t: f64,
    pub model: DispersionModel,
    /// Atom still excited.
    pub psi: ComplexAmplitudeField,
    /// Photon handed to the detector.
    pub chi: ComplexAmplitudeField,
    /// |ψ(p,0)|².
    pub initial_density: Vec<f64>,
    /// |ψ(p,0)|²(1 − e^{−Γ(p)t}). Equal to |χ|² wherever Γ(p) ≥ 0; negative
    /// where a formal first-order rate is negative.
    pub detector_density: Vec<f64>,
    pub norm_sq_psi: f64,
    pub norm_sq_chi: f64,
    /// Conditional ⟨p⟩_t, absent when the surviving norm vanishes.
    pub mean_p: Option<f64>,
}

impl EvolutionSnapshot {
    /// max_p |(|ψ|² + χ-density) − |ψ₀|²| / |ψ₀|² over nodes with |ψ₀|² > 0.
    ///
    /// Where a formal rate makes |ψ|² exceed |ψ₀|² the two branch terms
    /// cancel, so the denominator there is the largest of the three terms.
    pub fn branch_residual(&self) -> f64 {
        self.psi
            .values()
            .iter()
            .zip(&self.detector_density)
            .zip(&self.initial_density)
            .filter(|(_, &d0)| d0 > 0.0)
            .map(|((psi, &chi), &d0)| {
                let survived = psi.norm_sqr();
                let scale = d0.max(survived).max(chi.abs());
                ((survived + chi) - d0).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    /// |∫|ψ|² + ∫χ-density − ∫|ψ₀|²|.
    pub fn global_norm_residual(&self) -> f64 {
        let n0 = self
            .psi
            .grid()
            .integrate(&self.initial_density)
            .expect("grid invariants guarantee an odd node count");
        (self.norm_sq_psi + self.norm_sq_chi - n0).abs()
    }
}

struct PointEvolution {
    psi: Complex64,
    chi: Complex64,
    detector_density: f64,
}

fn evolve_point(amp0: Complex64, p: f64, dynamics: &Dynamics, t: f64) -> Result<PointEvolution> {
    let rate = dynamics.decay_rate(p)?;
    let phase = Complex64::from_polar(1.0, -dynamics.energy(p) * t / dynamics.consts.hbar());
    let decayed_fraction = -(-rate * t).exp_m1();
    Ok(PointEvolution {
        psi: amp0 * phase * (-0.5 * rate * t).exp(),
        chi: amp0 * phase * Complex64::new(decayed_fraction, 0.0).sqrt(),
        detector_density: amp0.norm_sqr() * decayed_fraction,
    })
}

fn evolve_points(
    field0: &ComplexAmplitudeField,
    dynamics: &Dynamics,
    t: f64,
) -> Result<Vec<PointEvolution>> {
    non_negative_time(t)?;
    check_grid(&field0.grid, dynamics)?;
    let grid = field0.grid;
    field0
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &amp0)| evolve_point(amp0, grid.point(i), dynamics, t))
        .collect()
}

/// Propagates an arbitrary initial field to time `t` and computes both branch
/// norms and the conditional mean.
pub fn evolve(
    field0: &ComplexAmplitudeField,
    dynamics: &Dynamics,
    t: f64,
) -> Result<EvolutionSnapshot> {
    let points = evolve_points(field0, dynamics, t)?;
    let grid = field0.grid;
    let (psi, (chi, detector_density)): (Vec<_>, (Vec<_>, Vec<_>)) = points
        .into_iter()
        .map(|pt| (pt.psi, (pt.chi, pt.detector_density)))
        .unzip();
    let psi = ComplexAmplitudeField { grid, values: psi };
    let chi = ComplexAmplitudeField { grid, values: chi };
    let norm_sq_psi = psi.norm_sq();
    let norm_sq_chi = grid.integrate(&detector_density)?;
    let mean_p = psi.mean_momentum().ok();
    Ok(EvolutionSnapshot {
        t,
        model: dynamics.model,
        initial_density: field0.abs2(),
        psi,
        chi,
        detector_density,
        norm_sq_psi,
        norm_sq_chi,
        mean_p,
    })
}

/// χ(p,t) alone.
pub fn detector_amplitude(
    field0: &ComplexAmplitudeField,
    dynamics: &Dynamics,
    t: f64,
) -> Result<ComplexAmplitudeField> {
    let chi = evolve_points(field0, dynamics, t)?
        .into_iter()
        .map(|pt| pt.chi)
        .collect();
    Ok(ComplexAmplitudeField {
        grid: field0.grid,
        values: chi,
    })
}

/// Conditional ⟨p⟩_t of a snapshot, by quadrature.
pub fn conditional_mean_momentum(snapshot: &EvolutionSnapshot) -> Result<f64> {
    snapshot.psi.mean_momentum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionComparison {
    pub t: f64,
    pub mean_first_order: f64,
    pub mean_exact: f64,
    /// |Δ⟨p⟩| / |⟨p⟩_first-order|; zero when both means vanish.
    pub relative_deviation: f64,
}

/// Conditional means under both dispersion models on one shared grid.
pub fn dispersion_comparison(
    state: &GaussianMomentumState,
    dynamics: &Dynamics,
    t: f64,
    coverage_sigmas: f64,
    n: usize,
) -> Result<DispersionComparison> {
    let first_order = dynamics.with_model(DispersionModel::FirstOrder);
    let grid = build_grid(state, &first_order, t, coverage_sigmas, n)?;
    let field0 = initial_wavefunction(state, &grid);
    let mean_first_order = conditional_mean_momentum(&evolve(&field0, &first_order, t)?)?;
    let exact = dynamics.with_model(DispersionModel::ExactRelativistic);
    let mean_exact = conditional_mean_momentum(&evolve(&field0, &exact, t)?)?;
    let diff = (mean_exact - mean_first_order).abs();
    let relative_deviation = if diff == 0.0 {
        0.0
    } else {
        diff / mean_first_order.abs()
    };
    Ok(DispersionComparison {
        t,
        mean_first_order,
        mean_exact,
        relative_deviation,
    })
}

/// Gaussian recovered from a least-squares quadratic fit to ln(density).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub variance: f64,
    /// Fitted density at the mean.
    pub peak: f64,
    /// Largest |ln ρ − fit| over the fitted nodes.
    pub max_log_residual: f64,
    pub nodes_used: usize,
}

/// Fits ln ρ(p) = a + b·p + c·p² over nodes with ρ ≥ `floor`·max ρ.
pub fn fit_log_gaussian(grid: &MomentumGrid, density: &[f64], floor: f64) -> Result<GaussianFit> {
    if density.len() != grid.len() {
        return Err(Error::InvalidGrid(format!(
            "{} samples on a {}-point grid",
            density.len(),
            grid.len()
        )));
    }
    let (peak_idx, peak) =
        density
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, d)| {
                if d > best.1 {
                    (i, d)
                } else {
                    best
                }
            });
    if !(peak > 0.0) {
        return Err(Error::VanishingNorm { norm: peak });
    }
    // Centre and scale the abscissa so the normal equations stay well conditioned.
    let centre = grid.point(peak_idx);
    let cutoff = floor * peak;
    let samples: Vec<(f64, f64)> = (0..grid.len())
        .filter(|&i| density[i] >= cutoff && density[i] > 0.0)
        .map(|i| (grid.point(i) - centre, density[i].ln()))
        .collect();
    if samples.len() < 3 {
        return Err(Error::InvalidGrid(
            "fewer than 3 nodes above the fit floor".to_string(),
        ));
    }
    let scale = samples.iter().map(|(u, _)| u.abs()).fold(0.0, f64::max);
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for &(u, y) in &samples {
        let v = Vector3::new(1.0, u / scale, (u / scale).powi(2));
        normal += v * v.transpose();
        rhs += v * y;
    }
    let coef = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidGrid("singular Gaussian fit".to_string()))?;
    let (a, b, c) = (coef[0], coef[1] / scale, coef[2] / (scale * scale));
    if !(c < 0.0) {
        return Err(Error::InvalidGrid("log-density is not concave".to_string()));
    }
    let max_log_residual = samples
        .iter()
        .map(|&(u, y)| (y - (a + b * u + c * u * u)).abs())
        .fold(0.0, f64::max);
    let variance = -0.5 / c;
    let offset = -b / (2.0 * c);
    Ok(GaussianFit {
        mean: centre + offset,
        variance,
        peak: (a + b * offset + c * offset * offset).exp(),
        max_log_residual,
        nodes_used: samples.len(),
    })
}

/// Grid momentum with the largest density.
pub fn peak_momentum(grid: &MomentumGrid, density: &[f64]) -> f64 {
    let idx = density
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
            if d > best.1 {
                (i, d)
            } else {
                best
            }
        })
        .0;
    grid.point(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{mean_momentum, unnormalized_density};
    use crate::physics::{AtomParams, PhysicalConstants, RatePolicy};
    use proptest::prelude::*;

    fn figure1() -> (GaussianMomentumState, Dynamics) {
        let state = GaussianMomentumState::new(1.0, 0.2).unwrap();
        let atom = AtomParams::new(1.0, 5.0).unwrap();
        let dyn_ = Dynamics::new(
            atom,
            PhysicalConstants::natural(),
            DispersionModel::FirstOrder,
        )
        .with_policy(RatePolicy::Formal);
        (state, dyn_)
    }

    #[test]
    fn grid_validation() {
        assert!(MomentumGrid::new(0.0, 1.0, 4).is_err());
        assert!(MomentumGrid::new(0.0, 1.0, 1).is_err());
        assert!(MomentumGrid::new(1.0, 0.0, 5).is_err());
        let g = MomentumGrid::new(-1.0, 1.0, 5).unwrap();
        assert_eq!(g.points(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.refined().len(), 9);
    }

    #[test]
    fn figure1_grid_span() {
        let (s, d) = figure1();
        let g = build_grid(&s, &d, 1.0, 8.0, 4097).unwrap();
        let half = 8.0 * 0.05f64.sqrt();
        assert!((g.p_min() - (1.0 - half)).abs() < 1e-14);
        assert!((g.p_max() - (1.0 + half)).abs() < 1e-14);
        assert!((g.p_min() + 0.789).abs() < 1e-3 && (g.p_max() - 2.789).abs() < 1e-3);

        let g0 = build_grid(&s, &d, 0.0, 6.0, 101).unwrap();
        assert!((g0.p_max() - 2.2).abs() < 1e-14);
        assert!(build_grid(&s, &d, 1.0, 5.9, 4097).is_err());
        assert!(build_grid(&s, &d, 1.0, 8.0, 4096).is_err());
        assert!(build_grid(&s, &d, 5.0, 8.0, 4097)
            .unwrap_err()
            .is_validity());
    }

    #[test]
    fn strict_policy_rejects_figure1_grid() {
        let (s, d) = figure1();
        let strict = d.with_policy(RatePolicy::Strict);
        let err = build_grid(&s, &strict, 1.0, 8.0, 4097).unwrap_err();
        assert!(matches!(err, Error::GridOutOfValidity { .. }));
        let exact = strict.with_model(DispersionModel::ExactRelativistic);
        assert!(build_grid(&s, &exact, 1.0, 8.0, 4097).is_ok());

        // evolve refuses a hand-built grid past the bound as well.
        let g = MomentumGrid::new(0.0, 1.5, 11).unwrap();
        let f0 = initial_wavefunction(&s, &g);
        assert!(evolve(&f0, &strict, 0.1).unwrap_err().is_validity());
        assert!(detector_amplitude(&f0, &strict, 0.1)
            .unwrap_err()
            .is_validity());
    }

    #[test]
    fn initial_field_properties() {
        let (s, d) = figure1();
        let g = build_grid(&s, &d, 0.0, 8.0, 2049).unwrap();
        let f0 = initial_wavefunction(&s, &g);
        let peak = f0.values()[1024];
        assert_eq!(g.point(1024), 1.0);
        assert!((peak.re - (2.0 * std::f64::consts::PI * 0.04f64).powf(-0.25)).abs() < 1e-15);
        assert_eq!(peak.im, 0.0);
        assert!((f0.norm_sq() - 1.0).abs() < 1e-8);
        assert!((f0.mean_momentum().unwrap() - 1.0).abs() < 1e-10 * 0.2);
    }

    #[test]
    fn evolve_at_zero_is_identity() {
        let (s, d) = figure1();
        let g = build_grid(&s, &d, 1.0, 8.0, 1025).unwrap();
        let f0 = initial_wavefunction(&s, &g);
        let snap = evolve(&f0, &d, 0.0).unwrap();
        assert_eq!(snap.psi, f0);
        assert!(snap
            .chi
            .values()
            .iter()
            .all(|c| *c == Complex64::new(0.0, 0.0)));
        assert!((snap.norm_sq_psi - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stable_atom_only_picks_up_phase() {
        let s = GaussianMomentumState::new(0.4, 0.1).unwrap();
        let atom = AtomParams::new(1.0, 0.0).unwrap();
        let d = Dynamics::new(
            atom,
            PhysicalConstants::natural(),
            DispersionModel::FirstOrder,
        );
        let g = build_grid(&s, &d, 3.0, 8.0, 513).unwrap();
        let f0 = initial_wavefunction(&s, &g);
        let snap = evolve(&f0, &d, 3.0).unwrap();
        for (a, b) in snap.psi.values().iter().zip(f0.values()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-15 * b.norm());
        }
        let cmp = dispersion_comparison(&s, &d, 3.0, 8.0, 513).unwrap();
        assert_eq!(cmp.relative_deviation, 0.0);
    }

    #[test]
    fn figure1_density_matches_closed_form() {
        let (s, d) = figure1();
        let g = build_grid(&s, &d, 1.0, 8.0, 4097).unwrap();
        let f0 = initial_wavefunction(&s, &g);
        for t in [0.0, 0.5, 1.0] {
            let snap = evolve(&f0, &d, t).unwrap();
            for (i, v) in snap.psi.values().iter().enumerate() {
                let exact = unnormalized_density(&s, &d.atom, &d.consts, g.point(i), t).unwrap();
                assert!((v.norm_sqr() - exact).abs() <= 1e-10 * exact, "t={t} i={i}");
            }
        }
        let snap = evolve(&f0, &d, 1.0).unwrap();
        let peak = peak_momentum(&g, &snap.psi.abs2());
        assert!((peak - 1.25).abs() <= g.spacing());
        assert!((snap.mean_p.unwrap() - 1.25).abs() < 1e-6);
    }

    #[test]
    fn gaussian_fit_recovers_parameters() {
        let (s, d) = figure1();
        let g = build_grid(&s, &d, 1.0, 8.0, 4097).unwrap();
        let snap = evolve(&initial_wavefunction(&s, &g), &d, 1.0).unwrap();
        let fit = fit_log_gaussian(&g, &snap.psi.abs2(), 1e-8).unwrap();
        assert!((fit.mean / 1.25 - 1.0).abs() < 1e-9);
        assert!((fit.variance / 0.05 - 1.0).abs() < 1e-9);
        assert!(fit.max_log_residual < 1e-10);
    }

    #[test]
    fn detector_branch_saturates() {
        let s = GaussianMomentumState::new(1.0, 0.2).unwrap();
        let atom = AtomParams::new(1.0, 5.0).unwrap();
        let d = Dynamics::new(
            atom,
            PhysicalConstants::natural(),
            DispersionModel::ExactRelativistic,
        );
        let g = MomentumGrid::new(-1.0, 3.0, 401).unwrap();
        let f0 = initial_wavefunction(&s, &g);
        let chi = detector_amplitude(&f0, &d, 200.0).unwrap();
        for (c, a) in chi.values().iter().zip(f0.values()) {
            assert!((c.norm_sqr() - a.norm_sqr()).abs() <= 1e-12 * a.norm_sqr());
        }
        let zero = detector_amplitude(&f0, &d, 0.0).unwrap();
        assert!(zero.values().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn branch_identity_and_global_norm() {
        let (s, d) = figure1();
        let g = build_grid(&s, &d, 1.0, 8.0, 4097).unwrap();
        let f0 = initial_wavefunction(&s, &g);
        for t in [0.0, 0.1, 0.5, 1.0] {
            let snap = evolve(&f0, &d, t).unwrap();
            assert!(snap.branch_residual() < 1e-12);
            assert!(snap.global_norm_residual() < 1e-8);
        }
    }

    #[test]
    fn formal_detector_density_goes_negative() {
        let (s, d) = figure1();
        let g = MomentumGrid::new(1.0, 2.0, 3).unwrap();
        let snap = evolve(&initial_wavefunction(&s, &g), &d, 1.0).unwrap();
        // p = 2: Γ = 5(1 − 2) < 0, so the no-decay weight exceeds one.
        assert!(snap.detector_density[2] < 0.0);
        assert!(snap.psi.values()[2].norm_sqr() > snap.initial_density[2]);
        assert!(snap.branch_residual() < 1e-12);
    }

    #[test]
    fn norm_decays_monotonically() {
        let (s, d) = figure1();
        let g = build_grid(&s, &d, 1.0, 8.0, 1025).unwrap();
        let f0 = initial_wavefunction(&s, &g);
        let norms: Vec<f64> = (0..=10)
            .map(|k| evolve(&f0, &d, 0.1 * k as f64).unwrap().norm_sq_psi)
            .collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn vanishing_norm_is_an_error() {
        let s = GaussianMomentumState::new(0.0, 0.1).unwrap();
        let atom = AtomParams::new(1.0, 100.0).unwrap();
        let d = Dynamics::new(
            atom,
            PhysicalConstants::natural(),
            DispersionModel::ExactRelativistic,
        );
        let g = MomentumGrid::new(-1.0, 1.0, 101).unwrap();
        let snap = evolve(&initial_wavefunction(&s, &g), &d, 1.0).unwrap();
        assert!(snap.mean_p.is_none());
        assert!(matches!(
            conditional_mean_momentum(&snap),
            Err(Error::VanishingNorm { .. })
        ));
    }

    #[test]
    fn zero_mean_stays_zero() {
        let s = GaussianMomentumState::new(0.0, 0.2).unwrap();
        let (_, d) = figure1();
        let g = build_grid(&s, &d, 1.0, 8.0, 2049).unwrap();
        let snap = evolve(&initial_wavefunction(&s, &g), &d, 1.0).unwrap();
        assert!(conditional_mean_momentum(&snap).unwrap().abs() < 1e-10 * 0.2);
    }

    #[test]
    fn global_phase_does_not_move_the_mean() {
        let (s, d) = figure1();
        let g = build_grid(&s, &d, 1.0, 8.0, 1025).unwrap();
        let f0 = initial_wavefunction(&s, &g);
        let a = evolve(&f0, &d, 0.7).unwrap();
        let b = evolve(&f0.with_global_phase(1.234), &d, 0.7).unwrap();
        let (ma, mb) = (a.mean_p.unwrap(), b.mean_p.unwrap());
        assert!((ma - mb).abs() < 1e-14);
        assert!((ma - mean_momentum(&s, &d.atom, &d.consts, 0.7).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn table1_dispersion_deviation_is_negligible() {
        let s = GaussianMomentumState::new(1.44e-27, 1.0e-28).unwrap();
        let atom = AtomParams::from_lifetime(1.44e-25, 27e-9).unwrap();
        let k = PhysicalConstants::new(3.00e8, PhysicalConstants::HBAR).unwrap();
        let d = Dynamics::new(atom, k, DispersionModel::FirstOrder);
        let cmp = dispersion_comparison(&s, &d, 27e-9, 8.0, 4097).unwrap();
        assert!(cmp.relative_deviation < 1e-20);
    }

    #[test]
    fn figure1_dispersion_deviation_is_reported() {
        let s = GaussianMomentumState::new(0.5, 0.1).unwrap();
        let atom = AtomParams::new(1.0, 5.0).unwrap();
        let d = Dynamics::new(
            atom,
            PhysicalConstants::natural(),
            DispersionModel::FirstOrder,
        );
        let cmp = dispersion_comparison(&s, &d, 1.0, 8.0, 2049).unwrap();
        assert!(cmp.relative_deviation > 0.0);
        assert!(cmp.mean_exact > 0.5 && cmp.mean_first_order > 0.5);
    }

    proptest! {
        #[test]
        fn evolution_is_a_semigroup(t1 in 0.0f64..0.6, t2 in 0.0f64..0.6) {
            let (s, d) = figure1();
            let g = build_grid(&s, &d, 1.2, 8.0, 257).unwrap();
            let f0 = initial_wavefunction(&s, &g);
            let two_step = evolve(&evolve(&f0, &d, t1).unwrap().psi, &d, t2).unwrap();
            let one_step = evolve(&f0, &d, t1 + t2).unwrap();
            for (a, b) in two_step.psi.values().iter().zip(one_step.psi.values()) {
                prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300));
            }
        }

        #[test]
        fn branch_identity_for_perturbed_fields(seed in 0u64..1000, t in 0.0f64..3.0) {
            let atom = AtomParams::new(1.0, 2.0).unwrap();
            let d = Dynamics::new(atom, PhysicalConstants::natural(), DispersionModel::ExactRelativistic);
            let g = MomentumGrid::new(-2.0, 2.0, 65).unwrap();
            let values = (0..65)
                .map(|i| {
                    let x = ((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0;
                    Complex64::new(x - 0.3, 0.5 * x)
                })
                .collect();
            let f0 = ComplexAmplitudeField::new(g, values).unwrap();
            let snap = evolve(&f0, &d, t).unwrap();
            prop_assert!(snap.branch_residual() < 1e-12);
        }
    }
}
