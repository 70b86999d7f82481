//! The five experiments. Each `run_*` computes a report; `emit_*` writes it.

use std::path::{Path, PathBuf};

use serde::Serialize;
use survival_core::analytic::{
    effective_variance, ensemble_survival_probability, mean_momentum, unnormalized_density,
    AnalyticReport,
};
use survival_core::numeric::{evolve, fit_log_gaussian, initial_wavefunction, peak_momentum};
use survival_core::trajectory::{conservation_check, PartitionResiduals};
use survival_core::{Ensemble, EnsembleStats, Error as CoreError, EvolutionSnapshot, SeedSpec};

use crate::config::{Experiment, Format};
use crate::error::{CliError, Result};
use crate::output::{
    ensure_dir, file_name, fmt_f64, write_csv, write_json, write_snapshot, Document,
};

/// Nodes below this fraction of the peak are left out of Gaussian fits.
const FIT_FLOOR: f64 = 1e-10;

fn snapshots(exp: &Experiment) -> Result<Vec<EvolutionSnapshot>> {
    let field0 = initial_wavefunction(&exp.state, &exp.grid);
    exp.times
        .iter()
        .map(|&t| {
            evolve(&field0, &exp.dynamics, t)
                .map_err(|e| CliError::engine(format!("evolving to t = {t:e}"), e))
        })
        .collect()
}

fn analytic(exp: &Experiment, t: f64) -> Result<(f64, f64, f64)> {
    let (s, d) = (&exp.state, &exp.dynamics);
    let ctx = |e| CliError::engine(format!("closed forms at t = {t:e}"), e);
    Ok((
        mean_momentum(s, &d.atom, &d.consts, t).map_err(ctx)?,
        effective_variance(s, &d.atom, &d.consts, t).map_err(ctx)?,
        ensemble_survival_probability(s, &d.atom, &d.consts, t).map_err(ctx)?,
    ))
}

/// |x − reference| / max(|reference|, scale).
fn scaled_deviation(x: f64, reference: f64, scale: f64) -> f64 {
    (x - reference).abs() / reference.abs().max(scale)
}

/// Deviation in units of `sigma`; zero when both vanish.
fn z_score(deviation: f64, sigma: f64) -> f64 {
    if deviation == 0.0 {
        0.0
    } else {
        deviation / sigma
    }
}

fn unit_labels(exp: &Experiment) -> (&'static str, &'static str, &'static str) {
    match exp.config.units {
        survival_core::UnitSystem::Si => (" N", " m/s^2", " s"),
        survival_core::UnitSystem::Natural => ("", "", ""),
    }
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    /// Survival force at t = 0, F₀ = p₀σ²Γ₀/m²c².
    pub force: f64,
    /// F₀/m.
    pub acceleration: f64,
    /// m²c²/(σ²Γ₀); `null` for a stable atom.
    pub threshold_time: f64,
    pub tau0: f64,
    pub threshold_over_tau0: f64,
    pub rows: Vec<AnalyticReport>,
}

pub fn run_estimate(exp: &Experiment) -> Result<EstimateReport> {
    let (s, d) = (&exp.state, &exp.dynamics);
    let rows = exp
        .times
        .iter()
        .map(|&t| {
            AnalyticReport::evaluate(s, &d.atom, &d.consts, t)
                .map_err(|e| CliError::engine(format!("closed forms at t = {t:e}"), e))
        })
        .collect::<Result<Vec<_>>>()?;
    let force = survival_core::analytic::constant_survival_force(s, &d.atom, &d.consts);
    let threshold_time = survival_core::analytic::validity_threshold(s, &d.atom, &d.consts);
    Ok(EstimateReport {
        force,
        acceleration: survival_core::analytic::survival_acceleration(s, &d.atom, &d.consts),
        threshold_time,
        tau0: d.atom.tau0(),
        threshold_over_tau0: threshold_time / d.atom.tau0(),
        rows,
    })
}

pub fn emit_estimate(exp: &Experiment, report: &EstimateReport, out: &Path) -> Result<PathBuf> {
    ensure_dir(out)?;
    let path = out.join("estimate.json");
    write_json(&path, &Document::new("estimate", &exp.config, report))?;
    let (n, a, s) = unit_labels(exp);
    println!("survival force      F = {:.4e}{n}", report.force);
    println!("acceleration        a = {:.4e}{a}", report.acceleration);
    println!(
        "validity threshold  T = {:.4e}{s} ({:.4e} proper lifetimes)",
        report.threshold_time, report.threshold_over_tau0
    );
    Ok(path)
}

// ---------------------------------------------------------------- figure1

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Row {
    pub t: f64,
    pub file: String,
    /// Grid node with the largest |ψ|².
    pub peak_grid: f64,
    pub fit_mean: f64,
    pub fit_variance: f64,
    pub analytic_mean: f64,
    pub analytic_variance: f64,
    /// |fit − analytic| / max(|analytic mean|, σ_t).
    pub fit_mean_deviation: f64,
    /// |fit − analytic| / σ_t².
    pub fit_variance_deviation: f64,
    pub fit_max_log_residual: f64,
    /// max over nodes of ||ψ|² − closed-form density| / closed-form density.
    pub density_max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Report {
    pub grid_points: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub rows: Vec<Figure1Row>,
}

pub fn run_figure1(exp: &Experiment) -> Result<(Figure1Report, Vec<EvolutionSnapshot>)> {
    let snaps = snapshots(exp)?;
    let (s, d) = (&exp.state, &exp.dynamics);
    let points = exp.grid.points();
    let mut rows = Vec::with_capacity(snaps.len());
    for snap in &snaps {
        let t = snap.t;
        // Where |ψ₀|² has underflowed to subnormals a formal weight e^{−Γt} > 1
        // amplifies pure rounding noise; those nodes are left out.
        let density: Vec<f64> = snap
            .psi
            .abs2()
            .into_iter()
            .zip(&snap.initial_density)
            .map(|(d, &d0)| if d0 >= f64::MIN_POSITIVE { d } else { 0.0 })
            .collect();
        let (mu, var, _) = analytic(exp, t)?;
        let fit = fit_log_gaussian(&exp.grid, &density, FIT_FLOOR)
            .map_err(|e| CliError::engine(format!("Gaussian fit at t = {t:e}"), e))?;
        let mut density_max_deviation: f64 = 0.0;
        for (&p, &num) in points.iter().zip(&density) {
            let ana = unnormalized_density(s, &d.atom, &d.consts, p, t)
                .map_err(|e| CliError::engine("closed-form density", e))?;
            if ana > 0.0 && num > 0.0 {
                density_max_deviation = density_max_deviation.max(((num - ana) / ana).abs());
            }
        }
        rows.push(Figure1Row {
            t,
            file: String::new(),
            peak_grid: peak_momentum(&exp.grid, &density),
            fit_mean: fit.mean,
            fit_variance: fit.variance,
            analytic_mean: mu,
            analytic_variance: var,
            fit_mean_deviation: scaled_deviation(fit.mean, mu, var.sqrt()),
            fit_variance_deviation: (fit.variance - var).abs() / var,
            fit_max_log_residual: fit.max_log_residual,
            density_max_deviation,
        });
    }
    Ok((
        Figure1Report {
            grid_points: exp.grid.len(),
            p_min: exp.grid.p_min(),
            p_max: exp.grid.p_max(),
            rows,
        },
        snaps,
    ))
}

pub fn emit_figure1(
    exp: &Experiment,
    report: &mut Figure1Report,
    snaps: &[EvolutionSnapshot],
    out: &Path,
    format: Format,
) -> Result<PathBuf> {
    ensure_dir(out)?;
    for (i, (row, snap)) in report.rows.iter_mut().zip(snaps).enumerate() {
        row.file = file_name(&write_snapshot(
            out,
            &format!("figure1_{i:03}"),
            snap,
            format,
        )?);
    }
    let path = out.join("figure1.json");
    write_json(&path, &Document::new("figure1", &exp.config, &*report))?;
    println!(
        "{:>12} {:>14} {:>14} {:>14} {:>12}",
        "t", "peak", "fit mean", "fit variance", "max dev"
    );
    for r in &report.rows {
        println!(
            "{:>12.4e} {:>14.8} {:>14.10} {:>14.10} {:>12.3e}",
            r.t, r.peak_grid, r.fit_mean, r.fit_variance, r.density_max_deviation
        );
    }
    Ok(path)
}

// ---------------------------------------------------------------- evolve

#[derive(Debug, Clone, Serialize)]
pub struct EvolveRow {
    pub t: f64,
    pub file: String,
    pub norm_sq_psi: f64,
    pub norm_sq_chi: f64,
    /// `null` when the surviving norm is too small to condition on.
    pub mean_p: Option<f64>,
    /// max over nodes of ||ψ|² + |χ|² − |ψ₀|²|, relative per node.
    pub branch_residual: f64,
    pub global_norm_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveReport {
    pub grid_points: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub max_branch_residual: f64,
    pub rows: Vec<EvolveRow>,
}

pub fn run_evolve(exp: &Experiment) -> Result<(EvolveReport, Vec<EvolutionSnapshot>)> {
    let snaps = snapshots(exp)?;
    let rows: Vec<EvolveRow> = snaps
        .iter()
        .map(|s| EvolveRow {
            t: s.t,
            file: String::new(),
            norm_sq_psi: s.norm_sq_psi,
            norm_sq_chi: s.norm_sq_chi,
            mean_p: s.mean_p,
            branch_residual: s.branch_residual(),
            global_norm_residual: s.global_norm_residual(),
        })
        .collect();
    let max_branch_residual = rows.iter().map(|r| r.branch_residual).fold(0.0, f64::max);
    Ok((
        EvolveReport {
            grid_points: exp.grid.len(),
            p_min: exp.grid.p_min(),
            p_max: exp.grid.p_max(),
            max_branch_residual,
            rows,
        },
        snaps,
    ))
}

pub fn emit_evolve(
    exp: &Experiment,
    report: &mut EvolveReport,
    snaps: &[EvolutionSnapshot],
    out: &Path,
    format: Format,
) -> Result<PathBuf> {
    ensure_dir(out)?;
    for (i, (row, snap)) in report.rows.iter_mut().zip(snaps).enumerate() {
        row.file = file_name(&write_snapshot(
            out,
            &format!("evolve_{i:03}"),
            snap,
            format,
        )?);
    }
    let path = out.join("evolve.json");
    write_json(&path, &Document::new("evolve", &exp.config, &*report))?;
    println!(
        "{:>12} {:>14} {:>14} {:>16} {:>12}",
        "t", "|psi|^2", "|chi|^2", "<p>", "branch res"
    );
    for r in &report.rows {
        let mean = r
            .mean_p
            .map_or_else(|| "n/a".to_string(), |m| format!("{m:.8e}"));
        println!(
            "{:>12.4e} {:>14.8e} {:>14.8e} {:>16} {:>12.3e}",
            r.t, r.norm_sq_psi, r.norm_sq_chi, mean, r.branch_residual
        );
    }
    Ok(path)
}

// ---------------------------------------------------------------- ensemble

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleRow {
    pub t: f64,
    /// `null` when no trajectory survives to `t`.
    pub stats: Option<EnsembleStats>,
    pub partition_residuals: Option<PartitionResiduals>,
    pub partition_relative: Option<PartitionResiduals>,
    pub analytic_mean: f64,
    /// (survivor mean − closed form) / standard error.
    pub z_mean: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub seeds: SeedSpec,
    pub trajectories: usize,
    pub horizon: f64,
    pub rows: Vec<EnsembleRow>,
}

pub fn simulate(exp: &Experiment) -> Result<Ensemble> {
    Ensemble::simulate(
        &exp.state,
        &exp.dynamics,
        exp.config.ensemble.trajectories,
        exp.horizon,
        exp.seeds,
    )
    .map_err(|e| CliError::engine("simulating the ensemble", e))
}

fn ensemble_stats(ens: &Ensemble, exp: &Experiment, t: f64) -> Result<Option<EnsembleStats>> {
    match ens.stats(&exp.dynamics, t) {
        Ok(s) => Ok(Some(s)),
        Err(CoreError::EmptySurvivors { .. }) => Ok(None),
        Err(e) => Err(CliError::engine(
            format!("ensemble statistics at t = {t:e}"),
            e,
        )),
    }
}

pub fn run_ensemble(exp: &Experiment) -> Result<EnsembleReport> {
    let ens = simulate(exp)?;
    let rows = exp
        .times
        .iter()
        .map(|&t| {
            let stats = ensemble_stats(&ens, exp, t)?;
            let (mu, _, _) = analytic(exp, t)?;
            let residuals = stats.as_ref().map(conservation_check);
            Ok(EnsembleRow {
                t,
                partition_relative: stats.as_ref().zip(residuals).map(|(s, r)| r.relative_to(s)),
                partition_residuals: residuals,
                analytic_mean: mu,
                z_mean: stats
                    .as_ref()
                    .and_then(|s| Some(z_score(s.mean_p_survived - mu, s.se_survived?))),
                stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleReport {
        seeds: ens.seeds,
        trajectories: ens.records.len(),
        horizon: ens.horizon,
        rows,
    })
}

pub fn emit_ensemble(exp: &Experiment, report: &EnsembleReport, out: &Path) -> Result<PathBuf> {
    ensure_dir(out)?;
    let path = out.join("ensemble.json");
    write_json(&path, &Document::new("ensemble", &exp.config, report))?;
    println!(
        "{:>12} {:>10} {:>16} {:>12} {:>16} {:>8}",
        "t", "survived", "<p> survivors", "SE", "closed form", "z"
    );
    for r in &report.rows {
        match &r.stats {
            Some(s) => println!(
                "{:>12.4e} {:>10} {:>16.8e} {:>12} {:>16.8e} {:>8}",
                r.t,
                s.n_survived,
                s.mean_p_survived,
                s.se_survived.map_or("n/a".into(), |x| format!("{x:.3e}")),
                r.analytic_mean,
                r.z_mean.map_or("n/a".into(), |z| format!("{z:.2}")),
            ),
            None => println!("{:>12.4e} {:>10} no survivors", r.t, 0),
        }
    }
    Ok(path)
}

// ---------------------------------------------------------------- compare

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub mean_analytic: f64,
    pub mean_numeric: Option<f64>,
    pub mean_mc: Option<f64>,
    pub mean_mc_se: Option<f64>,
    pub survival_analytic: f64,
    /// ∫|ψ(t)|² / ∫|ψ₀|² on the grid.
    pub survival_numeric: f64,
    pub survival_mc: f64,
    pub survival_mc_se: Option<f64>,
    /// |numeric − analytic| / max(|analytic|, σ_t).
    pub mean_numeric_deviation: Option<f64>,
    /// (MC − analytic) / MC standard error.
    pub mean_mc_z: Option<f64>,
    /// |numeric − analytic| / analytic.
    pub survival_numeric_deviation: f64,
    /// (MC − analytic) / max(√(|P(1−P)|/n), weighted standard error).
    pub survival_mc_z: Option<f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub grid_points: usize,
    pub trajectories: usize,
    pub seeds: SeedSpec,
    pub passed: bool,
    pub rows: Vec<ComparisonRow>,
}

pub const COMPARISON_COLUMNS: [&str; 14] = [
    "t",
    "mean_analytic",
    "mean_numeric",
    "mean_mc",
    "mean_mc_se",
    "survival_analytic",
    "survival_numeric",
    "survival_mc",
    "survival_mc_se",
    "mean_numeric_deviation",
    "mean_mc_z",
    "survival_numeric_deviation",
    "survival_mc_z",
    "passed",
];

pub fn run_compare(exp: &Experiment) -> Result<ComparisonReport> {
    let gates = exp.config.gates;
    let snaps = snapshots(exp)?;
    let norm0 = exp
        .grid
        .integrate(&initial_wavefunction(&exp.state, &exp.grid).abs2())
        .map_err(|e| CliError::engine("initial norm", e))?;
    let ens = simulate(exp)?;
    let n = ens.records.len() as f64;

    let mut rows = Vec::with_capacity(snaps.len());
    for snap in &snaps {
        let t = snap.t;
        let (mu, var, surv) = analytic(exp, t)?;
        let stats = ensemble_stats(&ens, exp, t)?;
        let survival_numeric = snap.norm_sq_psi / norm0;
        let survival_mc = stats.as_ref().map_or(0.0, |s| s.survival_fraction);
        let mut failures = Vec::new();

        let mean_numeric_deviation = snap.mean_p.map(|m| scaled_deviation(m, mu, var.sqrt()));
        match mean_numeric_deviation {
            Some(d) if d <= gates.mean_rel => {}
            Some(d) => failures.push(format!("numeric mean deviation {d:.3e}")),
            None => failures.push("numeric mean unavailable".into()),
        }

        let mean_mc_z = stats
            .as_ref()
            .and_then(|s| Some(z_score(s.mean_p_survived - mu, s.se_survived?)));
        match mean_mc_z {
            Some(z) if z.abs() <= gates.mc_sigmas => {}
            Some(z) => failures.push(format!("MC survivor mean off by {z:.2} SE")),
            None => failures.push("MC survivor mean unavailable".into()),
        }

        let survival_numeric_deviation = (survival_numeric - surv).abs() / surv;
        if !(survival_numeric_deviation <= gates.survival_rel) {
            failures.push(format!(
                "numeric survival deviation {survival_numeric_deviation:.3e}"
            ));
        }

        let binomial = (surv * (1.0 - surv)).abs().sqrt() / n.sqrt();
        let weighted = stats
            .as_ref()
            .and_then(|s| s.survival_fraction_se)
            .unwrap_or(0.0);
        let survival_mc_z = if n >= 2.0 {
            Some(z_score(survival_mc - surv, binomial.max(weighted)))
        } else {
            None
        };
        match survival_mc_z {
            Some(z) if z.abs() <= gates.mc_sigmas => {}
            Some(z) => failures.push(format!("MC survival fraction off by {z:.2} SE")),
            None => failures.push("MC survival fraction needs two trajectories".into()),
        }

        rows.push(ComparisonRow {
            t,
            mean_analytic: mu,
            mean_numeric: snap.mean_p,
            mean_mc: stats.as_ref().map(|s| s.mean_p_survived),
            mean_mc_se: stats.as_ref().and_then(|s| s.se_survived),
            survival_analytic: surv,
            survival_numeric,
            survival_mc,
            survival_mc_se: stats.as_ref().and_then(|s| s.survival_fraction_se),
            mean_numeric_deviation,
            mean_mc_z,
            survival_numeric_deviation,
            survival_mc_z,
            failures,
        });
    }
    Ok(ComparisonReport {
        grid_points: exp.grid.len(),
        trajectories: ens.records.len(),
        seeds: ens.seeds,
        passed: rows.iter().all(|r| r.failures.is_empty()),
        rows,
    })
}

/// Writes `compare.json` and `compare.csv`, then turns gate failures into
/// an error.
pub fn emit_compare(exp: &Experiment, report: &ComparisonReport, out: &Path) -> Result<PathBuf> {
    ensure_dir(out)?;
    let path = out.join("compare.json");
    write_json(&path, &Document::new("compare", &exp.config, report))?;
    let opt = |x: Option<f64>| x.unwrap_or(f64::NAN);
    write_csv(
        &out.join("compare.csv"),
        &COMPARISON_COLUMNS,
        report.rows.iter().map(|r| {
            vec![
                r.t,
                r.mean_analytic,
                opt(r.mean_numeric),
                opt(r.mean_mc),
                opt(r.mean_mc_se),
                r.survival_analytic,
                r.survival_numeric,
                r.survival_mc,
                opt(r.survival_mc_se),
                opt(r.mean_numeric_deviation),
                opt(r.mean_mc_z),
                r.survival_numeric_deviation,
                opt(r.survival_mc_z),
                if r.failures.is_empty() { 1.0 } else { 0.0 },
            ]
        }),
    )?;

    println!(
        "{:>12} {:>16} {:>11} {:>8} {:>14} {:>11} {:>8}  status",
        "t", "<p> closed", "num dev", "MC z", "P closed", "num dev", "MC z"
    );
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), fmt_short);
    for r in &report.rows {
        println!(
            "{:>12.4e} {:>16.10e} {:>11} {:>8} {:>14.8e} {:>11.3e} {:>8}  {}",
            r.t,
            r.mean_analytic,
            show(r.mean_numeric_deviation),
            r.mean_mc_z.map_or("n/a".into(), |z| format!("{z:.2}")),
            r.survival_analytic,
            r.survival_numeric_deviation,
            r.survival_mc_z.map_or("n/a".into(), |z| format!("{z:.2}")),
            if r.failures.is_empty() { "ok" } else { "FAIL" },
        );
    }

    let failures: Vec<String> = report
        .rows
        .iter()
        .flat_map(|r| {
            r.failures
                .iter()
                .map(move |f| format!("t = {}: {f}", fmt_f64(r.t)))
        })
        .collect();
    if failures.is_empty() {
        Ok(path)
    } else {
        Err(CliError::Gate {
            count: failures.len(),
            summary: failures.join("; "),
        })
    }
}

fn fmt_short(x: f64) -> String {
    format!("{x:.3e}")
}
