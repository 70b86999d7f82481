//! Run configuration: a single JSON document, two compiled-in presets, and
//! environment overrides.
//!
//! Every config key can be overridden from the environment. The variable name
//! is `SURVIVAL_` followed by the key path in upper case with `__` between
//! levels, e.g. `SURVIVAL_STATE__P0=2e-27` or `SURVIVAL_ENSEMBLE__SEED=7`.
//! Values are parsed as JSON and fall back to a plain string, so
//! `SURVIVAL_TIMES=[0,0.5]` and `SURVIVAL_MODEL=exact` both work.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use survival_core::analytic::check_time;
use survival_core::numeric::{build_grid, DEFAULT_COVERAGE, DEFAULT_POINTS};
use survival_core::{
    AtomParams, DispersionModel, Dynamics, GaussianMomentumState, MomentumGrid, PhysicalConstants,
    RatePolicy, SeedSpec, UnitSystem,
};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const ENV_PREFIX: &str = "SURVIVAL_";
pub const ENV_SEPARATOR: &str = "__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "rb87-table1")]
    Rb87Table1,
    #[value(name = "figure1")]
    Figure1,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub units: UnitSystem,
    /// Overrides the unit system's c and ħ. Only meaningful in SI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
    pub atom: AtomConfig,
    pub state: StateConfig,
    #[serde(default = "default_model")]
    pub model: DispersionModel,
    #[serde(default)]
    pub policy: RatePolicy,
    pub times: TimeSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub gates: Gates,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_model() -> DispersionModel {
    DispersionModel::FirstOrder
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub c: f64,
    pub hbar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub mass: f64,
    /// Proper decay rate Γ₀ = 1/τ₀. Zero means a stable atom.
    pub gamma0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub p0: f64,
    pub sigma: f64,
}

/// Either an explicit list or `count` evenly spaced times from `start` to
/// `stop` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl TimeSpec {
    pub fn expand(&self) -> Vec<f64> {
        match *self {
            TimeSpec::List(ref ts) => ts.clone(),
            TimeSpec::Range { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![start],
                _ => (0..count)
                    .map(|i| {
                        if i + 1 == count {
                            stop
                        } else {
                            start + (stop - start) * i as f64 / (count - 1) as f64
                        }
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Odd number of nodes.
    pub n: usize,
    /// Half-width in effective standard deviations at the latest time.
    pub coverage: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_POINTS,
            coverage: DEFAULT_COVERAGE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub trajectories: usize,
    pub seed: u64,
    /// Simulation horizon; defaults to the latest requested time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            trajectories: 1_000_000,
            seed: 0,
            horizon: None,
        }
    }
}

/// Pass/fail thresholds used by `compare`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gates {
    /// Numeric vs closed-form mean momentum, relative to max(|⟨p⟩|, σ_t).
    pub mean_rel: f64,
    /// Numeric vs closed-form survival probability, relative.
    pub survival_rel: f64,
    /// Allowed Monte Carlo deviation in standard errors.
    pub mc_sigmas: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Self {
            mean_rel: 1e-6,
            survival_rel: 1e-8,
            mc_sigmas: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Format of per-time snapshot exports.
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("survival-out"),
            format: Format::Csv,
        }
    }
}

impl RunConfig {
    /// Rubidium-87 parameters: m = 1.44e-25 kg, τ₀ = 27 ns, p₀ = 1.44e-27 kg·m/s,
    /// σ = 1e-28 kg·m/s, c = 3.00e8 m/s.
    pub fn rb87_table1() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            units: UnitSystem::Si,
            constants: Some(ConstantsConfig {
                c: 3.00e8,
                hbar: PhysicalConstants::HBAR,
            }),
            atom: AtomConfig {
                mass: 1.44e-25,
                gamma0: 1.0 / 27e-9,
            },
            state: StateConfig {
                p0: 1.44e-27,
                sigma: 1.0e-28,
            },
            model: DispersionModel::FirstOrder,
            policy: RatePolicy::Strict,
            times: TimeSpec::List(vec![0.0, 27e-9, 54e-9]),
            grid: GridConfig::default(),
            ensemble: EnsembleConfig::default(),
            gates: Gates::default(),
            output: OutputConfig::default(),
        }
    }

    /// Natural units, m = c = 1, p₀ = 1, σ = 0.2, Γ₀ = 5, with the rate
    /// expansion evaluated formally beyond |p| = √2.
    pub fn figure1() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            units: UnitSystem::Natural,
            constants: None,
            atom: AtomConfig {
                mass: 1.0,
                gamma0: 5.0,
            },
            state: StateConfig {
                p0: 1.0,
                sigma: 0.2,
            },
            model: DispersionModel::FirstOrder,
            policy: RatePolicy::Formal,
            times: TimeSpec::List(vec![0.0, 0.25, 0.5, 1.0]),
            grid: GridConfig::default(),
            ensemble: EnsembleConfig::default(),
            gates: Gates::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Rb87Table1 => Self::rb87_table1(),
            Preset::Figure1 => Self::figure1(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Resolves the base document, applies environment overrides and parses.
    pub fn load<I>(source: &Source, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut doc = match source {
            Source::Preset(p) => serde_json::to_value(Self::preset(*p)).expect("preset serializes"),
            Source::File(path) => read_document(path)?,
        };
        apply_env_overrides(&mut doc, env)?;
        serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn constants(&self) -> Result<PhysicalConstants> {
        match (self.units, self.constants) {
            (units, None) => Ok(PhysicalConstants::for_units(units)),
            (UnitSystem::Si, Some(k)) => {
                PhysicalConstants::new(k.c, k.hbar).map_err(|e| CliError::field("constants", e))
            }
            (UnitSystem::Natural, Some(k)) if k.c == 1.0 && k.hbar == 1.0 => {
                Ok(PhysicalConstants::natural())
            }
            (UnitSystem::Natural, Some(_)) => Err(CliError::Config(
                "constants: natural units fix c = hbar = 1; omit the field".into(),
            )),
        }
    }

    /// Checks every downstream precondition and builds the engine inputs.
    pub fn validate(&self) -> Result<Experiment> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let consts = self.constants()?;
        let atom = AtomParams::new(self.atom.mass, self.atom.gamma0)
            .map_err(|e| CliError::field("atom", e))?;
        let state = GaussianMomentumState::new(self.state.p0, self.state.sigma)
            .map_err(|e| CliError::field("state", e))?;
        let dynamics = Dynamics::new(atom, consts, self.model).with_policy(self.policy);

        let times = self.times.expand();
        if times.is_empty() {
            return Err(CliError::Config(
                "times: at least one time is required".into(),
            ));
        }
        for &t in &times {
            check_time(&state, &atom, &consts, t).map_err(|e| CliError::field("times", e))?;
        }
        let t_max = times.iter().copied().fold(0.0, f64::max);

        let grid = build_grid(&state, &dynamics, t_max, self.grid.coverage, self.grid.n)
            .map_err(|e| CliError::field("grid", e))?;

        if self.ensemble.trajectories == 0 {
            return Err(CliError::Config(
                "ensemble.trajectories: must be at least 1".into(),
            ));
        }
        let horizon = match self.ensemble.horizon {
            None => t_max,
            Some(h) if h.is_finite() && h >= t_max => h,
            Some(h) => {
                return Err(CliError::Config(format!(
                    "ensemble.horizon: {h:e} must be finite and cover the latest time {t_max:e}"
                )))
            }
        };

        for (name, v) in [
            ("gates.mean_rel", self.gates.mean_rel),
            ("gates.survival_rel", self.gates.survival_rel),
            ("gates.mc_sigmas", self.gates.mc_sigmas),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("{name}: {v} must be positive")));
            }
        }

        Ok(Experiment {
            config: self.clone(),
            state,
            dynamics,
            times,
            grid,
            horizon,
            seeds: SeedSpec::new(self.ensemble.seed),
        })
    }
}

/// Where the base configuration document comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Preset(Preset),
    File(PathBuf),
}

fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Applies `SURVIVAL_*` variables to a config document in place.
pub fn apply_env_overrides<I>(doc: &mut Value, env: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split(ENV_SEPARATOR)
            .map(str::to_ascii_lowercase)
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Config(format!("{key}: malformed override name")));
        }
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        set_path(doc, &path, value).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
    }
    Ok(())
}

fn set_path(doc: &mut Value, path: &[String], value: Value) -> std::result::Result<(), String> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = doc;
    for key in parents {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| format!("`{key}` is not inside an object"))?;
        node = obj
            .entry(key.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| format!("cannot set `{last}` on a non-object"))?
        .insert(last.clone(), value);
    Ok(())
}

/// A validated configuration with the engine inputs built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub state: GaussianMomentumState,
    pub dynamics: Dynamics,
    pub times: Vec<f64>,
    pub grid: MomentumGrid,
    pub horizon: f64,
    pub seeds: SeedSpec,
}
