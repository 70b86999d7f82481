//! Command-line driver for the survival-acceleration engines.
//!
//! Subcommands share one JSON configuration (a file or a compiled-in preset)
//! with environment and flag overrides applied on top. See [`config`] for the
//! override mapping and [`error::exit`] for the exit codes.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use survival_core::DispersionModel;

use crate::config::{Experiment, Format, Preset, RunConfig, Source};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "survival",
    version,
    about = "Survival-conditioned momentum drift of a decaying atom"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Survival force, acceleration and validity threshold.
    Estimate,
    /// |ψ(p,t)|² snapshots with Gaussian fits against the closed forms.
    Figure1,
    /// Surviving and detector branches with norm-identity residuals.
    Evolve,
    /// Closed form vs grid quadrature vs Monte Carlo, with pass/fail gates.
    Compare,
    /// Quantum-jump ensemble statistics.
    Ensemble,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Figure1 => "figure1",
            Command::Evolve => "evolve",
            Command::Compare => "compare",
            Command::Ensemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    FirstOrder,
    Exact,
}

impl From<ModelArg> for DispersionModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::FirstOrder => DispersionModel::FirstOrder,
            ModelArg::Exact => DispersionModel::ExactRelativistic,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Compiled-in parameter set (default: rb87-table1).
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for the engines (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Master seed for the Monte Carlo ensemble.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelArg>,
    /// Format of per-time snapshot exports.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

impl CommonArgs {
    pub fn source(&self) -> Source {
        match (&self.config, self.preset) {
            (Some(path), _) => Source::File(path.clone()),
            (None, Some(p)) => Source::Preset(p),
            (None, None) => Source::Preset(Preset::Rb87Table1),
        }
    }

    /// Flag overrides, applied after the environment.
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(out) = &self.out {
            config.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.ensemble.seed = seed;
        }
        if let Some(model) = self.model {
            config.model = model.into();
        }
        if let Some(format) = self.format {
            config.output.format = format;
        }
    }
}

/// Resolves the configuration: source, then environment, then flags.
pub fn resolve<I>(common: &CommonArgs, env: I) -> Result<Experiment>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut config = RunConfig::load(&common.source(), env)?;
    common.apply(&mut config);
    config.validate()
}

/// Runs one subcommand and returns the path of its summary report.
pub fn execute(command: Command, exp: &Experiment) -> Result<PathBuf> {
    let out = exp.config.output.dir.as_path();
    let format = exp.config.output.format;
    match command {
        Command::Estimate => commands::emit_estimate(exp, &commands::run_estimate(exp)?, out),
        Command::Figure1 => {
            let (mut report, snaps) = commands::run_figure1(exp)?;
            commands::emit_figure1(exp, &mut report, &snaps, out, format)
        }
        Command::Evolve => {
            let (mut report, snaps) = commands::run_evolve(exp)?;
            commands::emit_evolve(exp, &mut report, &snaps, out, format)
        }
        Command::Compare => commands::emit_compare(exp, &commands::run_compare(exp)?, out),
        Command::Ensemble => commands::emit_ensemble(exp, &commands::run_ensemble(exp)?, out),
    }
}

/// Full pipeline behind the binary.
pub fn run<I>(cli: &Cli, env: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = (String, String)>,
{
    let exp = resolve(&cli.common, env)?;
    match cli.common.threads {
        None => execute(cli.command, &exp),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map_err(|e| CliError::Output(format!("thread pool: {e}")))?
            .install(|| execute(cli.command, &exp)),
    }
}
