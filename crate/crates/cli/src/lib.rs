//! Command-line front end: scenario files in, reports and CSV files out.
//!
//! - [`config`]: scenario documents and their validation
//! - [`analyze`]: constraint analysis and Dirac brackets
//! - [`simulate`]: original and extended dynamics, invariant runs
//! - [`transform`]: symplecticity checks of canonical transformations

pub mod analyze;
pub mod config;
pub mod error;
pub mod simulate;
pub mod transform;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::LoadedScenario;
pub use crate::error::{CliError, ConfigError};

#[derive(Debug, Parser)]
#[command(
    name = "extphase",
    version,
    about = "Constraint analysis and simulation of damped oscillators in extended phase space"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory; one subdirectory per input when several are given.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of inputs processed in parallel.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hessian, Legendre map, constraints, classification and Dirac brackets.
    Analyze {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Original and gauge-fixed extended trajectories with their comparison.
    Simulate {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Overrides both integrator tolerances.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Auxiliary function and the quadratic invariant along a trajectory.
    Invariant {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Overrides both integrator tolerances.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Symplectic defect of a completed transformation at sampled points.
    TransformCheck {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        #[arg(long, default_value_t = 64)]
        points: usize,
        /// Pass threshold for the defect and the ODE residuals.
        #[arg(long)]
        tol: Option<f64>,
    },
}

/// Report text and verdict of one input.
#[derive(Debug)]
pub struct Outcome {
    pub input: PathBuf,
    pub report: String,
    pub result: Result<(), CliError>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        self.result.as_ref().err().map_or(0, CliError::exit_code)
    }
}

fn out_dir(common: &Common, sc_dir: Option<&Path>, input: &Path, many: bool) -> PathBuf {
    let base = common
        .out
        .clone()
        .or_else(|| sc_dir.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("out"));
    if many {
        base.join(input.file_stem().unwrap_or_default())
    } else {
        base
    }
}

fn check_tol(tol: Option<f64>) -> Result<(), CliError> {
    match tol {
        Some(t) if !(t.is_finite() && t > 0.0) => Err(ConfigError::new(
            Path::new("--tol"),
            None,
            format!("must be positive, got {t}"),
        )
        .into()),
        _ => Ok(()),
    }
}

fn run_one(cli: &Cli, input: &Path, many: bool) -> Outcome {
    let mut report = String::new();
    let result = (|| -> Result<(), CliError> {
        match &cli.command {
            Command::Analyze { .. } => {
                let sc = LoadedScenario::load(input)?;
                let out = out_dir(&cli.common, sc.scenario.output.dir.as_deref(), input, many);
                let r = analyze::analyze(&sc)?;
                report = r.render();
                std::fs::create_dir_all(&out).map_err(anyhow::Error::from)?;
                simulate::write_json(&out, "analysis.json", &r)?;
                Ok(())
            }
            Command::Simulate { tol, .. } => {
                check_tol(*tol)?;
                let sc = LoadedScenario::load(input)?;
                let out = out_dir(&cli.common, sc.scenario.output.dir.as_deref(), input, many);
                report = simulate::simulate(&sc, &out, *tol)?.render();
                Ok(())
            }
            Command::Invariant { tol, .. } => {
                check_tol(*tol)?;
                let sc = LoadedScenario::load(input)?;
                let out = out_dir(&cli.common, sc.scenario.output.dir.as_deref(), input, many);
                report = simulate::invariant(&sc, &out, *tol)?.render();
                Ok(())
            }
            Command::TransformCheck { points, tol, .. } => {
                check_tol(*tol)?;
                let out = out_dir(&cli.common, None, input, many);
                let (r, verdict) = transform::transform_check(input, *points, *tol, &out)?;
                report = r.render();
                verdict
            }
        }
    })();
    Outcome {
        input: input.to_path_buf(),
        report,
        result,
    }
}

/// Runs the command on every input, in input order, using `--jobs` threads.
pub fn run(cli: &Cli) -> Vec<Outcome> {
    let inputs = match &cli.command {
        Command::Analyze { configs }
        | Command::Simulate { configs, .. }
        | Command::Invariant { configs, .. } => configs,
        Command::TransformCheck { specs, .. } => specs,
    };
    let many = inputs.len() > 1;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.jobs as usize)
        .build();
    match pool {
        Ok(pool) => pool.install(|| {
            use rayon::prelude::*;
            inputs.par_iter().map(|p| run_one(cli, p, many)).collect()
        }),
        Err(_) => inputs.iter().map(|p| run_one(cli, p, many)).collect(),
    }
}
