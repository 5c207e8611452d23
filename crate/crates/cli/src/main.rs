use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gibrat_cli::{execute, AppError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "gibrat", version, about = "Reproducible experiments for kinetic models of proportionate growth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; defaults for the subcommand are used when absent.
    #[arg(long, global = true, env = "GIBRAT_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, env = "GIBRAT_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "GIBRAT_OUT", default_value = "out")]
    out: PathBuf,
    /// Relative tolerance for the lognormal quadrature oracle.
    #[arg(long, global = true, env = "GIBRAT_ORACLE_TOL")]
    oracle_tol: Option<f64>,
    /// Run on initial data that fail the admissibility check.
    #[arg(long, global = true, env = "GIBRAT_FORCE")]
    force: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Ensemble moments against their exponential laws.
    Moments,
    /// One Monte Carlo run: empirical CF, histogram, optional raw sizes.
    Simulate,
    /// Wild-sum lognormal CF against the quadrature oracle over an epsilon sweep.
    Wild,
    /// Diffusion solutions by multiplicative convolution.
    Diffuse,
    /// Large-time distance to the matched source.
    Converge,
    /// Transport-limit mixture diagnostics.
    FirstOrder,
    /// Fourier distance d_s between kinetic and diffusion solutions.
    Metric,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Moments => "moments",
            Self::Simulate => "simulate",
            Self::Wild => "wild",
            Self::Diffuse => "diffuse",
            Self::Converge => "converge",
            Self::FirstOrder => "first-order",
            Self::Metric => "metric",
        }
    }
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let name = cli.command.name();
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default_for(name)?,
    };
    if config.run.command() != name {
        return Err(AppError::Config(format!(
            "config describes a {:?} run but the subcommand is {name:?}",
            config.run.command()
        )));
    }
    let opts = RunOptions {
        out: cli.out.clone(),
        seed: cli.seed,
        oracle_tol: cli.oracle_tol,
        force: cli.force,
    };
    let report = execute(config, &opts)?;
    for c in &report.checks {
        eprintln!("[{}] {}: {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail);
    }
    let report = report.into_result()?;
    println!("{} {} ({} files in {})", report.command, report.config_sha256, report.files.len(), cli.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
