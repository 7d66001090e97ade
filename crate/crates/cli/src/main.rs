mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use framing_core::model::ModelId;

use crate::artifacts::{write_text, Workspace};
use crate::commands::{NumericalFailure, Run};
use crate::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "framing",
    version,
    about = "Fit umpire, count and catcher models of called strikes"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Model number, 1 to 5.
    #[arg(long, global = true, value_parser = parse_model)]
    model: Option<ModelId>,
    /// Output directory holding every artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a pitch CSV and copy the accepted rows into the output directory.
    Ingest {
        /// Training corpus; overrides `data.train`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Test corpus; overrides `data.test`.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Average strike zone and empirical called-strike heat map.
    Zone,
    /// Fit the four location surfaces on the preceding seasons.
    FitGam,
    /// Sample the posterior of one model.
    Fit,
    /// R-hat and ESS convergence report for a fitted model.
    Diagnose,
    /// Miss rate and MSE of a fitted model, in sample and on the test corpus.
    Evaluate,
    /// Repeated random holdout cross-validation.
    Cv,
    /// Run value of a called strike by count.
    Runvalues,
    /// Runs saved and CAFE for every catcher.
    Metrics,
    /// Called-strike probability grid and contour areas.
    Contours,
    /// Catcher by count probability differences.
    Counterfactual,
    /// Generate a synthetic corpus with known truth.
    Simulate,
    /// Fit and evaluate all five models.
    Compare,
}

fn parse_model(s: &str) -> Result<ModelId, String> {
    s.parse().map_err(|e: framing_core::Error| e.to_string())
}

/// 2 for numerical failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use framing_core::Error as E;
    for cause in err.chain() {
        if cause.is::<NumericalFailure>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonConvergence { .. }
                | E::NonFiniteGradient { .. }
                | E::Initialization { .. }
                | E::Divergences { .. }
                | E::DegenerateVariance(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let mut overrides = Overrides {
        seed: cli.seed,
        threads: cli.threads,
        model: cli.model,
        out: cli.out,
        ..Overrides::default()
    };
    if let Command::Ingest { input, test } = &cli.command {
        overrides.train = input.clone();
        overrides.test = test.clone();
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ws = Workspace::create(&cfg.out)?;
    write_text(&ws.path("config.toml"), &cfg.to_toml()?)?;
    let cx = Run { cfg: &cfg, ws };
    match cli.command {
        Command::Ingest { .. } => commands::ingest(&cx),
        Command::Zone => commands::zone(&cx),
        Command::FitGam => commands::fit_gam(&cx),
        Command::Fit => commands::fit(&cx),
        Command::Diagnose => commands::diagnose(&cx),
        Command::Evaluate => commands::evaluate_cmd(&cx),
        Command::Cv => commands::cv(&cx),
        Command::Runvalues => commands::runvalues(&cx),
        Command::Metrics => commands::metrics(&cx),
        Command::Contours => commands::contours(&cx),
        Command::Counterfactual => commands::counterfactual(&cx),
        Command::Simulate => commands::simulate(&cx),
        Command::Compare => commands::compare(&cx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
