use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use gapdesign_cli::{
    cmd_bloch, cmd_cell, cmd_design, cmd_gaps, cmd_limit, cmd_radial, cmd_verify, plan, RunConfig,
    RunContext,
};

#[derive(Parser)]
#[command(name = "gapdesign", version, about = "Design and verify spectral gaps of high-contrast periodic media")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "gapdesign.toml")]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for torus sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of the eigensolver starting block (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Validate the config and print the plan without solving.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coefficients and limit spectrum for the target gaps (design.json).
    Design,
    /// Limit spectrum, gaps and dispersion samples (limit.json).
    Limit,
    /// Radial Dirichlet eigenvalues of one inclusion versus epsilon (radial.csv).
    Radial,
    /// Band structure at one epsilon (bands_eps<value>.csv).
    Bloch {
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Band structure and gaps at one epsilon (gaps.json).
    Gaps {
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Effective matrix from the periodic cell problem (ahat.json).
    Cell,
    /// Full convergence study over the epsilon list (convergence.csv, gaps.json).
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Limit => "limit",
            Command::Radial => "radial",
            Command::Bloch { .. } => "bloch",
            Command::Gaps { .. } => "gaps",
            Command::Cell => "cell",
            Command::Verify => "verify",
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = RunConfig::load(&cli.config)?;
    let ctx = RunContext::new(&cfg, cli.out, cli.seed);
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    if cli.dry_run {
        print!("{}", plan(&cfg, cli.command.name(), &ctx)?);
        return Ok(true);
    }
    match cli.command {
        Command::Design => {
            let r = cmd_design(&cfg, &ctx)?;
            println!("a = {:?}\nb = {:?}\nsigma = {:?}\nmu = {:?}", r.a, r.b, r.sigma, r.mu);
        }
        Command::Limit => {
            let r = cmd_limit(&cfg, &ctx)?;
            println!("limit gaps = {:?}", r.gaps);
        }
        Command::Radial => {
            let r = cmd_radial(&cfg, &ctx)?;
            for row in &r.rows {
                println!(
                    "eps = {}: lambda_1 = {}, lambda_1 - sigma = {}, lambda_2 = {}",
                    row.epsilon,
                    row.lambda_1,
                    row.lambda_1 - row.sigma,
                    row.lambda_2
                );
            }
            println!("unit ball check: {} (exact {})", r.sanity.0, r.sanity.1);
        }
        Command::Bloch { epsilon } => {
            let b = cmd_bloch(&cfg, &ctx, epsilon)?;
            println!("{} bands over {} torus points", b.bands(), b.sheets.len());
        }
        Command::Gaps { epsilon } => {
            let doc = cmd_gaps(&cfg, &ctx, epsilon)?;
            for run in &doc.runs {
                println!("eps = {}: gaps = {:?}", run.epsilon, run.gaps);
            }
        }
        Command::Cell => {
            let doc = cmd_cell(&cfg, &ctx)?;
            println!("a_hat = {:?}", doc.matrix);
        }
        Command::Verify => {
            let outcome = cmd_verify(&cfg, &ctx)?;
            for run in &outcome.document.runs {
                println!(
                    "eps = {}: N = {} ({}), {} gaps {:?}, lower errors {:?}, upper errors {:?}",
                    run.epsilon, run.points, run.mode, run.gap_count, run.gaps, run.lower_errors, run.upper_errors
                );
            }
            for finding in &outcome.document.findings {
                println!("finding: {finding}");
            }
            println!("{}", if outcome.passed { "thresholds met" } else { "thresholds NOT met" });
            return Ok(outcome.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
