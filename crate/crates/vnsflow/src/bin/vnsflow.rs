//! Command-line frontend. Exit codes: 0 success, 2 configuration error,
//! 3 numerical abort.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vnsflow::config::RunConfig;
use vnsflow::harness;
use vnsflow::VnsError;

#[derive(Parser)]
#[command(
    name = "vnsflow",
    about = "Coupled fluid-particle and fluid-kinetic simulations on the torus",
    version
)]
struct Cli {
    /// Path to a run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: VNSFLOW_THREADS, then machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one coupled simulation and write its artifacts.
    Simulate,
    /// Run an N-sweep experiment plan against a kinetic reference.
    Converge {
        /// Path to the experiment plan (JSON).
        #[arg(long)]
        plan: PathBuf,
    },
    /// Run a mollifier-exponent sweep at fixed particle count.
    SweepBeta {
        /// Path to the experiment plan (JSON) with a beta sweep axis.
        #[arg(long)]
        plan: PathBuf,
    },
    /// Check the standing hypotheses of a configuration.
    Validate,
    /// Estimate the velocity sup-norm bound and the cut-off threshold.
    EstimateKu,
    /// Per-frame gap time series between two run directories.
    Compare {
        /// First run directory.
        a: PathBuf,
        /// Second run directory.
        b: PathBuf,
        /// Velocity-weight exponent of the kinetic gap norm.
        #[arg(long, default_value_t = 2.25)]
        k: f64,
    },
}

fn required_config(cli: &Cli) -> Result<RunConfig, VnsError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| VnsError::Config("--config <path> is required".into()))?;
    let mut config = harness::load_run_config(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), VnsError> {
    match &cli.command {
        Command::Simulate => {
            let config = required_config(cli)?;
            let summary = harness::cmd_simulate(&config, &cli.out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Converge { plan } | Command::SweepBeta { plan } => {
            let mut plan = harness::load_plan(plan)?;
            if let Some(seed) = cli.seed {
                plan.base.seed = seed;
            }
            let report = harness::cmd_converge(&plan, &cli.out)?;
            print!("{}", harness::render_report(&report));
        }
        Command::Validate => {
            let config = required_config(cli)?;
            let report = harness::cmd_validate(&config);
            for check in &report.checks {
                println!(
                    "{} {:<16} {}",
                    if check.pass { "pass" } else { "FAIL" },
                    check.name,
                    check.detail
                );
            }
            if !report.all_pass {
                return Err(VnsError::Config("hypothesis validation failed".into()));
            }
        }
        Command::EstimateKu => {
            let config = required_config(cli)?;
            let report = harness::cmd_estimate_ku(&config)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare { a, b, k } => {
            let rows = harness::cmd_compare(a, b, *k)?;
            std::fs::create_dir_all(&cli.out)?;
            let csv = harness::gap_rows_to_csv(&rows);
            std::fs::write(cli.out.join("gap.csv"), &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn exit_code(err: &VnsError) -> u8 {
    match err {
        VnsError::Config(_)
        | VnsError::BetaOutOfRange { .. }
        | VnsError::Io(_)
        | VnsError::Json(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    harness::init_thread_pool(harness::resolve_threads(cli.threads));
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
