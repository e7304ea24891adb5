use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rdmi::commands::{self, CliError};
use rdmi::config::{load_config, parse_methods, CliOverrides, ConfigSource, Resolved, RunConfig};
use rdmi::report::{arm_name, num};
use rdmi::runner::{resolve_workers, WORKERS_ENV};
use rdmi_core::datagen::Preset;
use rdmi_core::imputation::Method;
use rdmi_core::model::Arm;

#[derive(Parser)]
#[command(
    name = "rdmi",
    version,
    about = "Multiple imputation for administrative study withdrawals: simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated simulations and write metrics, scenario and truth tables.
    Simulate(SimArgs),
    /// Impute and analyze a per-subject dataset.
    Analyze(AnalyzeArgs),
    /// Compute the true treatment-policy means.
    Truth(TruthArgs),
    /// Write one simulated trial as a per-subject dataset.
    Generate(GenerateArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter preset: setting1 or setting2.
    #[arg(long)]
    preset: Option<Preset>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    /// Number of replicated trials.
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated subset of A,B,C,D.
    #[arg(long)]
    methods: Option<String>,
    /// Imputations per dataset.
    #[arg(long = "m-imputations")]
    m_imputations: Option<usize>,
    /// Datasets for the truth oracle.
    #[arg(long)]
    truth_datasets: Option<usize>,
    /// Worker threads.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Per-subject CSV dataset.
    #[arg(long)]
    data: PathBuf,
    /// TOML configuration file (imputation settings are used).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Imputation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of A,B,C,D.
    #[arg(long)]
    methods: Option<String>,
    /// Imputations per method.
    #[arg(long = "m-imputations")]
    m_imputations: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TruthArgs {
    #[command(flatten)]
    common: Common,
    /// Number of complete datasets to average.
    #[arg(long)]
    truth_datasets: Option<usize>,
    /// Worker threads.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

fn resolve(config: Option<&PathBuf>, overrides: CliOverrides) -> Result<Resolved, CliError> {
    let (cfg, source) = match config {
        Some(path) => load_config(path).map_err(|e| CliError::Input(e.to_string()))?,
        None => (RunConfig::default(), ConfigSource::default()),
    };
    cfg.resolve(&source, &overrides)
        .map_err(|e| CliError::Input(e.to_string()))
}

fn methods(list: Option<&str>) -> Result<Option<Vec<Method>>, CliError> {
    list.map(|s| parse_methods(s).map_err(|e| CliError::Input(format!("--methods: {e}"))))
        .transpose()
}

fn workers(explicit: Option<usize>) -> Result<usize, CliError> {
    resolve_workers(explicit).map_err(CliError::Input)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let overrides = CliOverrides {
                preset: a.common.preset,
                seed: a.common.seed,
                replicates: a.reps,
                methods: methods(a.methods.as_deref())?,
                m: a.m_imputations,
                truth_datasets: a.truth_datasets,
                workers: a.workers,
                output_dir: a.out,
            };
            let r = resolve(a.common.config.as_ref(), overrides)?;
            let w = workers(r.plan.workers)?;
            let out = commands::simulate(&r, w)?;
            println!(
                "run {}: {} replicates, {} methods",
                out.run_id,
                out.metrics.n_replicates,
                r.plan.methods.len()
            );
            println!(
                "{:<6} {:<11} {:>10} {:>10} {:>10} {:>8}",
                "method", "estimand", "bias", "ese", "ase", "cp"
            );
            for row in &out.metrics.rows {
                println!(
                    "{:<6} {:<11} {:>10} {:>10} {:>10} {:>8}",
                    row.method.name(),
                    row.estimand.name(),
                    num(row.bias),
                    num(row.ese),
                    num(row.ase),
                    num(row.cp)
                );
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Analyze(a) => {
            let overrides = CliOverrides {
                seed: a.seed,
                methods: methods(a.methods.as_deref())?,
                m: a.m_imputations,
                output_dir: a.out,
                ..Default::default()
            };
            let r = resolve(a.config.as_ref(), overrides)?;
            let out = commands::analyze(&r, &a.data)?;
            println!("run {}", out.run_id);
            for e in &out.estimates {
                for (k, arm) in Arm::BOTH.into_iter().enumerate() {
                    let p = &e.pooled[k];
                    println!("{} {:<12} {} ({})", e.method, arm_name(arm), num(p.point), num(p.se()));
                }
                let d = &e.pooled[2];
                println!(
                    "{} {:<12} {} ({}, {})",
                    e.method,
                    "difference",
                    num(d.point),
                    num(d.lower),
                    num(d.upper)
                );
            }
        }
        Command::Truth(a) => {
            let overrides = CliOverrides {
                preset: a.common.preset,
                seed: a.common.seed,
                truth_datasets: a.truth_datasets,
                workers: a.workers,
                output_dir: a.out,
                ..Default::default()
            };
            let r = resolve(a.common.config.as_ref(), overrides)?;
            let w = workers(r.plan.workers)?;
            let (run_id, t) = commands::truth(&r, w)?;
            println!(
                "run {run_id}: control {} treatment {} difference {} ({} datasets)",
                num(t.mean_control),
                num(t.mean_treatment),
                num(t.difference),
                t.n_datasets
            );
        }
        Command::Generate(a) => {
            let overrides = CliOverrides {
                preset: a.common.preset,
                seed: a.common.seed,
                ..Default::default()
            };
            let r = resolve(a.common.config.as_ref(), overrides)?;
            commands::generate(&r, &a.out)?;
            println!("wrote {}", a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
