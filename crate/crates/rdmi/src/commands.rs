//! The subcommands, callable without going through the argument parser.

use std::path::{Path, PathBuf};

use rdmi_core::datagen::generate_trial;
use rdmi_core::harness::{analyze_dataset, MetricsTable};
use rdmi_core::imputation::{ImputationConfig, Method};
use rdmi_core::model::scenario_counts;
use thiserror::Error;

use crate::config::Resolved;
use crate::csv_io::{read_dataset, write_dataset, IngestError};
use crate::report::{self, InputFile, Manifest, MethodEstimate, ReportError};
use crate::runner::{run_plan_parallel, truth_parallel};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input data (exit code 1).
    #[error("{0}")]
    Input(String),
    /// Failure while computing or writing results (exit code 2).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn base_manifest(command: &'static str, r: &Resolved) -> Manifest {
    let mut m = Manifest::new(command, r.plan.master_seed);
    m.preset = Some(r.preset);
    m.params = Some(r.plan.params.clone());
    m
}

fn output_dir(r: &Resolved) -> PathBuf {
    r.output_dir.clone().unwrap_or_else(|| PathBuf::from("rdmi-out"))
}

#[derive(Debug)]
pub struct SimulateOutput {
    pub run_id: String,
    pub metrics: MetricsTable,
    pub files: Vec<PathBuf>,
}

/// Runs the plan and writes `metrics.csv`, `scenarios.csv`, `truth.csv`
/// and `manifest.json`.
pub fn simulate(r: &Resolved, workers: usize) -> Result<SimulateOutput, CliError> {
    let plan = &r.plan;
    let out = run_plan_parallel(plan, workers).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut manifest = base_manifest("simulate", r);
    manifest.imputation = Some((&plan.imputation).into());
    manifest.methods = plan.methods.clone();
    manifest.replicates = Some(plan.n_replicates);
    manifest.truth_datasets = Some(plan.truth_datasets);
    manifest.truth_seed = Some(plan.truth_seed());
    manifest.level = Some(plan.level);

    let dir = output_dir(r);
    report::ensure_dir(&dir)?;
    let run_id = report::write_manifest(&dir, &manifest)?;
    let files = vec![
        report::write_metrics(&dir, &run_id, &out.metrics)?,
        report::write_scenarios(&dir, &run_id, &out.metrics.scenarios)?,
        report::write_truth(&dir, &run_id, &out.metrics.truth)?,
        dir.join("manifest.json"),
    ];
    Ok(SimulateOutput {
        run_id,
        metrics: out.metrics,
        files,
    })
}

/// Computes the truth oracle and writes `truth.csv` and `manifest.json`.
pub fn truth(r: &Resolved, workers: usize) -> Result<(String, rdmi_core::datagen::TrueValues), CliError> {
    let plan = &r.plan;
    let t = truth_parallel(&plan.params, plan.truth_datasets, plan.truth_seed(), workers)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut manifest = base_manifest("truth", r);
    manifest.truth_datasets = Some(plan.truth_datasets);
    manifest.truth_seed = Some(plan.truth_seed());
    let dir = output_dir(r);
    report::ensure_dir(&dir)?;
    let run_id = report::write_manifest(&dir, &manifest)?;
    report::write_truth(&dir, &run_id, &t)?;
    Ok((run_id, t))
}

/// Generates one trial with the resolved parameters and seed and writes it as CSV.
pub fn generate(r: &Resolved, path: &Path) -> Result<(), CliError> {
    let data = generate_trial(&r.plan.params, r.plan.master_seed).map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        report::ensure_dir(parent)?;
    }
    let file =
        std::fs::File::create(path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    write_dataset(&data, std::io::BufWriter::new(file))
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Per-method pooled estimates for one dataset, in method order.
pub fn analyze_in_memory(
    data: &rdmi_core::model::TrialDataset,
    template: &ImputationConfig,
    methods: &[Method],
    seed: u64,
    level: f64,
) -> Result<Vec<MethodEstimate>, CliError> {
    methods
        .iter()
        .map(|&method| {
            let cfg = ImputationConfig {
                method,
                seed,
                ..template.clone()
            };
            let out = analyze_dataset(data, &cfg, level);
            let pooled = out
                .result
                .map_err(|e| CliError::Runtime(format!("method {method}: {e}")))?;
            Ok(MethodEstimate {
                method,
                pooled,
                fallbacks: out.fallbacks,
            })
        })
        .collect()
}

#[derive(Debug)]
pub struct AnalyzeOutput {
    pub run_id: String,
    pub estimates: Vec<MethodEstimate>,
}

/// Reads a dataset, imputes with each method and writes `estimates.csv`,
/// `scenarios.csv` and `manifest.json`.
pub fn analyze(r: &Resolved, data_path: &Path) -> Result<AnalyzeOutput, CliError> {
    let bytes =
        std::fs::read(data_path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", data_path.display())))?;
    let data = read_dataset(bytes.as_slice(), &data_path.display().to_string())?;
    let labels = data.classify().map_err(|v| CliError::Input(v.to_string()))?;
    let plan = &r.plan;
    let estimates = analyze_in_memory(&data, &plan.imputation, &plan.methods, plan.master_seed, plan.level)?;

    let mut manifest = Manifest::new("analyze", plan.master_seed);
    manifest.imputation = Some((&plan.imputation).into());
    manifest.methods = plan.methods.clone();
    manifest.level = Some(plan.level);
    manifest.input = Some(InputFile {
        sha256: report::sha256_hex(&bytes),
        subjects: data.subjects.len(),
    });

    let dir = output_dir(r);
    report::ensure_dir(&dir)?;
    let run_id = report::write_manifest(&dir, &manifest)?;
    report::write_estimates(&dir, &run_id, &estimates)?;
    let counts = scenario_counts(data.subjects.iter().map(|s| s.arm).zip(labels));
    report::write_scenarios(&dir, &run_id, &report::single_dataset_summary(counts))?;
    Ok(AnalyzeOutput { run_id, estimates })
}
