//! Output files and the run manifest.
//!
//! Every CSV carries a `run_id` column: the first 16 hex digits of the
//! SHA-256 of the manifest, which records everything that determines the
//! numbers (and nothing that does not, such as the worker count).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rdmi_core::datagen::{GenParams, Preset, TrueValues};
use rdmi_core::estimation::{Estimand, PooledEstimate};
use rdmi_core::harness::{MetricsTable, ScenarioSummary};
use rdmi_core::imputation::{FallbackEvent, ImputationConfig, MarConditioning, Method};
use rdmi_core::model::{Arm, ScenarioLabel};
use rdmi_core::survival::SurvivalKind;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub sha256: String,
    pub subjects: usize,
}

/// Imputation settings shared by every method; the method and seed vary
/// per analysis and are recorded elsewhere.
#[derive(Debug, Clone, Serialize)]
pub struct ImputationSettings {
    pub m: usize,
    pub survival_kind: SurvivalKind,
    pub min_donor_pool: usize,
    pub mar_conditioning: MarConditioning,
    pub forced_gate_probability: Option<f64>,
}

impl From<&ImputationConfig> for ImputationSettings {
    fn from(c: &ImputationConfig) -> Self {
        ImputationSettings {
            m: c.m,
            survival_kind: c.survival_kind,
            min_donor_pool: c.min_donor_pool,
            mar_conditioning: c.mar_conditioning,
            forced_gate_probability: c.forced_gate_probability,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub preset: Option<Preset>,
    pub master_seed: u64,
    pub params: Option<GenParams>,
    pub imputation: Option<ImputationSettings>,
    pub methods: Vec<Method>,
    pub replicates: Option<usize>,
    pub truth_datasets: Option<usize>,
    pub truth_seed: Option<u64>,
    pub level: Option<f64>,
    pub input: Option<InputFile>,
}

impl Manifest {
    pub fn new(command: &'static str, master_seed: u64) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            preset: None,
            master_seed,
            params: None,
            imputation: None,
            methods: Vec::new(),
            replicates: None,
            truth_datasets: None,
            truth_seed: None,
            level: None,
            input: None,
        }
    }

    pub fn run_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex(&Sha256::digest(&bytes)[..8])
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Fixed six-decimal rendering; `NA` for non-finite values.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        let s = format!("{x:.6}");
        // avoid a distinct spelling for negative zero
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    } else {
        "NA".into()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn csv_file(dir: &Path, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    let wrap = |source| ReportError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&path).map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn ensure_dir(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<String, ReportError> {
    let run_id = manifest.run_id();
    let mut value = serde_json::to_value(manifest).expect("manifest serializes");
    value["run_id"] = serde_json::Value::String(run_id.clone());
    let mut text = serde_json::to_string_pretty(&value).expect("json value serializes");
    text.push('\n');
    let path = dir.join("manifest.json");
    fs::write(&path, text).map_err(|source| ReportError::Io { path, source })?;
    Ok(run_id)
}

pub fn write_metrics(dir: &Path, run_id: &str, table: &MetricsTable) -> Result<PathBuf, ReportError> {
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                run_id.to_string(),
                r.method.to_string(),
                r.estimand.to_string(),
                num(r.truth),
                num(r.mean_estimate),
                num(r.bias),
                if r.ese_defined { num(r.ese) } else { "NA".into() },
                num(r.ase),
                num(r.cp),
                r.n_used.to_string(),
                r.n_excluded.to_string(),
                r.n_fallback.to_string(),
                r.n_separation.to_string(),
            ]
        })
        .collect();
    csv_file(
        dir,
        "metrics.csv",
        &[
            "run_id",
            "method",
            "estimand",
            "truth",
            "mean_estimate",
            "bias",
            "ese",
            "ase",
            "cp",
            "n_used",
            "n_excluded",
            "n_fallback",
            "n_separation",
        ],
        rows,
    )
}

pub fn write_scenarios(dir: &Path, run_id: &str, s: &ScenarioSummary) -> Result<PathBuf, ReportError> {
    let mut header = vec!["run_id".to_string(), "arm".into(), "n_replicates".into()];
    for l in ScenarioLabel::ALL {
        header.push(format!("{}_mean", l.name().to_lowercase()));
        header.push(format!("{}_pct", l.name().to_lowercase()));
    }
    let rows = Arm::BOTH
        .iter()
        .map(|&arm| {
            let mut row = vec![run_id.to_string(), arm_name(arm).into(), s.n_replicates.to_string()];
            for l in ScenarioLabel::ALL {
                row.push(num(s.mean_counts[arm.index()][l.index()]));
                row.push(num(s.percentages[arm.index()][l.index()]));
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_file(dir, "scenarios.csv", &header, rows)
}

pub fn arm_name(arm: Arm) -> &'static str {
    match arm {
        Arm::Control => "control",
        Arm::Experimental => "experimental",
    }
}

pub fn write_truth(dir: &Path, run_id: &str, t: &TrueValues) -> Result<PathBuf, ReportError> {
    let rows = Estimand::ALL
        .iter()
        .map(|&e| {
            vec![
                run_id.to_string(),
                e.to_string(),
                num(t.for_estimand(e)),
                t.n_datasets.to_string(),
            ]
        })
        .collect();
    csv_file(dir, "truth.csv", &["run_id", "estimand", "truth", "n_datasets"], rows)
}

/// Pooled result of one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEstimate {
    pub method: Method,
    pub pooled: [PooledEstimate; 3],
    pub fallbacks: Vec<FallbackEvent>,
}

pub fn write_estimates(dir: &Path, run_id: &str, estimates: &[MethodEstimate]) -> Result<PathBuf, ReportError> {
    let mut rows = Vec::new();
    for m in estimates {
        for (p, e) in m.pooled.iter().zip(Estimand::ALL) {
            rows.push(vec![
                run_id.to_string(),
                m.method.to_string(),
                e.to_string(),
                num(p.point),
                num(p.se()),
                num(p.lower),
                num(p.upper),
                num(p.df),
                num(p.within),
                num(p.between),
                p.m.to_string(),
                m.fallbacks.len().to_string(),
            ]);
        }
    }
    csv_file(
        dir,
        "estimates.csv",
        &[
            "run_id",
            "method",
            "estimand",
            "mean",
            "se",
            "ci_lower",
            "ci_upper",
            "df",
            "within",
            "between",
            "m",
            "fallbacks",
        ],
        rows,
    )
}

/// Scenario counts of a single dataset, in the `scenarios.csv` layout.
pub fn single_dataset_summary(counts: [[usize; 5]; 2]) -> ScenarioSummary {
    rdmi_core::harness::summarize_scenarios(&[counts]).expect("one replicate")
}
