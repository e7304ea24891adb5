//! Replicated simulation: generate, impute, pool, and score against truth.
//!
//! [`run_replicate`] is a pure function of the plan and the replicate index,
//! so callers may execute replicates in any order or on any thread.
//! [`aggregate`] sorts by replicate index before summing and uses pairwise
//! summation, so the metrics do not depend on execution order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_trial_in, generate_truth, ConfigError, GenParams, TrueValues};
use crate::estimation::{coverage_indicator, estimate_complete, pool_estimates, Estimand, PooledEstimate};
use crate::imputation::{impute, FallbackEvent, ImputationConfig, Method};
use crate::math::{pairwise_sum, sample_variance};
use crate::model::{scenario_counts, Arm, ScenarioLabel, TrialDataset};
use crate::rng::{tag, Stream};

/// Failing fraction of a method's replicates above which a plan is an error.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct SimPlan {
    pub params: GenParams,
    pub n_replicates: usize,
    pub methods: Vec<Method>,
    /// Template for the imputation settings; `method` and `seed` are set per
    /// replicate and method.
    pub imputation: ImputationConfig,
    pub master_seed: u64,
    /// Worker threads for parallel runners; `None` lets the runner decide.
    pub workers: Option<usize>,
    pub truth_datasets: usize,
    /// Seed of the truth oracle; `None` uses the master seed (the truth
    /// streams are disjoint from the trial streams either way).
    pub truth_seed: Option<u64>,
    pub level: f64,
}

impl SimPlan {
    pub fn new(params: GenParams) -> Self {
        SimPlan {
            params,
            n_replicates: 1000,
            methods: Method::ALL.to_vec(),
            imputation: ImputationConfig::default(),
            master_seed: 1,
            workers: None,
            truth_datasets: 20_000,
            truth_seed: None,
            level: 0.95,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.params.validate()?;
        if self.n_replicates == 0 {
            return Err(HarnessError::Plan("n_replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::Plan("at least one method is required".into()));
        }
        if self.truth_datasets == 0 {
            return Err(HarnessError::Plan("truth_datasets must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(HarnessError::Plan("workers must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(HarnessError::Plan("level must lie in (0, 1)".into()));
        }
        self.imputation
            .validate()
            .map_err(|e| HarnessError::Plan(format!("{e}")))
    }

    pub fn truth_seed(&self) -> u64 {
        self.truth_seed.unwrap_or(self.master_seed)
    }

    /// Stream of replicate `r`'s trial.
    pub fn trial_stream(&self, r: usize) -> Stream {
        Stream::root(self.master_seed).path(&[tag::TRIAL, r as u64])
    }

    /// Imputation seed of replicate `r`; shared by all methods so that they
    /// differ only where their rules differ.
    pub fn imputation_seed(&self, r: usize) -> u64 {
        Stream::root(self.master_seed).path(&[tag::IMPUTE, r as u64]).key()
    }

    pub fn imputation_config(&self, method: Method, r: usize) -> ImputationConfig {
        ImputationConfig {
            method,
            seed: self.imputation_seed(r),
            ..self.imputation.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("method {method}: {failed} of {total} replicates failed (limit {limit_percent}%); first failure: {first}")]
    TooManyFailures {
        method: Method,
        failed: usize,
        total: usize,
        limit_percent: f64,
        first: String,
    },
    #[error("no replicate results to aggregate")]
    Empty,
}

/// One method's result on one replicate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MethodOutcome {
    pub method: Method,
    /// Pooled control, treatment and difference estimates, or why the
    /// replicate failed for this method.
    pub result: Result<[PooledEstimate; 3], String>,
    pub fallbacks: Vec<FallbackEvent>,
    /// Proportional hazards fell back to the product-limit estimate in some arm.
    pub separation_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ReplicateResult {
    pub replicate: usize,
    /// `[arm][scenario]` counts of the generated trial.
    pub scenario_counts: [[usize; 5]; 2],
    pub methods: Vec<MethodOutcome>,
}

/// Imputes, analyzes and pools one dataset with one method.
pub fn analyze_dataset(data: &TrialDataset, cfg: &ImputationConfig, level: f64) -> MethodOutcome {
    let arms: Vec<Arm> = data.subjects.iter().map(|s| s.arm).collect();
    match impute(data, cfg) {
        Ok(out) => {
            let separation_fallback = out.survival_models.iter().flatten().any(|m| m.separation_fallback);
            let result = out
                .completed
                .iter()
                .map(|c| estimate_complete(&arms, &c.endpoints))
                .collect::<Result<Vec<_>, _>>()
                .and_then(|est| pool_estimates(&est, level))
                .map_err(|e| format!("{e}"));
            MethodOutcome {
                method: cfg.method,
                result,
                fallbacks: out.fallbacks,
                separation_fallback,
            }
        }
        Err(e) => MethodOutcome {
            method: cfg.method,
            result: Err(format!("{e}")),
            fallbacks: Vec::new(),
            separation_fallback: false,
        },
    }
}

/// Generates replicate `r` of `plan`.
pub fn replicate_dataset(plan: &SimPlan, r: usize) -> Result<TrialDataset, HarnessError> {
    Ok(generate_trial_in(&plan.params, plan.trial_stream(r))?)
}

/// Runs replicate `r` for every method of the plan.
pub fn run_replicate(plan: &SimPlan, r: usize) -> Result<ReplicateResult, HarnessError> {
    let data = replicate_dataset(plan, r)?;
    let labels = data
        .classify()
        .map_err(|v| HarnessError::Plan(format!("generated invalid record: {v}")))?;
    let counts = scenario_counts(data.subjects.iter().map(|s| s.arm).zip(labels.iter().copied()));
    let methods = plan
        .methods
        .iter()
        .map(|&m| analyze_dataset(&data, &plan.imputation_config(m, r), plan.level))
        .collect();
    Ok(ReplicateResult {
        replicate: r,
        scenario_counts: counts,
        methods,
    })
}

/// Scenario summary: mean counts and percentages per arm and scenario.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScenarioSummary {
    pub n_replicates: usize,
    pub mean_counts: [[f64; 5]; 2],
    pub percentages: [[f64; 5]; 2],
    /// Monte Carlo standard error of each mean count.
    pub std_errors: [[f64; 5]; 2],
}

impl ScenarioSummary {
    pub fn mean_count(&self, arm: Arm, label: ScenarioLabel) -> f64 {
        self.mean_counts[arm.index()][label.index()]
    }
}

/// Averages per-replicate scenario counts.
pub fn summarize_scenarios(counts: &[[[usize; 5]; 2]]) -> Option<ScenarioSummary> {
    if counts.is_empty() {
        return None;
    }
    let n = counts.len() as f64;
    let mut s = ScenarioSummary {
        n_replicates: counts.len(),
        mean_counts: [[0.0; 5]; 2],
        percentages: [[0.0; 5]; 2],
        std_errors: [[0.0; 5]; 2],
    };
    for a in 0..2 {
        for k in 0..5 {
            let col: Vec<f64> = counts.iter().map(|c| c[a][k] as f64).collect();
            s.mean_counts[a][k] = pairwise_sum(&col) / n;
            s.std_errors[a][k] = libm::sqrt(sample_variance(&col) / n);
        }
        let total: f64 = s.mean_counts[a].iter().sum();
        for k in 0..5 {
            s.percentages[a][k] = if total > 0.0 {
                100.0 * s.mean_counts[a][k] / total
            } else {
                0.0
            };
        }
    }
    Some(s)
}

/// Performance of one method for one estimand.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MetricsRow {
    pub method: Method,
    pub estimand: Estimand,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Standard deviation of the estimates; 0 when fewer than two replicates.
    pub ese: f64,
    pub ese_defined: bool,
    /// Mean of the pooled standard errors.
    pub ase: f64,
    pub cp: f64,
    pub n_used: usize,
    pub n_excluded: usize,
    /// Replicates with at least one donor-pool fallback.
    pub n_fallback: usize,
    pub n_separation: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    pub scenarios: ScenarioSummary,
    pub truth: TrueValues,
    pub n_replicates: usize,
}

impl MetricsTable {
    pub fn row(&self, method: Method, estimand: Estimand) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method && r.estimand == estimand)
    }
}

/// Scores replicate results against `truth`.
pub fn aggregate(
    plan: &SimPlan,
    truth: &TrueValues,
    results: &[ReplicateResult],
) -> Result<MetricsTable, HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut sorted: Vec<&ReplicateResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.replicate);
    let total = sorted.len();

    let mut rows = Vec::new();
    for &method in &plan.methods {
        let outcomes: Vec<&MethodOutcome> = sorted
            .iter()
            .filter_map(|r| r.methods.iter().find(|o| o.method == method))
            .collect();
        let ok: Vec<&[PooledEstimate; 3]> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
        let failed = total - ok.len();
        if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
            let first = outcomes
                .iter()
                .find_map(|o| o.result.as_ref().err().cloned())
                .unwrap_or_else(|| "missing result".into());
            return Err(HarnessError::TooManyFailures {
                method,
                failed,
                total,
                limit_percent: 100.0 * MAX_FAILURE_FRACTION,
                first,
            });
        }
        let n_fallback = outcomes.iter().filter(|o| !o.fallbacks.is_empty()).count();
        let n_separation = outcomes.iter().filter(|o| o.separation_fallback).count();
        for (k, estimand) in Estimand::ALL.into_iter().enumerate() {
            let t = truth.for_estimand(estimand);
            let points: Vec<f64> = ok.iter().map(|p| p[k].point).collect();
            let ses: Vec<f64> = ok.iter().map(|p| p[k].se()).collect();
            let covered: Vec<f64> = ok.iter().map(|p| coverage_indicator(&p[k], t) as u8 as f64).collect();
            let n = ok.len();
            let (mean_estimate, ese, ase, cp) = if n == 0 {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                let nf = n as f64;
                (
                    pairwise_sum(&points) / nf,
                    libm::sqrt(sample_variance(&points)),
                    pairwise_sum(&ses) / nf,
                    pairwise_sum(&covered) / nf,
                )
            };
            rows.push(MetricsRow {
                method,
                estimand,
                truth: t,
                mean_estimate,
                bias: mean_estimate - t,
                ese,
                ese_defined: n >= 2,
                ase,
                cp,
                n_used: n,
                n_excluded: failed,
                n_fallback,
                n_separation,
            });
        }
    }

    let counts: Vec<[[usize; 5]; 2]> = sorted.iter().map(|r| r.scenario_counts).collect();
    let scenarios = summarize_scenarios(&counts).ok_or(HarnessError::Empty)?;
    Ok(MetricsTable {
        rows,
        scenarios,
        truth: *truth,
        n_replicates: total,
    })
}

/// Sequential end-to-end run: truth, every replicate, aggregation.
pub fn run_plan(plan: &SimPlan) -> Result<MetricsTable, HarnessError> {
    plan.validate()?;
    let truth = generate_truth(&plan.params, plan.truth_datasets, plan.truth_seed())?;
    let results = (0..plan.n_replicates)
        .map(|r| run_replicate(plan, r))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(plan, &truth, &results)
}
