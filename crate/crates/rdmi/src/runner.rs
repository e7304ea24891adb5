//! Parallel execution of a simulation plan.
//!
//! Each replicate and truth dataset owns its random streams and results are
//! collected in index order, so the output is the same for any thread count.

use rayon::prelude::*;
use rdmi_core::datagen::{truth_dataset_means, truth_stream, GenParams, TrueValues};
use rdmi_core::harness::{aggregate, run_replicate, HarnessError, MetricsTable, ReplicateResult, SimPlan};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "RDMI_WORKERS";

/// Worker count: explicit value, else `RDMI_WORKERS`, else all cores.
pub fn resolve_workers(explicit: Option<usize>) -> Result<usize, String> {
    if let Some(n) = explicit {
        return Ok(n.max(1));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`")),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction")
}

/// Truth oracle over `n_datasets` datasets on `workers` threads.
pub fn truth_parallel(
    params: &GenParams,
    n_datasets: usize,
    seed: u64,
    workers: usize,
) -> Result<TrueValues, HarnessError> {
    params.validate()?;
    if n_datasets == 0 {
        return Err(HarnessError::Plan("truth needs at least one dataset".into()));
    }
    let means = pool(workers).install(|| {
        (0..n_datasets)
            .into_par_iter()
            .map(|i| truth_dataset_means(params, truth_stream(seed, i)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(TrueValues::from_dataset_means(&means))
}

/// Every replicate of `plan`, in replicate order.
pub fn replicates_parallel(plan: &SimPlan, workers: usize) -> Result<Vec<ReplicateResult>, HarnessError> {
    pool(workers).install(|| {
        (0..plan.n_replicates)
            .into_par_iter()
            .map(|r| run_replicate(plan, r))
            .collect()
    })
}

/// Output of a full simulation run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsTable,
    pub replicates: Vec<ReplicateResult>,
}

/// Truth, replicates and aggregation on `workers` threads.
pub fn run_plan_parallel(plan: &SimPlan, workers: usize) -> Result<RunOutput, HarnessError> {
    plan.validate()?;
    let truth = truth_parallel(&plan.params, plan.truth_datasets, plan.truth_seed(), workers)?;
    let replicates = replicates_parallel(plan, workers)?;
    let metrics = aggregate(plan, &truth, &replicates)?;
    Ok(RunOutput { metrics, replicates })
}
