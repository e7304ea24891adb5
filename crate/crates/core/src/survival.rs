//! Time to treatment discontinuation: Cox proportional hazards with Breslow
//! ties, or the covariate-free product-limit estimator.
//!
//! Both kinds share one representation: a step baseline with hazard
//! increments `dL_i` at the distinct event times and
//! `S(t | x) = prod_{t_i <= t} (1 - dL_i) ^ exp(beta' (x - center))`.
//! With `beta = 0` the product is exactly the Kaplan-Meier estimate.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{cholesky, cholesky_solve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum SurvivalKind {
    #[default]
    ProportionalHazards,
    CovariateFree,
}

/// One subject's follow-up for the discontinuation process.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalObs {
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurvivalError {
    #[error("degenerate survival fit: no events")]
    NoEvents,
    #[error("invalid survival input: {0}")]
    InvalidInput(&'static str),
    #[error("Newton iterations did not converge after {iterations} steps (log-likelihood {log_likelihood})")]
    NonConvergence {
        iterations: usize,
        log_likelihood: f64,
        coefficients: Vec<f64>,
    },
    #[error("conditioning on zero-probability survival at week {time}")]
    ZeroSurvival { time: f64 },
    #[error("withdrawal week {withdrawal} must lie strictly inside (0, {duration})")]
    InvalidWindow { withdrawal: f64, duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// `|beta_j| * sd(x_j)` above this is treated as monotone-likelihood
    /// separation.
    pub separation_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 50,
            tolerance: 1e-10,
            separation_bound: 20.0,
        }
    }
}

/// Fitted conditional survival function.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalModel {
    /// Kind actually fitted (after any fallback).
    pub kind: SurvivalKind,
    pub coefficients: Vec<f64>,
    pub centers: Vec<f64>,
    pub event_times: Vec<f64>,
    pub hazard_increments: Vec<f64>,
    log_survival: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Proportional hazards was requested but the likelihood was monotone;
    /// the model fell back to the covariate-free estimate.
    pub separation_fallback: bool,
}

/// Breslow partial log-likelihood with its gradient and observed information.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialLikelihood {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Negative Hessian, row-major `p x p`.
    pub information: Vec<f64>,
}

fn order_by_time_desc(sample: &[SurvivalObs]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sample.len()).collect();
    idx.sort_by(|&a, &b| sample[b].time.total_cmp(&sample[a].time).then(a.cmp(&b)));
    idx
}

/// Evaluates the Breslow partial likelihood at `beta`.
///
/// `x[i]` are the (already centered) covariate rows; `order` sorts subjects by
/// decreasing time.
fn partial_likelihood_sorted(
    sample: &[SurvivalObs],
    x: &[Vec<f64>],
    order: &[usize],
    beta: &[f64],
) -> PartialLikelihood {
    let p = beta.len();
    let eta: Vec<f64> = x
        .iter()
        .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];
    let mut value = 0.0;
    let mut gradient = vec![0.0; p];
    let mut information = vec![0.0; p * p];
    let mut pos = 0;
    while pos < order.len() {
        let t = sample[order[pos]].time;
        let mut end = pos;
        let mut deaths = 0usize;
        let mut death_x = vec![0.0; p];
        let mut death_eta = 0.0;
        while end < order.len() && sample[order[end]].time == t {
            let i = order[end];
            let w = libm::exp(eta[i] - shift);
            s0 += w;
            for a in 0..p {
                s1[a] += w * x[i][a];
                for b in 0..p {
                    s2[a * p + b] += w * x[i][a] * x[i][b];
                }
            }
            if sample[i].event {
                deaths += 1;
                death_eta += eta[i];
                for a in 0..p {
                    death_x[a] += x[i][a];
                }
            }
            end += 1;
        }
        if deaths > 0 {
            let dk = deaths as f64;
            value += death_eta - dk * (libm::log(s0) + shift);
            for a in 0..p {
                let ma = s1[a] / s0;
                gradient[a] += death_x[a] - dk * ma;
                for b in 0..p {
                    let mb = s1[b] / s0;
                    information[a * p + b] += dk * (s2[a * p + b] / s0 - ma * mb);
                }
            }
        }
        pos = end;
    }
    PartialLikelihood {
        value,
        gradient,
        information,
    }
}

/// Breslow partial likelihood on the raw covariates of `sample`.
pub fn partial_likelihood(sample: &[SurvivalObs], beta: &[f64]) -> PartialLikelihood {
    let order = order_by_time_desc(sample);
    let x: Vec<Vec<f64>> = sample.iter().map(|o| o.covariates.clone()).collect();
    partial_likelihood_sorted(sample, &x, &order, beta)
}

fn check_sample(sample: &[SurvivalObs]) -> Result<usize, SurvivalError> {
    let p = sample.first().map(|o| o.covariates.len()).unwrap_or(0);
    for o in sample {
        if !(o.time.is_finite() && o.time > 0.0) {
            return Err(SurvivalError::InvalidInput("times must be finite and positive"));
        }
        if o.covariates.len() != p {
            return Err(SurvivalError::InvalidInput("covariate rows differ in length"));
        }
        if o.covariates.iter().any(|v| !v.is_finite()) {
            return Err(SurvivalError::InvalidInput("covariates must be finite"));
        }
    }
    if !sample.iter().any(|o| o.event) {
        return Err(SurvivalError::NoEvents);
    }
    Ok(p)
}

/// Distinct event times and Breslow hazard increments for linear predictor `eta`.
fn baseline_hazard(sample: &[SurvivalObs], order: &[usize], eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut times = Vec::new();
    let mut increments = Vec::new();
    let mut risk = 0.0;
    let mut pos = 0;
    while pos < order.len() {
        let t = sample[order[pos]].time;
        let mut deaths = 0usize;
        while pos < order.len() && sample[order[pos]].time == t {
            let i = order[pos];
            risk += libm::exp(eta[i]);
            deaths += sample[i].event as usize;
            pos += 1;
        }
        if deaths > 0 {
            times.push(t);
            increments.push(deaths as f64 / risk);
        }
    }
    times.reverse();
    increments.reverse();
    (times, increments)
}

fn cumulative_log_survival(increments: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    increments
        .iter()
        .map(|&h| {
            acc += if h >= 1.0 { f64::NEG_INFINITY } else { libm::log1p(-h) };
            acc
        })
        .collect()
}

fn product_limit(sample: &[SurvivalObs], order: &[usize], p: usize, fallback: bool) -> SurvivalModel {
    let eta = vec![0.0; sample.len()];
    let (event_times, hazard_increments) = baseline_hazard(sample, order, &eta);
    let x: Vec<Vec<f64>> = sample.iter().map(|_| Vec::new()).collect();
    let log_likelihood = partial_likelihood_sorted(sample, &x, order, &[]).value;
    SurvivalModel {
        kind: SurvivalKind::CovariateFree,
        coefficients: vec![0.0; if fallback { p } else { 0 }],
        centers: vec![0.0; if fallback { p } else { 0 }],
        log_survival: cumulative_log_survival(&hazard_increments),
        event_times,
        hazard_increments,
        log_likelihood,
        iterations: 0,
        separation_fallback: fallback,
    }
}

/// Fits a survival model for the discontinuation time.
pub fn fit_survival(
    sample: &[SurvivalObs],
    kind: SurvivalKind,
    options: FitOptions,
) -> Result<SurvivalModel, SurvivalError> {
    let p = check_sample(sample)?;
    let order = order_by_time_desc(sample);
    if kind == SurvivalKind::CovariateFree || p == 0 {
        return Ok(product_limit(sample, &order, 0, false));
    }

    let n = sample.len() as f64;
    let centers: Vec<f64> = (0..p)
        .map(|a| sample.iter().map(|o| o.covariates[a]).sum::<f64>() / n)
        .collect();
    let sds: Vec<f64> = (0..p)
        .map(|a| {
            let v = sample
                .iter()
                .map(|o| {
                    let d = o.covariates[a] - centers[a];
                    d * d
                })
                .sum::<f64>()
                / n;
            libm::sqrt(v)
        })
        .collect();
    // constant covariates carry no information; their coefficient stays 0
    let active: Vec<usize> = (0..p)
        .filter(|&a| sds[a] > 1e-12 * (1.0 + libm::fabs(centers[a])))
        .collect();
    let q = active.len();
    let x: Vec<Vec<f64>> = sample
        .iter()
        .map(|o| active.iter().map(|&a| o.covariates[a] - centers[a]).collect())
        .collect();

    let mut beta = vec![0.0; q];
    let mut current = partial_likelihood_sorted(sample, &x, &order, &beta);
    let mut iterations = 0;
    let mut converged = q == 0;
    let mut singular = false;
    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let Some(l) = cholesky(&current.information, q) else {
            singular = true;
            break;
        };
        let mut delta = current.gradient.clone();
        cholesky_solve(&l, q, &mut delta);
        let mut step = 1.0;
        let (next_beta, next) = loop {
            let candidate: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let eval = partial_likelihood_sorted(sample, &x, &order, &candidate);
            if eval.value >= current.value || step < 1e-8 {
                break (candidate, eval);
            }
            step *= 0.5;
        };
        let change = next.value - current.value;
        if change < 0.0 {
            // no ascent direction left
            converged = true;
            break;
        }
        beta = next_beta;
        current = next;
        if libm::fabs(change) < options.tolerance {
            converged = true;
        }
    }

    if singular && iterations == 1 {
        // flat likelihood at the origin: nothing to learn from the covariates
        beta.iter_mut().for_each(|b| *b = 0.0);
        current = partial_likelihood_sorted(sample, &x, &order, &beta);
        converged = true;
    }
    let separated = singular
        || active
            .iter()
            .zip(&beta)
            .any(|(&a, b)| libm::fabs(*b) * sds[a] > options.separation_bound);
    if separated {
        return Ok(product_limit(sample, &order, p, true));
    }
    if !converged {
        let mut coefficients = vec![0.0; p];
        for (&a, b) in active.iter().zip(&beta) {
            coefficients[a] = *b;
        }
        return Err(SurvivalError::NonConvergence {
            iterations,
            log_likelihood: current.value,
            coefficients,
        });
    }

    let eta: Vec<f64> = x
        .iter()
        .map(|row| row.iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();
    let (event_times, hazard_increments) = baseline_hazard(sample, &order, &eta);
    let mut coefficients = vec![0.0; p];
    for (&a, b) in active.iter().zip(&beta) {
        coefficients[a] = *b;
    }
    Ok(SurvivalModel {
        kind: SurvivalKind::ProportionalHazards,
        coefficients,
        centers,
        log_survival: cumulative_log_survival(&hazard_increments),
        event_times,
        hazard_increments,
        log_likelihood: current.value,
        iterations,
        separation_fallback: false,
    })
}

impl SurvivalModel {
    fn risk_multiplier(&self, covariates: &[f64]) -> f64 {
        if self.kind == SurvivalKind::CovariateFree {
            return 1.0;
        }
        let lp: f64 = self
            .coefficients
            .iter()
            .zip(&self.centers)
            .zip(covariates)
            .map(|((b, c), x)| b * (x - c))
            .sum();
        libm::exp(lp)
    }

    /// `S(t | x)`; right-continuous step function, 1 before the first event.
    pub fn survival(&self, t: f64, covariates: &[f64]) -> f64 {
        let k = self.event_times.partition_point(|&e| e <= t);
        if k == 0 {
            return 1.0;
        }
        let log_s = self.log_survival[k - 1];
        if log_s == f64::NEG_INFINITY {
            return 0.0;
        }
        libm::exp(log_s * self.risk_multiplier(covariates)).clamp(0.0, 1.0)
    }
}

/// `S(t | x)` for a fitted model.
pub fn conditional_survival(model: &SurvivalModel, t: f64, covariates: &[f64]) -> f64 {
    model.survival(t, covariates)
}

/// Probability of discontinuing in `(withdrawal, duration]` given adherence
/// up to the withdrawal: `(S(v|x) - S(d|x)) / S(v|x)`, clamped to [0, 1].
pub fn prob_disc_before_end(
    model: &SurvivalModel,
    withdrawal: f64,
    duration: f64,
    covariates: &[f64],
) -> Result<f64, SurvivalError> {
    if !(withdrawal > 0.0 && withdrawal < duration) {
        return Err(SurvivalError::InvalidWindow { withdrawal, duration });
    }
    let s_v = model.survival(withdrawal, covariates);
    if s_v <= 0.0 {
        return Err(SurvivalError::ZeroSurvival { time: withdrawal });
    }
    let s_d = model.survival(duration, covariates);
    Ok(((s_v - s_d) / s_v).clamp(0.0, 1.0))
}

/// Probability from two survival values, for callers that already hold them.
pub fn prob_from_survival(s_v: f64, s_d: f64) -> Result<f64, SurvivalError> {
    if s_v <= 0.0 {
        return Err(SurvivalError::ZeroSurvival { time: f64::NAN });
    }
    Ok(((s_v - s_d) / s_v).clamp(0.0, 1.0))
}
