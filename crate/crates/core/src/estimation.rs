//! Complete-data group means and Rubin's-rules pooling.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{mean, sample_variance, student_t_quantile};
use crate::model::Arm;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("arm {0:?} has fewer than two subjects")]
    SmallArm(Arm),
    #[error("endpoint value for subject #{0} is missing or not finite")]
    MissingEndpoint(usize),
    #[error("pooling needs at least two imputations, got {0}")]
    TooFewImputations(usize),
    #[error("pooling inputs must be finite with non-negative variances")]
    InvalidInput,
    #[error("points and variances differ in length")]
    LengthMismatch,
}

/// The three reported quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "lowercase"))]
pub enum Estimand {
    Control,
    Treatment,
    Difference,
}

impl Estimand {
    pub const ALL: [Estimand; 3] = [Estimand::Control, Estimand::Treatment, Estimand::Difference];

    pub fn name(self) -> &'static str {
        match self {
            Estimand::Control => "control",
            Estimand::Treatment => "treatment",
            Estimand::Difference => "difference",
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unadjusted per-arm means with variance-of-mean `s^2 / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CompleteEstimate {
    pub mean: [f64; 2],
    pub var: [f64; 2],
    pub diff: f64,
    pub var_diff: f64,
    pub n: [usize; 2],
}

impl CompleteEstimate {
    pub fn point(&self, e: Estimand) -> f64 {
        match e {
            Estimand::Control => self.mean[0],
            Estimand::Treatment => self.mean[1],
            Estimand::Difference => self.diff,
        }
    }

    pub fn variance(&self, e: Estimand) -> f64 {
        match e {
            Estimand::Control => self.var[0],
            Estimand::Treatment => self.var[1],
            Estimand::Difference => self.var_diff,
        }
    }

    /// Complete-data degrees of freedom for the small-sample df adjustment.
    pub fn complete_df(&self, e: Estimand) -> f64 {
        match e {
            Estimand::Control => (self.n[0] - 1) as f64,
            Estimand::Treatment => (self.n[1] - 1) as f64,
            Estimand::Difference => (self.n[0] + self.n[1] - 2) as f64,
        }
    }
}

/// Group means of a completed endpoint vector.
pub fn estimate_complete(arms: &[Arm], endpoints: &[f64]) -> Result<CompleteEstimate, EstimationError> {
    if arms.len() != endpoints.len() {
        return Err(EstimationError::LengthMismatch);
    }
    let mut groups: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (i, (arm, &y)) in arms.iter().zip(endpoints).enumerate() {
        if !y.is_finite() {
            return Err(EstimationError::MissingEndpoint(i));
        }
        groups[arm.index()].push(y);
    }
    let mut out = CompleteEstimate {
        mean: [0.0; 2],
        var: [0.0; 2],
        diff: 0.0,
        var_diff: 0.0,
        n: [0; 2],
    };
    for arm in Arm::BOTH {
        let g = &groups[arm.index()];
        if g.len() < 2 {
            return Err(EstimationError::SmallArm(arm));
        }
        out.n[arm.index()] = g.len();
        out.mean[arm.index()] = mean(g);
        out.var[arm.index()] = sample_variance(g) / g.len() as f64;
    }
    out.diff = out.mean[1] - out.mean[0];
    out.var_diff = out.var[0] + out.var[1];
    Ok(out)
}

/// Rubin-combined estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PooledEstimate {
    pub point: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    pub df: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub m: usize,
}

impl PooledEstimate {
    pub fn se(&self) -> f64 {
        libm::sqrt(self.total)
    }
}

/// Pools `m >= 2` completed-data estimates.
///
/// `complete_df` is the complete-data degrees of freedom for the
/// Barnard-Rubin small-sample correction; `None` means infinite (classical
/// large-sample df).
pub fn pool_rubin(
    points: &[f64],
    variances: &[f64],
    complete_df: Option<f64>,
    level: f64,
) -> Result<PooledEstimate, EstimationError> {
    if points.len() != variances.len() {
        return Err(EstimationError::LengthMismatch);
    }
    let m = points.len();
    if m < 2 {
        return Err(EstimationError::TooFewImputations(m));
    }
    if points.iter().any(|p| !p.is_finite())
        || variances.iter().any(|v| !(v.is_finite() && *v >= 0.0))
        || !(level > 0.0 && level < 1.0)
    {
        return Err(EstimationError::InvalidInput);
    }
    let mf = m as f64;
    let point = mean(points);
    let within = mean(variances);
    let between = sample_variance(points);
    let total = within + (1.0 + 1.0 / mf) * between;

    let lambda = if total > 0.0 {
        (1.0 + 1.0 / mf) * between / total
    } else {
        0.0
    };
    let df_missing = if lambda > 0.0 {
        (mf - 1.0) / (lambda * lambda)
    } else {
        f64::INFINITY
    };
    let df = match complete_df {
        Some(nu) if nu.is_finite() => {
            let df_observed = (nu + 1.0) / (nu + 3.0) * nu * (1.0 - lambda);
            if df_missing.is_infinite() {
                df_observed
            } else {
                df_missing * df_observed / (df_missing + df_observed)
            }
        }
        _ => df_missing,
    };
    let q = student_t_quantile(0.5 + level / 2.0, df);
    let half = q * libm::sqrt(total);
    Ok(PooledEstimate {
        point,
        within,
        between,
        total,
        df,
        level,
        lower: point - half,
        upper: point + half,
        m,
    })
}

/// Pools the three estimands of a set of completed-data estimates.
pub fn pool_estimates(estimates: &[CompleteEstimate], level: f64) -> Result<[PooledEstimate; 3], EstimationError> {
    let first = estimates.first().ok_or(EstimationError::TooFewImputations(0))?;
    let mut out = [None; 3];
    for (slot, e) in out.iter_mut().zip(Estimand::ALL) {
        let points: Vec<f64> = estimates.iter().map(|c| c.point(e)).collect();
        let vars: Vec<f64> = estimates.iter().map(|c| c.variance(e)).collect();
        *slot = Some(pool_rubin(&points, &vars, Some(first.complete_df(e)), level)?);
    }
    Ok(out.map(|p| p.expect("filled above")))
}

/// Whether the closed confidence interval contains `truth`.
pub fn coverage_indicator(pooled: &PooledEstimate, truth: f64) -> bool {
    pooled.lower <= truth && truth <= pooled.upper
}
