//! Multiple imputation of the missing endpoint under the four strategies for
//! administrative withdrawals.
//!
//! Every strategy imputes logistic missingness (S2) from adherers under MAR
//! and discontinuers with a missing endpoint (S4/5.1) from retrieved
//! dropouts. They differ only for administrative withdrawals (S5.2):
//!
//! * `A` imputes from adherers,
//! * `B` imputes from retrieved dropouts,
//! * `C` first draws whether the subject would have discontinued before the
//!   end, with probability from a survival model censored at the
//!   withdrawal, and imputes from retrieved dropouts or adherers accordingly,
//! * `D` imputes from every non-S5.2 subject's endpoint (observed plus the
//!   current round's imputations).
//!
//! All donor models are Bayesian normal linear regressions of the endpoint
//! with a fresh posterior draw of coefficients and residual variance per
//! round. Each draw comes from its own random stream (round, pool) and each
//! subject's residual from (round, subject), so strategies that agree on a
//! subject's donor pool also agree bit for bit on its imputed value.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{cholesky, cholesky_solve, solve_upper_transposed};
use crate::model::{Arm, ScenarioLabel, SubjectRecord, TrialDataset, Violation};
use crate::rng::{tag, Stream};
use crate::survival::{
    fit_survival, prob_disc_before_end, FitOptions, SurvivalError, SurvivalKind, SurvivalModel, SurvivalObs,
};

/// Lower bound on the residual variance estimate (outcome units squared).
pub const RESIDUAL_VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Method {
    A,
    B,
    C,
    D,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::A, Method::B, Method::C, Method::D];

    pub fn name(self) -> &'static str {
        match self {
            Method::A => "A",
            Method::B => "B",
            Method::C => "C",
            Method::D => "D",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "A" | "a" => Ok(Method::A),
            "B" | "b" => Ok(Method::B),
            "C" | "c" => Ok(Method::C),
            "D" | "d" => Ok(Method::D),
            other => Err(format!("unknown method `{other}` (expected A, B, C or D)")),
        }
    }
}

/// Conditioning set of the adherer (MAR) model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum MarConditioning {
    BaselineOnly,
    /// Baseline plus the subject's last observed intermediate visit.
    #[default]
    MonotoneSequential,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct ImputationConfig {
    pub method: Method,
    pub m: usize,
    pub seed: u64,
    pub survival_kind: SurvivalKind,
    pub min_donor_pool: usize,
    pub mar_conditioning: MarConditioning,
    /// Replaces every estimated discontinuation probability in method C.
    /// Diagnostic knob; `None` in normal use.
    pub forced_gate_probability: Option<f64>,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig {
            method: Method::C,
            m: 100,
            seed: 0,
            survival_kind: SurvivalKind::ProportionalHazards,
            min_donor_pool: 5,
            mar_conditioning: MarConditioning::MonotoneSequential,
            forced_gate_probability: None,
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<(), ImputationError> {
        if self.m < 2 {
            return Err(ImputationError::Config("m must be at least 2".into()));
        }
        if self.min_donor_pool < 2 {
            return Err(ImputationError::Config("min_donor_pool must be at least 2".into()));
        }
        if let Some(p) = self.forced_gate_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(ImputationError::Config(
                    "forced_gate_probability must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Where a completed endpoint came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum Provenance {
    Observed,
    MarAdherer,
    RetrievedDropout,
    Pooled,
    GatedAdherer,
    GatedRetrievedDropout,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Observed => "observed",
            Provenance::MarAdherer => "mar-adherer",
            Provenance::RetrievedDropout => "retrieved-dropout",
            Provenance::Pooled => "pooled",
            Provenance::GatedAdherer => "gated-adherer",
            Provenance::GatedRetrievedDropout => "gated-rd",
        }
    }
}

/// Donor pool identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum PoolKind {
    /// Adherers; `visit` is the extra conditioning visit, if any.
    Adherers {
        visit: Option<usize>,
    },
    RetrievedDropouts,
    /// Every subject not withdrawn administratively (method D).
    AllNonAdministrative,
}

impl PoolKind {
    fn code(self) -> u64 {
        match self {
            PoolKind::Adherers { visit: None } => 1,
            PoolKind::Adherers { visit: Some(k) } => 100 + k as u64,
            PoolKind::RetrievedDropouts => 2,
            PoolKind::AllNonAdministrative => 3,
        }
    }
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolKind::Adherers { visit: None } => f.write_str("adherers(baseline)"),
            PoolKind::Adherers { visit: Some(k) } => write!(f, "adherers(baseline+visit{})", k + 1),
            PoolKind::RetrievedDropouts => f.write_str("retrieved-dropouts"),
            PoolKind::AllNonAdministrative => f.write_str("all-non-administrative"),
        }
    }
}

/// An arm-specific donor pool was too small (or singular) and the model was
/// widened to both arms with an arm indicator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FallbackEvent {
    pub arm: Arm,
    pub pool: PoolKind,
    pub arm_pool_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DonorError {
    #[error("donor pool has {size} subjects, need at least {required}")]
    TooSmall { size: usize, required: usize },
    #[error("donor design matrix is singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImputationError {
    #[error("invalid imputation configuration: {0}")]
    Config(String),
    #[error("cannot classify {0}")]
    Classification(Violation),
    #[error("{pool} donors for {arm:?} unusable even after pooling arms: {source}")]
    Donor {
        arm: Arm,
        pool: PoolKind,
        source: DonorError,
    },
    #[error("survival model for {arm:?}: {source}")]
    Survival { arm: Arm, source: SurvivalError },
}

/// Least-squares fit with what is needed for posterior draws under the
/// standard noninformative prior.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalImputationModel {
    pub coefficients: Vec<f64>,
    pub residual_variance: f64,
    pub df: usize,
    pub n: usize,
    chol: Vec<f64>,
}

/// One posterior draw of coefficients and residual SD.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDraw {
    pub coefficients: Vec<f64>,
    pub sigma: f64,
}

impl ParameterDraw {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }
}

impl NormalImputationModel {
    /// Fits `y ~ rows` (rows already contain the intercept).
    pub fn fit(rows: &[Vec<f64>], y: &[f64], min_pool: usize) -> Result<Self, DonorError> {
        let n = rows.len();
        let p = rows.first().map(Vec::len).unwrap_or(1);
        let required = min_pool.max(p + 1);
        if n < required {
            return Err(DonorError::TooSmall { size: n, required });
        }
        let mut xtx = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        for (row, &yi) in rows.iter().zip(y) {
            for a in 0..p {
                xty[a] += row[a] * yi;
                for b in 0..p {
                    xtx[a * p + b] += row[a] * row[b];
                }
            }
        }
        let chol = cholesky(&xtx, p).ok_or(DonorError::Singular)?;
        let mut coefficients = xty;
        cholesky_solve(&chol, p, &mut coefficients);
        let rss: f64 = rows
            .iter()
            .zip(y)
            .map(|(row, &yi)| {
                let fit: f64 = row.iter().zip(&coefficients).map(|(x, b)| x * b).sum();
                (yi - fit) * (yi - fit)
            })
            .sum();
        let df = n - p;
        let residual_variance = (rss / df as f64).max(RESIDUAL_VARIANCE_FLOOR);
        Ok(NormalImputationModel {
            coefficients,
            residual_variance,
            df,
            n,
            chol,
        })
    }

    /// Posterior draw: `sigma^2 = df s^2 / chi2_df`, then
    /// `beta ~ N(beta_hat, sigma^2 (X'X)^-1)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterDraw {
        let p = self.coefficients.len();
        let chi = ChiSquared::new(self.df as f64).expect("df >= 1");
        let c: f64 = chi.sample(rng);
        let sigma2 = self.df as f64 * self.residual_variance / c.max(f64::MIN_POSITIVE);
        let sigma = libm::sqrt(sigma2);
        let mut z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        solve_upper_transposed(&self.chol, p, &mut z);
        let coefficients = self.coefficients.iter().zip(&z).map(|(b, w)| b + sigma * w).collect();
        ParameterDraw { coefficients, sigma }
    }
}

/// Design row: intercept, baseline, optional visit value, optional arm indicator.
pub fn design_row(subject: &SubjectRecord, visit: Option<usize>, arm_indicator: bool) -> Vec<f64> {
    let mut row = vec![1.0, subject.baseline];
    if let Some(k) = visit {
        row.push(subject.outcomes[k].expect("conditioning visit observed"));
    }
    if arm_indicator {
        row.push(subject.arm.index() as f64);
    }
    row
}

/// Indices of adherers with an observed endpoint (and observed `visit`).
pub fn adherer_donors(
    data: &TrialDataset,
    labels: &[ScenarioLabel],
    arm: Option<Arm>,
    visit: Option<usize>,
) -> Vec<usize> {
    donors_where(data, labels, arm, |s, l| {
        matches!(l, ScenarioLabel::S1 | ScenarioLabel::S2)
            && s.endpoint().is_some()
            && visit.is_none_or(|k| s.outcomes[k].is_some())
    })
}

/// Indices of retrieved dropouts (discontinued, endpoint observed).
pub fn retrieved_dropout_donors(data: &TrialDataset, labels: &[ScenarioLabel], arm: Option<Arm>) -> Vec<usize> {
    donors_where(data, labels, arm, |s, l| {
        l == ScenarioLabel::S3 && s.endpoint().is_some()
    })
}

fn donors_where(
    data: &TrialDataset,
    labels: &[ScenarioLabel],
    arm: Option<Arm>,
    keep: impl Fn(&SubjectRecord, ScenarioLabel) -> bool,
) -> Vec<usize> {
    data.subjects
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(_, (s, &l))| arm.is_none_or(|a| s.arm == a) && keep(s, l))
        .map(|(i, _)| i)
        .collect()
}

/// Fitted donor model plus whether it spans both arms.
#[derive(Debug, Clone)]
struct DonorFit {
    model: NormalImputationModel,
    pooled_arms: bool,
    /// Pooled donors span both arms, so the design carries an arm column.
    arm_indicator: bool,
}

/// Fits `pool` for `arm`, widening to both arms when the arm's pool fails.
fn fit_with_fallback(
    data: &TrialDataset,
    labels: &[ScenarioLabel],
    values: &[f64],
    arm: Arm,
    pool: PoolKind,
    min_pool: usize,
    fallbacks: &mut Vec<FallbackEvent>,
) -> Result<DonorFit, ImputationError> {
    let select = |a: Option<Arm>| -> Vec<usize> {
        match pool {
            PoolKind::Adherers { visit } => adherer_donors(data, labels, a, visit),
            PoolKind::RetrievedDropouts => retrieved_dropout_donors(data, labels, a),
            PoolKind::AllNonAdministrative => donors_where(data, labels, a, |_, l| l != ScenarioLabel::S52),
        }
    };
    let visit = match pool {
        PoolKind::Adherers { visit } => visit,
        _ => None,
    };
    let fit_on = |idx: &[usize], indicator: bool| {
        let rows: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| design_row(&data.subjects[i], visit, indicator))
            .collect();
        let y: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        NormalImputationModel::fit(&rows, &y, min_pool)
    };
    let own = select(Some(arm));
    match fit_on(&own, false) {
        Ok(model) => Ok(DonorFit {
            model,
            pooled_arms: false,
            arm_indicator: false,
        }),
        Err(_) => {
            let event = FallbackEvent {
                arm,
                pool,
                arm_pool_size: own.len(),
            };
            if !fallbacks.contains(&event) {
                fallbacks.push(event);
            }
            let both = select(None);
            // an arm column only identifies anything when both arms contribute
            let indicator = Arm::BOTH
                .iter()
                .all(|&a| both.iter().any(|&i| data.subjects[i].arm == a));
            fit_on(&both, indicator)
                .map(|model| DonorFit {
                    model,
                    pooled_arms: true,
                    arm_indicator: indicator,
                })
                .map_err(|source| ImputationError::Donor { arm, pool, source })
        }
    }
}

/// A completed endpoint vector aligned with the source dataset's subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedDataset {
    pub endpoints: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl CompletedDataset {
    /// Materializes the completed dataset: only missing endpoints change.
    pub fn to_trial_dataset(&self, source: &TrialDataset) -> TrialDataset {
        let mut out = source.clone();
        for (s, &y) in out.subjects.iter_mut().zip(&self.endpoints) {
            let k = s.outcomes.len() - 1;
            if s.outcomes[k].is_none() {
                s.outcomes[k] = Some(y);
                s.missing[k] = false;
            }
        }
        out.provenance = format!("{}; completed", source.provenance);
        out
    }
}

/// All rounds of one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationOutput {
    pub method: Method,
    pub labels: Vec<ScenarioLabel>,
    pub completed: Vec<CompletedDataset>,
    pub fallbacks: Vec<FallbackEvent>,
    /// Discontinuation probability used for each S5.2 subject (method C).
    pub gate_probabilities: Vec<Option<f64>>,
    pub survival_models: [Option<SurvivalModel>; 2],
}

/// Survival sample for one arm: discontinuations are events (a
/// non-administrative withdrawal without recorded discontinuation is an event
/// at the withdrawal), administrative withdrawals censor at the withdrawal,
/// everyone else is censored at the end. Follow-up of length zero is dropped.
pub fn survival_sample(data: &TrialDataset, labels: &[ScenarioLabel], arm: Arm) -> Vec<SurvivalObs> {
    let d = data.grid.duration();
    data.subjects
        .iter()
        .zip(labels)
        .filter(|(s, _)| s.arm == arm)
        .filter_map(|(s, &l)| {
            let disc = s.disc_time.filter(|&u| u < d);
            let (time, event) = match l {
                ScenarioLabel::S1 | ScenarioLabel::S2 => (d, false),
                ScenarioLabel::S3 => (disc?, true),
                ScenarioLabel::S4_51 => match disc {
                    Some(u) => (u, true),
                    None => (s.withdraw_time?, true),
                },
                ScenarioLabel::S52 => (s.withdraw_time?, false),
            };
            (time > 0.0).then(|| SurvivalObs {
                time,
                event,
                covariates: vec![s.baseline],
            })
        })
        .collect()
}

/// Imputes every missing endpoint `cfg.m` times with `cfg.method`.
pub fn impute(data: &TrialDataset, cfg: &ImputationConfig) -> Result<ImputationOutput, ImputationError> {
    cfg.validate()?;
    let labels = data.classify().map_err(ImputationError::Classification)?;
    let n = data.subjects.len();
    let k_end = data.grid.endpoint_index();
    let observed: Vec<f64> = data.subjects.iter().map(|s| s.endpoint().unwrap_or(f64::NAN)).collect();

    let mar_visit = |s: &SubjectRecord| match cfg.mar_conditioning {
        MarConditioning::BaselineOnly => None,
        MarConditioning::MonotoneSequential => s.last_observed_intermediate().filter(|&k| k < k_end),
    };

    // pool assignments for the two methods-independent scenarios and for S5.2
    let mut fallbacks = Vec::new();
    let mut fits: BTreeMap<(Arm, PoolKind), DonorFit> = BTreeMap::new();
    let mut need = |arm: Arm, pool: PoolKind, fallbacks: &mut Vec<FallbackEvent>| -> Result<(), ImputationError> {
        if let alloc::collections::btree_map::Entry::Vacant(e) = fits.entry((arm, pool)) {
            let fit = fit_with_fallback(data, &labels, &observed, arm, pool, cfg.min_donor_pool, fallbacks)?;
            e.insert(fit);
        }
        Ok(())
    };

    let mut adherer_pool = vec![None; n];
    for (i, (s, &l)) in data.subjects.iter().zip(&labels).enumerate() {
        let wants_adherers = match l {
            ScenarioLabel::S2 => true,
            ScenarioLabel::S52 => matches!(cfg.method, Method::A | Method::C),
            _ => false,
        };
        if wants_adherers {
            let pool = PoolKind::Adherers { visit: mar_visit(s) };
            need(s.arm, pool, &mut fallbacks)?;
            adherer_pool[i] = Some(pool);
        }
        let wants_rd =
            l == ScenarioLabel::S4_51 || (l == ScenarioLabel::S52 && matches!(cfg.method, Method::B | Method::C));
        if wants_rd {
            need(s.arm, PoolKind::RetrievedDropouts, &mut fallbacks)?;
        }
    }

    // discontinuation probabilities for method C
    let mut gate_probabilities = vec![None; n];
    let mut survival_models: [Option<SurvivalModel>; 2] = [None, None];
    if cfg.method == Method::C {
        let d = data.grid.duration();
        for arm in Arm::BOTH {
            let targets: Vec<usize> = (0..n)
                .filter(|&i| labels[i] == ScenarioLabel::S52 && data.subjects[i].arm == arm)
                .collect();
            if targets.is_empty() {
                continue;
            }
            if let Some(p) = cfg.forced_gate_probability {
                for i in targets {
                    gate_probabilities[i] = Some(p);
                }
                continue;
            }
            let sample = survival_sample(data, &labels, arm);
            let model = fit_survival(&sample, cfg.survival_kind, FitOptions::default())
                .map_err(|source| ImputationError::Survival { arm, source })?;
            for i in targets {
                let s = &data.subjects[i];
                let v = s.withdraw_time.expect("S5.2 has a withdrawal");
                let p = prob_disc_before_end(&model, v, d, &[s.baseline])
                    .map_err(|source| ImputationError::Survival { arm, source })?;
                gate_probabilities[i] = Some(p);
            }
            survival_models[arm.index()] = Some(model);
        }
    }

    let root = Stream::root(cfg.seed).child(tag::IMPUTE);
    let mut completed = Vec::with_capacity(cfg.m);
    for r in 0..cfg.m {
        let round = root.path(&[tag::ROUND, r as u64]);
        let mut draws: BTreeMap<(Arm, PoolKind), ParameterDraw> = BTreeMap::new();
        let mut draw_for = |arm: Arm, pool: PoolKind| -> ParameterDraw {
            let fit = &fits[&(arm, pool)];
            // a pooled-arm model is one model shared by both arms
            let owner = if fit.pooled_arms { 2 } else { arm.index() as u64 };
            draws
                .entry((arm, pool))
                .or_insert_with(|| fit.model.draw(&mut round.path(&[tag::MODEL, owner, pool.code()]).rng()))
                .clone()
        };
        let residual = |i: usize| -> f64 { StandardNormal.sample(&mut round.path(&[tag::SUBJECT, i as u64]).rng()) };

        let mut values = observed.clone();
        let mut provenance = vec![Provenance::Observed; n];
        let mut impute_from =
            |i: usize, pool: PoolKind, tagged: Provenance, values: &mut [f64], provenance: &mut [Provenance]| {
                let s = &data.subjects[i];
                let indicator = fits[&(s.arm, pool)].arm_indicator;
                let visit = match pool {
                    PoolKind::Adherers { visit } => visit,
                    _ => None,
                };
                let draw = draw_for(s.arm, pool);
                values[i] = draw.predict(&design_row(s, visit, indicator)) + draw.sigma * residual(i);
                provenance[i] = tagged;
            };

        for i in 0..n {
            match labels[i] {
                ScenarioLabel::S2 => {
                    let pool = adherer_pool[i].expect("assigned above");
                    impute_from(i, pool, Provenance::MarAdherer, &mut values, &mut provenance);
                }
                ScenarioLabel::S4_51 => impute_from(
                    i,
                    PoolKind::RetrievedDropouts,
                    Provenance::RetrievedDropout,
                    &mut values,
                    &mut provenance,
                ),
                _ => {}
            }
        }

        let s52: Vec<usize> = (0..n).filter(|&i| labels[i] == ScenarioLabel::S52).collect();
        match cfg.method {
            Method::A => {
                for &i in &s52 {
                    let pool = adherer_pool[i].expect("assigned above");
                    impute_from(i, pool, Provenance::MarAdherer, &mut values, &mut provenance);
                }
            }
            Method::B => {
                for &i in &s52 {
                    impute_from(
                        i,
                        PoolKind::RetrievedDropouts,
                        Provenance::RetrievedDropout,
                        &mut values,
                        &mut provenance,
                    );
                }
            }
            Method::C => {
                for &i in &s52 {
                    let p = gate_probabilities[i].expect("computed above");
                    let u: f64 = round.path(&[tag::GATE, i as u64]).rng().random();
                    if u < p {
                        impute_from(
                            i,
                            PoolKind::RetrievedDropouts,
                            Provenance::GatedRetrievedDropout,
                            &mut values,
                            &mut provenance,
                        );
                    } else {
                        let pool = adherer_pool[i].expect("assigned above");
                        impute_from(i, pool, Provenance::GatedAdherer, &mut values, &mut provenance);
                    }
                }
            }
            Method::D => {
                let mut pooled: BTreeMap<Arm, DonorFit> = BTreeMap::new();
                for &i in &s52 {
                    let arm = data.subjects[i].arm;
                    if let alloc::collections::btree_map::Entry::Vacant(e) = pooled.entry(arm) {
                        e.insert(fit_with_fallback(
                            data,
                            &labels,
                            &values,
                            arm,
                            PoolKind::AllNonAdministrative,
                            cfg.min_donor_pool,
                            &mut fallbacks,
                        )?);
                    }
                }
                let mut pooled_draws: BTreeMap<Arm, ParameterDraw> = BTreeMap::new();
                for &i in &s52 {
                    let s = &data.subjects[i];
                    let fit = &pooled[&s.arm];
                    let owner = if fit.pooled_arms { 2 } else { s.arm.index() as u64 };
                    let draw = pooled_draws
                        .entry(s.arm)
                        .or_insert_with(|| {
                            fit.model.draw(
                                &mut round
                                    .path(&[tag::MODEL, owner, PoolKind::AllNonAdministrative.code()])
                                    .rng(),
                            )
                        })
                        .clone();
                    values[i] = draw.predict(&design_row(s, None, fit.arm_indicator)) + draw.sigma * residual(i);
                    provenance[i] = Provenance::Pooled;
                }
            }
        }
        debug_assert!(values.iter().all(|v| v.is_finite()));
        completed.push(CompletedDataset {
            endpoints: values,
            provenance,
        });
    }

    fallbacks.sort();
    fallbacks.dedup();
    Ok(ImputationOutput {
        method: cfg.method,
        labels,
        completed,
        fallbacks,
        gate_probabilities,
        survival_models,
    })
}

fn with_method(cfg: &ImputationConfig, method: Method) -> ImputationConfig {
    ImputationConfig { method, ..cfg.clone() }
}

/// Administrative withdrawals imputed from adherers.
pub fn impute_method_a(data: &TrialDataset, cfg: &ImputationConfig) -> Result<ImputationOutput, ImputationError> {
    impute(data, &with_method(cfg, Method::A))
}

/// Administrative withdrawals imputed from retrieved dropouts.
pub fn impute_method_b(data: &TrialDataset, cfg: &ImputationConfig) -> Result<ImputationOutput, ImputationError> {
    impute(data, &with_method(cfg, Method::B))
}

/// Survival-gated choice between retrieved dropouts and adherers.
pub fn impute_method_c(data: &TrialDataset, cfg: &ImputationConfig) -> Result<ImputationOutput, ImputationError> {
    impute(data, &with_method(cfg, Method::C))
}

/// Administrative withdrawals imputed from all other subjects' endpoints.
pub fn impute_method_d(data: &TrialDataset, cfg: &ImputationConfig) -> Result<ImputationOutput, ImputationError> {
    impute(data, &with_method(cfg, Method::D))
}
