//! Synthetic trial generator: adherent trajectories from an exponential-decay
//! response model, visit-wise discontinuation, a 24-week washout of the
//! experimental effect after discontinuation, exponential administrative
//! withdrawals and the two endpoint-masking steps.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, StandardNormal};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{expit, pairwise_sum};
use crate::model::{Arm, SubjectRecord, TrialDataset, VisitGrid, WithdrawalType};
use crate::rng::{tag, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid parameter `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("unknown preset `{0}` (expected setting1 or setting2)")]
    UnknownPreset(String),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        name,
        reason: reason.into(),
    }
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "lowercase"))]
pub enum Preset {
    /// Efficacy-driven dropout (`alpha1 = 1.5`), few withdrawals (`lambda = 0.002`).
    Setting1,
    /// Purely random dropout (`alpha1 = 0`), more withdrawals (`lambda = 0.005`).
    Setting2,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Setting1 => "setting1",
            Preset::Setting2 => "setting2",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "setting1" | "1" => Ok(Preset::Setting1),
            "setting2" | "2" => Ok(Preset::Setting2),
            _ => Err(ConfigError::UnknownPreset(s.into())),
        }
    }
}

/// Location-scaled Beta for the baseline outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct BaselineDistribution {
    pub shape_a: f64,
    pub shape_b: f64,
    pub location: f64,
    pub scale: f64,
}

impl BaselineDistribution {
    pub fn mean(&self) -> f64 {
        self.location + self.scale * self.shape_a / (self.shape_a + self.shape_b)
    }
}

/// Every constant of the generative model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct GenParams {
    pub n_per_arm: usize,
    pub grid: VisitGrid,
    /// Ultimate change under adherence, control arm.
    pub theta_control: f64,
    /// Ultimate change under adherence, experimental arm.
    pub theta_experimental: f64,
    /// Baseline slope shared by both arms.
    pub beta0: f64,
    /// Extra baseline slope in the experimental arm.
    pub beta1: f64,
    pub baseline: BaselineDistribution,
    /// Centering constant for the baseline term.
    pub baseline_mean: f64,
    /// Decay rate of the response curve, per week.
    pub kappa: f64,
    pub sigma_s2: f64,
    pub sigma_e2: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Per-visit additive dropout probability, control arm.
    pub dropout_offsets_control: Vec<f64>,
    /// Per-visit additive dropout probability, experimental arm.
    pub dropout_offsets_experimental: Vec<f64>,
    /// Administrative-withdrawal hazard, per week.
    pub withdrawal_hazard: f64,
    pub washout_weeks: f64,
    pub p_miss_completer: f64,
    pub p_miss_retained_dropout: f64,
    /// Outcomes in `[-b, b]` must keep the dropout probability within [0, 1].
    pub plausible_outcome_bound: f64,
}

impl GenParams {
    pub fn preset(preset: Preset) -> Self {
        let baseline = BaselineDistribution {
            shape_a: 1.5,
            shape_b: 2.0,
            location: 7.0,
            scale: 3.0,
        };
        let (alpha1, withdrawal_hazard) = match preset {
            Preset::Setting1 => (1.5, 0.002),
            Preset::Setting2 => (0.0, 0.005),
        };
        GenParams {
            n_per_arm: 200,
            grid: VisitGrid::standard(),
            theta_control: 0.0,
            theta_experimental: DEFAULT_THETA_EXPERIMENTAL,
            beta0: -0.1,
            beta1: 0.2,
            baseline,
            baseline_mean: baseline.mean(),
            kappa: DEFAULT_KAPPA,
            sigma_s2: 1.0,
            sigma_e2: 0.5,
            alpha0: -3.5,
            alpha1,
            dropout_offsets_control: alloc::vec![0.2, 0.2, 0.2, 0.2],
            dropout_offsets_experimental: alloc::vec![0.06, 0.06, 0.03, 0.02],
            withdrawal_hazard,
            washout_weeks: 24.0,
            p_miss_completer: 0.05,
            p_miss_retained_dropout: 0.8,
            plausible_outcome_bound: 3.0,
        }
    }

    pub fn theta(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.theta_control,
            Arm::Experimental => self.theta_experimental,
        }
    }

    pub fn dropout_offsets(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Control => &self.dropout_offsets_control,
            Arm::Experimental => &self.dropout_offsets_experimental,
        }
    }

    /// Baseline slope for `arm`.
    pub fn slope(&self, arm: Arm) -> f64 {
        self.beta0 + arm.index() as f64 * self.beta1
    }

    /// Dropout probability at a visit, given the previous change from baseline.
    pub fn dropout_probability(&self, arm: Arm, visit: usize, previous: f64) -> f64 {
        let logit = self.alpha0 + self.alpha1 * previous;
        let p = if logit.is_nan() { 0.0 } else { expit(logit) };
        p + self.dropout_offsets(arm)[visit]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = |name, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, "must be finite"))
            }
        };
        if self.n_per_arm < 2 {
            return Err(invalid("n_per_arm", "need at least 2 subjects per arm"));
        }
        for (name, v) in [
            ("theta_control", self.theta_control),
            ("theta_experimental", self.theta_experimental),
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("baseline_mean", self.baseline_mean),
            ("alpha1", self.alpha1),
        ] {
            finite(name, v)?;
        }
        if self.alpha0.is_nan() || self.alpha0 == f64::INFINITY {
            return Err(invalid("alpha0", "must be finite or -inf"));
        }
        let b = &self.baseline;
        if !(b.shape_a > 0.0 && b.shape_b > 0.0 && b.shape_a.is_finite() && b.shape_b.is_finite()) {
            return Err(invalid("baseline", "Beta shapes must be positive and finite"));
        }
        if !(b.scale >= 0.0 && b.scale.is_finite()) || !b.location.is_finite() {
            return Err(invalid("baseline", "location must be finite and scale non-negative"));
        }
        // zero variances are accepted for noise-free checks
        for (name, v) in [("sigma_s2", self.sigma_s2), ("sigma_e2", self.sigma_e2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "variance must be non-negative and finite"));
            }
        }
        if self.kappa.is_nan() || self.kappa <= 0.0 {
            return Err(invalid("kappa", "must be positive"));
        }
        if !(self.withdrawal_hazard >= 0.0 && self.withdrawal_hazard.is_finite()) {
            return Err(invalid("withdrawal_hazard", "must be non-negative and finite"));
        }
        if !(self.washout_weeks > 0.0 && self.washout_weeks.is_finite()) {
            return Err(invalid("washout_weeks", "must be positive"));
        }
        for (name, p) in [
            ("p_miss_completer", self.p_miss_completer),
            ("p_miss_retained_dropout", self.p_miss_retained_dropout),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, "probability must lie in [0, 1]"));
            }
        }
        if !(self.plausible_outcome_bound >= 0.0 && self.plausible_outcome_bound.is_finite()) {
            return Err(invalid("plausible_outcome_bound", "must be non-negative and finite"));
        }
        let k = self.grid.len();
        for arm in Arm::BOTH {
            let name = match arm {
                Arm::Control => "dropout_offsets_control",
                Arm::Experimental => "dropout_offsets_experimental",
            };
            let c = self.dropout_offsets(arm);
            if c.len() != k {
                return Err(invalid(name, format!("expected {k} values, one per visit")));
            }
            for (visit, &ck) in c.iter().enumerate() {
                if !(0.0..1.0).contains(&ck) {
                    return Err(invalid(name, format!("visit {visit}: {ck} not in [0, 1)")));
                }
                let bound = self.plausible_outcome_bound;
                for y in [-bound, 0.0, bound] {
                    let p = self.dropout_probability(arm, visit, y);
                    if p > 1.0 {
                        return Err(invalid(
                            name,
                            format!("dropout probability {p:.4} exceeds 1 at visit {visit} for outcome {y}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Experimental-arm plateau used by both presets. Together with
/// [`DEFAULT_KAPPA`] it puts the true treatment-policy mean of the
/// experimental arm near -1.59 (setting 1) and -1.50 (setting 2).
pub const DEFAULT_THETA_EXPERIMENTAL: f64 = -2.0;
/// Response decay rate (per week) used by both presets.
pub const DEFAULT_KAPPA: f64 = 0.1;

/// Baseline outcome `loc + scale * Beta(a, b)`.
pub fn draw_baseline<R: Rng + ?Sized>(rng: &mut R, params: &GenParams) -> Result<f64, ConfigError> {
    let b = &params.baseline;
    let beta = Beta::new(b.shape_a, b.shape_b).map_err(|e| invalid("baseline", format!("{e}")))?;
    let draw: f64 = beta.sample(rng);
    Ok(b.location + b.scale * draw)
}

/// Subject effect and the change-from-baseline trajectory under adherence.
pub fn adherent_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    baseline: f64,
    arm: Arm,
    params: &GenParams,
) -> (f64, Vec<f64>) {
    let z: f64 = StandardNormal.sample(rng);
    let subject_effect = libm::sqrt(params.sigma_s2) * z;
    let level = params.theta(arm) + params.slope(arm) * (baseline - params.baseline_mean) + subject_effect;
    let sd_e = libm::sqrt(params.sigma_e2);
    let y = params
        .grid
        .times()
        .iter()
        .map(|&t| {
            let eps: f64 = StandardNormal.sample(rng);
            level * (1.0 - libm::exp(-params.kappa * t)) + sd_e * eps
        })
        .collect();
    (subject_effect, y)
}

/// Week of discontinuation, or `None` if the subject stays adherent.
///
/// Visit `k` is reached with probability `expit(alpha0 + alpha1 * y[k-1]) +
/// c_k` of stopping, where `y[-1] = 0`; a stop at visit `k` is dated at the
/// previous assessment (week 0 for the first visit). Probabilities above one
/// (outcomes far outside the plausible range) are capped.
pub fn simulate_disc_time<R: Rng + ?Sized>(rng: &mut R, adherent: &[f64], arm: Arm, params: &GenParams) -> Option<f64> {
    let times = params.grid.times();
    for k in 0..times.len() {
        let previous = if k == 0 { 0.0 } else { adherent[k - 1] };
        let p = params.dropout_probability(arm, k, previous).min(1.0);
        let u: f64 = rng.random();
        if u < p {
            return Some(if k == 0 { 0.0 } else { times[k - 1] });
        }
    }
    None
}

/// Treatment-policy trajectory: the experimental effect washes out linearly
/// over `washout_weeks` after discontinuation; control is unaffected.
pub fn treatment_policy_trajectory(adherent: &[f64], arm: Arm, disc_time: Option<f64>, params: &GenParams) -> Vec<f64> {
    let Some(ta) = disc_time else {
        return adherent.to_vec();
    };
    let lost = params.theta(arm) - params.theta_control;
    params
        .grid
        .times()
        .iter()
        .zip(adherent)
        .map(|(&t, &y)| {
            let elapsed = (t - ta).max(0.0).min(params.washout_weeks);
            y - lost * elapsed / params.washout_weeks * (1.0 - libm::exp(-params.kappa * t))
        })
        .collect()
}

/// Administrative withdrawal week, if it falls before the end of the study.
pub fn simulate_withdrawal<R: Rng + ?Sized>(rng: &mut R, params: &GenParams) -> Option<f64> {
    if params.withdrawal_hazard <= 0.0 {
        return None;
    }
    let exp = Exp::new(params.withdrawal_hazard).ok()?;
    let w: f64 = exp.sample(rng);
    (w < params.grid.duration()).then_some(w)
}

/// Applies withdrawal masking and the two endpoint-masking steps.
#[allow(clippy::too_many_arguments)]
pub fn assemble_subject<R: Rng + ?Sized>(
    rng: &mut R,
    id: String,
    arm: Arm,
    baseline: f64,
    treatment_policy: &[f64],
    disc_time: Option<f64>,
    withdraw_time: Option<f64>,
    params: &GenParams,
) -> SubjectRecord {
    let times = params.grid.times();
    let d = params.grid.duration();
    let mut outcomes: Vec<Option<f64>> = treatment_policy.iter().copied().map(Some).collect();
    if let Some(v) = withdraw_time {
        for (y, &t) in outcomes.iter_mut().zip(times) {
            if t > v {
                *y = None;
            }
        }
    }
    let horizon = withdraw_time.unwrap_or(f64::INFINITY).min(d);
    let recorded_disc = disc_time.filter(|&ta| ta < horizon);
    if withdraw_time.is_none() {
        let p = if recorded_disc.is_some() {
            params.p_miss_retained_dropout
        } else {
            params.p_miss_completer
        };
        let u: f64 = rng.random();
        if u < p {
            if let Some(last) = outcomes.last_mut() {
                *last = None;
            }
        }
    }
    let missing = outcomes.iter().map(Option::is_none).collect();
    SubjectRecord {
        id,
        arm,
        baseline,
        outcomes,
        missing,
        disc_time: recorded_disc,
        withdraw_time,
        withdraw_type: withdraw_time.map(|_| WithdrawalType::Administrative),
    }
}

fn subject_id(arm: Arm, j: usize) -> String {
    match arm {
        Arm::Control => format!("C{:04}", j + 1),
        Arm::Experimental => format!("E{:04}", j + 1),
    }
}

/// One trial drawn from `stream`; subject `i` (control first) uses child `i`.
pub fn generate_trial_in(params: &GenParams, stream: Stream) -> Result<TrialDataset, ConfigError> {
    params.validate()?;
    let n = params.n_per_arm;
    let mut subjects = Vec::with_capacity(2 * n);
    for arm in Arm::BOTH {
        for j in 0..n {
            let mut rng = stream.child((arm.index() * n + j) as u64).rng();
            let x = draw_baseline(&mut rng, params)?;
            let (_, adherent) = adherent_trajectory(&mut rng, x, arm, params);
            let ta = simulate_disc_time(&mut rng, &adherent, arm, params);
            let tp = treatment_policy_trajectory(&adherent, arm, ta, params);
            let v = simulate_withdrawal(&mut rng, params);
            subjects.push(assemble_subject(
                &mut rng,
                subject_id(arm, j),
                arm,
                x,
                &tp,
                ta,
                v,
                params,
            ));
        }
    }
    Ok(TrialDataset {
        grid: params.grid.clone(),
        subjects,
        provenance: format!("generated; stream {:016x}", stream.key()),
    })
}

/// A trial from a master seed.
pub fn generate_trial(params: &GenParams, seed: u64) -> Result<TrialDataset, ConfigError> {
    generate_trial_in(params, Stream::root(seed).child(tag::TRIAL))
}

/// True treatment-policy means.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrueValues {
    pub mean_control: f64,
    pub mean_treatment: f64,
    pub difference: f64,
    pub n_datasets: usize,
}

impl TrueValues {
    /// Averages per-dataset `[control, treatment]` complete-data means.
    pub fn from_dataset_means(means: &[[f64; 2]]) -> Self {
        let n = means.len() as f64;
        let c: Vec<f64> = means.iter().map(|m| m[0]).collect();
        let t: Vec<f64> = means.iter().map(|m| m[1]).collect();
        let d: Vec<f64> = means.iter().map(|m| m[1] - m[0]).collect();
        TrueValues {
            mean_control: pairwise_sum(&c) / n,
            mean_treatment: pairwise_sum(&t) / n,
            difference: pairwise_sum(&d) / n,
            n_datasets: means.len(),
        }
    }

    pub fn for_estimand(&self, estimand: crate::estimation::Estimand) -> f64 {
        use crate::estimation::Estimand;
        match estimand {
            Estimand::Control => self.mean_control,
            Estimand::Treatment => self.mean_treatment,
            Estimand::Difference => self.difference,
        }
    }
}

/// Complete-data endpoint means `[control, treatment]` of one truth dataset.
pub fn truth_dataset_means(params: &GenParams, stream: Stream) -> Result<[f64; 2], ConfigError> {
    let n = params.n_per_arm;
    let mut sums = [0.0; 2];
    for arm in Arm::BOTH {
        let mut endpoints = Vec::with_capacity(n);
        for j in 0..n {
            let mut rng = stream.child((arm.index() * n + j) as u64).rng();
            let x = draw_baseline(&mut rng, params)?;
            let (_, adherent) = adherent_trajectory(&mut rng, x, arm, params);
            let ta = simulate_disc_time(&mut rng, &adherent, arm, params);
            let tp = treatment_policy_trajectory(&adherent, arm, ta, params);
            endpoints.push(tp[tp.len() - 1]);
        }
        sums[arm.index()] = pairwise_sum(&endpoints) / n as f64;
    }
    Ok(sums)
}

/// Truth stream for dataset `i` under a master seed.
pub fn truth_stream(seed: u64, i: usize) -> Stream {
    Stream::root(seed).path(&[tag::TRUTH, i as u64])
}

/// Truth by averaging complete-data means over `n_datasets` datasets drawn
/// before any discontinuation-driven masking.
pub fn generate_truth(params: &GenParams, n_datasets: usize, seed: u64) -> Result<TrueValues, ConfigError> {
    params.validate()?;
    if n_datasets == 0 {
        return Err(invalid("n_datasets", "need at least one dataset"));
    }
    let means = (0..n_datasets)
        .map(|i| truth_dataset_means(params, truth_stream(seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrueValues::from_dataset_means(&means))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{classify_scenario, ScenarioLabel};
    use alloc::string::ToString;
    use alloc::vec;

    fn noise_free(preset: Preset) -> GenParams {
        let mut p = GenParams::preset(preset);
        p.sigma_s2 = 0.0;
        p.sigma_e2 = 0.0;
        p
    }

    #[test]
    fn presets_validate() {
        GenParams::preset(Preset::Setting1).validate().unwrap();
        GenParams::preset(Preset::Setting2).validate().unwrap();
        assert_eq!("setting2".parse::<Preset>().unwrap(), Preset::Setting2);
        assert!("setting3".parse::<Preset>().is_err());
    }

    #[test]
    fn baseline_mean_is_beta_mean() {
        let p = GenParams::preset(Preset::Setting1);
        assert!((p.baseline_mean - (7.0 + 3.0 * 1.5 / 3.5)).abs() < 1e-15);
        assert!((p.baseline_mean - 8.285714285714286).abs() < 1e-12);
    }

    #[test]
    fn degenerate_baseline_scale() {
        let mut p = GenParams::preset(Preset::Setting1);
        p.baseline.scale = 0.0;
        let mut rng = Stream::root(1).rng();
        for _ in 0..10 {
            assert_eq!(draw_baseline(&mut rng, &p).unwrap(), 7.0);
        }
    }

    #[test]
    fn invalid_beta_shape_rejected() {
        let mut p = GenParams::preset(Preset::Setting1);
        p.baseline.shape_a = 0.0;
        assert!(p.validate().is_err());
        let mut rng = Stream::root(1).rng();
        assert!(draw_baseline(&mut rng, &p).is_err());
    }

    #[test]
    fn noise_free_trajectory_plug_in() {
        let mut p = noise_free(Preset::Setting1);
        p.kappa = 1e3;
        let mut rng = Stream::root(3).rng();
        let x = 9.5;
        let (s, y) = adherent_trajectory(&mut rng, x, Arm::Control, &p);
        assert_eq!(s, 0.0);
        for v in y {
            assert!((v - (-0.1 * (x - p.baseline_mean))).abs() < 1e-12);
        }
        let (_, y) = adherent_trajectory(&mut rng, p.baseline_mean, Arm::Experimental, &p);
        for v in y {
            assert!((v - p.theta_experimental).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_probability_arithmetic() {
        let mut p = GenParams::preset(Preset::Setting2);
        p.dropout_offsets_control = vec![0.2; 4];
        let q = p.dropout_probability(Arm::Control, 0, 0.0);
        assert!((q - 0.22931223075135632).abs() < 1e-15);
        // certain discontinuation at the first check
        p.dropout_offsets_control = vec![1.0 - expit(-3.5); 4];
        let mut rng = Stream::root(9).rng();
        for _ in 0..100 {
            assert_eq!(simulate_disc_time(&mut rng, &[0.0; 4], Arm::Control, &p), Some(0.0));
        }
    }

    #[test]
    fn implausible_offsets_rejected() {
        let mut p = GenParams::preset(Preset::Setting1);
        p.dropout_offsets_control = vec![0.5; 4];
        // alpha1 = 1.5, y = 3 gives expit(1.0) = 0.731 > 0.5
        assert!(p.validate().is_err());
    }

    #[test]
    fn washout_rules() {
        let p = noise_free(Preset::Setting1);
        let y = vec![-0.5, -0.8, -0.9, -0.95];
        assert_eq!(treatment_policy_trajectory(&y, Arm::Control, Some(0.0), &p), y);
        assert_eq!(treatment_policy_trajectory(&y, Arm::Experimental, None, &p), y);
        assert_eq!(treatment_policy_trajectory(&y, Arm::Experimental, Some(48.0), &p), y);

        // full washout at week 48 after stopping at week 12
        let mut rng = Stream::root(5).rng();
        let (_, adherent) = adherent_trajectory(&mut rng, p.baseline_mean, Arm::Experimental, &p);
        let tp = treatment_policy_trajectory(&adherent, Arm::Experimental, Some(12.0), &p);
        let expected = p.theta_control * (1.0 - libm::exp(-p.kappa * 48.0));
        assert!((tp[3] - expected).abs() < 1e-12);
        // visits at or before the stop are untouched
        assert_eq!(tp[0], adherent[0]);
    }

    #[test]
    fn withdrawal_zero_hazard_never_fires() {
        let mut p = GenParams::preset(Preset::Setting1);
        p.withdrawal_hazard = 0.0;
        let mut rng = Stream::root(2).rng();
        assert!((0..1000).all(|_| simulate_withdrawal(&mut rng, &p).is_none()));
    }

    #[test]
    fn assembly_examples() {
        let p = GenParams::preset(Preset::Setting1);
        let g = &p.grid;
        let tp = [-0.3, -0.6, -0.8, -0.9];
        // find a stream where the completer mask does not fire
        let mut seed = 0;
        let s1 = loop {
            let mut rng = Stream::root(seed).rng();
            let s = assemble_subject(&mut rng, "a".to_string(), Arm::Control, 8.0, &tp, None, None, &p);
            if !s.endpoint_missing() {
                break s;
            }
            seed += 1;
        };
        assert_eq!(classify_scenario(&s1, g), Ok(ScenarioLabel::S1));

        let mut seed = 0;
        let s4 = loop {
            let mut rng = Stream::root(seed).rng();
            let s = assemble_subject(&mut rng, "b".to_string(), Arm::Control, 8.0, &tp, Some(24.0), None, &p);
            if s.endpoint_missing() {
                break s;
            }
            seed += 1;
        };
        assert_eq!(s4.disc_time, Some(24.0));
        assert_eq!(classify_scenario(&s4, g), Ok(ScenarioLabel::S4_51));
        // intermediate off-treatment visits remain observed
        assert!(s4.outcomes[2].is_some());

        let mut rng = Stream::root(0).rng();
        let s52 = assemble_subject(&mut rng, "c".to_string(), Arm::Control, 8.0, &tp, None, Some(30.0), &p);
        assert_eq!(s52.missing, vec![false, false, true, true]);
        assert_eq!(s52.withdraw_type, Some(WithdrawalType::Administrative));
        assert_eq!(classify_scenario(&s52, g), Ok(ScenarioLabel::S52));

        // discontinuation after the withdrawal is censored
        let cens = assemble_subject(
            &mut rng,
            "d".to_string(),
            Arm::Control,
            8.0,
            &tp,
            Some(36.0),
            Some(30.0),
            &p,
        );
        assert_eq!(cens.disc_time, None);
        assert_eq!(classify_scenario(&cens, g), Ok(ScenarioLabel::S52));
    }

    #[test]
    fn all_completers_when_nothing_happens() {
        let mut p = GenParams::preset(Preset::Setting1);
        p.withdrawal_hazard = 0.0;
        p.p_miss_completer = 0.0;
        p.p_miss_retained_dropout = 0.0;
        p.dropout_offsets_control = vec![0.0; 4];
        p.dropout_offsets_experimental = vec![0.0; 4];
        p.alpha0 = f64::NEG_INFINITY;
        let data = generate_trial(&p, 11).unwrap();
        let labels = data.classify().unwrap();
        assert!(labels.iter().all(|&l| l == ScenarioLabel::S1));
        assert_eq!(labels.len(), 400);
    }

    #[test]
    fn generation_is_reproducible() {
        let p = GenParams::preset(Preset::Setting2);
        assert_eq!(generate_trial(&p, 42).unwrap(), generate_trial(&p, 42).unwrap());
        assert_ne!(generate_trial(&p, 42).unwrap(), generate_trial(&p, 43).unwrap());
    }

    #[test]
    fn generated_datasets_are_valid() {
        for preset in [Preset::Setting1, Preset::Setting2] {
            let data = generate_trial(&GenParams::preset(preset), 5).unwrap();
            assert!(crate::model::validate_dataset(&data).is_empty());
            for s in &data.subjects {
                if let Some(v) = s.withdraw_time {
                    // monotone masking after withdrawal
                    for (k, &t) in data.grid.times().iter().enumerate() {
                        if t > v {
                            assert!(s.missing[k..].iter().all(|&m| m));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn noise_free_truth_is_plug_in() {
        let mut p = noise_free(Preset::Setting1);
        p.baseline.scale = 0.0;
        p.baseline_mean = 7.0;
        p.alpha0 = f64::NEG_INFINITY;
        p.dropout_offsets_control = vec![0.0; 4];
        p.dropout_offsets_experimental = vec![0.0; 4];
        let truth = generate_truth(&p, 1, 3).unwrap();
        let f = 1.0 - libm::exp(-p.kappa * 48.0);
        assert!((truth.mean_control - p.theta_control * f).abs() < 1e-12);
        assert!((truth.mean_treatment - p.theta_experimental * f).abs() < 1e-12);
        assert!((truth.difference - (truth.mean_treatment - truth.mean_control)).abs() < 1e-12);
    }

    #[test]
    fn zero_datasets_rejected() {
        assert!(generate_truth(&GenParams::preset(Preset::Setting1), 0, 1).is_err());
    }
}
