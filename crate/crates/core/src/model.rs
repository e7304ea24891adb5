//! Trial data model and the deterministic scenario classification.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Randomized arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "lowercase"))]
pub enum Arm {
    Control,
    Experimental,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Experimental];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Experimental => 1,
        }
    }

    /// Treatment code Z (0 control, 1 experimental).
    pub fn from_code(code: u8) -> Option<Arm> {
        match code {
            0 => Some(Arm::Control),
            1 => Some(Arm::Experimental),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self.index() as u8
    }
}

/// Reason recorded for a study withdrawal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "lowercase"))]
pub enum WithdrawalType {
    /// Site closure, pandemic measures, relocation: censors the
    /// discontinuation process.
    Administrative,
    /// Anything possibly related to treatment or disease, or undocumented.
    Other,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("visit grid is empty")]
    Empty,
    #[error("visit times must be finite, positive and strictly increasing (offending value {0})")]
    NotIncreasing(f64),
}

/// Post-baseline assessment weeks `t_1 < ... < t_K = d`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(try_from = "Vec<f64>", into = "Vec<f64>")
)]
pub struct VisitGrid {
    times: Vec<f64>,
}

impl VisitGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, GridError> {
        if times.is_empty() {
            return Err(GridError::Empty);
        }
        let mut prev = 0.0;
        for &t in &times {
            if !t.is_finite() || t <= prev {
                return Err(GridError::NotIncreasing(t));
            }
            prev = t;
        }
        Ok(VisitGrid { times })
    }

    /// Weeks 12, 24, 36 and 48.
    pub fn standard() -> Self {
        VisitGrid {
            times: alloc::vec![12.0, 24.0, 36.0, 48.0],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Study duration `d = t_K`.
    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn endpoint_index(&self) -> usize {
        self.times.len() - 1
    }
}

impl Default for VisitGrid {
    fn default() -> Self {
        Self::standard()
    }
}

impl TryFrom<Vec<f64>> for VisitGrid {
    type Error = GridError;
    fn try_from(v: Vec<f64>) -> Result<Self, GridError> {
        VisitGrid::new(v)
    }
}

impl From<VisitGrid> for Vec<f64> {
    fn from(g: VisitGrid) -> Vec<f64> {
        g.times
    }
}

/// One randomized subject.
///
/// `outcomes[k]` is the change from baseline at `grid.times()[k]`;
/// `missing[k]` is the missingness flag for that visit. `disc_time` is the
/// week of the normal real-world-like treatment discontinuation, when one was
/// observed; `withdraw_time`/`withdraw_type` describe a study withdrawal.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub arm: Arm,
    pub baseline: f64,
    pub outcomes: Vec<Option<f64>>,
    pub missing: Vec<bool>,
    pub disc_time: Option<f64>,
    pub withdraw_time: Option<f64>,
    pub withdraw_type: Option<WithdrawalType>,
}

impl SubjectRecord {
    pub fn endpoint(&self) -> Option<f64> {
        self.outcomes.last().copied().flatten()
    }

    pub fn endpoint_missing(&self) -> bool {
        self.missing.last().copied().unwrap_or(true)
    }

    /// Index of the last observed visit strictly before the endpoint.
    pub fn last_observed_intermediate(&self) -> Option<usize> {
        let k = self.outcomes.len().checked_sub(1)?;
        (0..k).rev().find(|&i| self.outcomes[i].is_some())
    }
}

/// Five-way classification of a subject's treatment/study journey relative
/// to the endpoint. Scenarios 4 and 5.1 are merged.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum ScenarioLabel {
    /// On treatment throughout, endpoint observed.
    S1,
    /// On treatment throughout, endpoint missing for logistic reasons.
    S2,
    /// Retrieved dropout: discontinued treatment, endpoint observed.
    S3,
    /// Discontinued before withdrawal/completion (or non-administrative
    /// withdrawal), endpoint missing.
    S4_51,
    /// Administrative withdrawal before any discontinuation, endpoint missing.
    S52,
}

impl ScenarioLabel {
    pub const ALL: [ScenarioLabel; 5] = [
        ScenarioLabel::S1,
        ScenarioLabel::S2,
        ScenarioLabel::S3,
        ScenarioLabel::S4_51,
        ScenarioLabel::S52,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioLabel::S1 => "S1",
            ScenarioLabel::S2 => "S2",
            ScenarioLabel::S3 => "S3",
            ScenarioLabel::S4_51 => "S4_51",
            ScenarioLabel::S52 => "S52",
        }
    }
}

impl fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single broken invariant on a subject record.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordViolation {
    #[error("expected {expected} visits, found {outcomes} outcomes and {flags} missing flags")]
    VisitCountMismatch {
        expected: usize,
        outcomes: usize,
        flags: usize,
    },
    #[error("visit {visit}: outcome presence disagrees with its missing flag")]
    OutcomeFlagMismatch { visit: usize },
    #[error("withdrawal type recorded without a withdrawal time")]
    WithdrawTypeWithoutTime,
    #[error("{field} = {value} lies outside [0, {duration}]")]
    TimeOutOfRange {
        field: &'static str,
        value: f64,
        duration: f64,
    },
    #[error("visit {visit} is observed after the study withdrawal")]
    ObservedAfterWithdrawal { visit: usize },
    #[error("treatment discontinuation recorded after the study withdrawal")]
    DiscontinuationAfterWithdrawal,
    #[error("{field} is not a finite number")]
    NonFinite { field: &'static str },
    #[error("duplicate subject id")]
    DuplicateId,
}

/// A violation located in a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub id: String,
    pub violation: RecordViolation,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subject #{} ({}): {}", self.index, self.id, self.violation)
    }
}

/// Every invariant violation of one record (empty when valid).
pub fn validate_subject(subject: &SubjectRecord, grid: &VisitGrid) -> Vec<RecordViolation> {
    let mut out = Vec::new();
    let k = grid.len();
    let d = grid.duration();
    if subject.outcomes.len() != k || subject.missing.len() != k {
        out.push(RecordViolation::VisitCountMismatch {
            expected: k,
            outcomes: subject.outcomes.len(),
            flags: subject.missing.len(),
        });
        return out;
    }
    if !subject.baseline.is_finite() {
        out.push(RecordViolation::NonFinite { field: "baseline" });
    }
    for (visit, (y, &r)) in subject.outcomes.iter().zip(&subject.missing).enumerate() {
        if y.is_some() == r {
            out.push(RecordViolation::OutcomeFlagMismatch { visit });
        }
        if let Some(y) = y {
            if !y.is_finite() {
                out.push(RecordViolation::NonFinite { field: "outcome" });
            }
        }
    }
    if subject.withdraw_type.is_some() && subject.withdraw_time.is_none() {
        out.push(RecordViolation::WithdrawTypeWithoutTime);
    }
    for (field, value) in [
        ("disc_time", subject.disc_time),
        ("withdraw_time", subject.withdraw_time),
    ] {
        if let Some(v) = value {
            if !v.is_finite() {
                out.push(RecordViolation::NonFinite { field });
            } else if !(0.0..=d).contains(&v) {
                out.push(RecordViolation::TimeOutOfRange {
                    field,
                    value: v,
                    duration: d,
                });
            }
        }
    }
    if let Some(v) = subject.withdraw_time {
        for (visit, &t) in grid.times().iter().enumerate() {
            if t > v && !subject.missing[visit] {
                out.push(RecordViolation::ObservedAfterWithdrawal { visit });
            }
        }
        if let Some(u) = subject.disc_time {
            if u > v {
                out.push(RecordViolation::DiscontinuationAfterWithdrawal);
            }
        }
    }
    out
}

/// Maps a valid record to its scenario.
///
/// Only the endpoint flag, the discontinuation time and the withdrawal time
/// and type are consulted. A withdrawal without a recorded type is treated as
/// non-administrative. A discontinuation at or after `d` counts as none, and
/// so does a withdrawal at or after `d`.
pub fn classify_scenario(subject: &SubjectRecord, grid: &VisitGrid) -> Result<ScenarioLabel, RecordViolation> {
    if let Some(v) = validate_subject(subject, grid).into_iter().next() {
        return Err(v);
    }
    let d = grid.duration();
    let disc = subject.disc_time.filter(|&u| u < d);
    if !subject.endpoint_missing() {
        return Ok(if disc.is_some() {
            ScenarioLabel::S3
        } else {
            ScenarioLabel::S1
        });
    }
    let withdrawal = subject.withdraw_time.filter(|&v| v < d);
    Ok(match (disc, withdrawal) {
        (None, None) => ScenarioLabel::S2,
        (Some(_), None) => ScenarioLabel::S4_51,
        (Some(u), Some(v)) if u < v => ScenarioLabel::S4_51,
        (_, Some(_)) => match subject.withdraw_type {
            Some(WithdrawalType::Administrative) => ScenarioLabel::S52,
            _ => ScenarioLabel::S4_51,
        },
    })
}

/// A set of subjects sharing one visit grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    pub grid: VisitGrid,
    pub subjects: Vec<SubjectRecord>,
    pub provenance: String,
}

impl TrialDataset {
    /// Labels for every subject, in order; the first violation otherwise.
    pub fn classify(&self) -> Result<Vec<ScenarioLabel>, Violation> {
        self.subjects
            .iter()
            .enumerate()
            .map(|(index, s)| {
                classify_scenario(s, &self.grid).map_err(|violation| Violation {
                    index,
                    id: s.id.clone(),
                    violation,
                })
            })
            .collect()
    }

    pub fn arm_sizes(&self) -> [usize; 2] {
        let mut n = [0; 2];
        for s in &self.subjects {
            n[s.arm.index()] += 1;
        }
        n
    }
}

/// Per-arm, per-scenario counts `[arm][scenario]`.
pub fn scenario_counts(arms: impl IntoIterator<Item = (Arm, ScenarioLabel)>) -> [[usize; 5]; 2] {
    let mut counts = [[0usize; 5]; 2];
    for (arm, label) in arms {
        counts[arm.index()][label.index()] += 1;
    }
    counts
}

/// Every violation in the dataset; empty iff the dataset is well formed.
pub fn validate_dataset(data: &TrialDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (index, s) in data.subjects.iter().enumerate() {
        if !seen.insert(s.id.as_str()) {
            out.push(Violation {
                index,
                id: s.id.clone(),
                violation: RecordViolation::DuplicateId,
            });
        }
        for violation in validate_subject(s, &data.grid) {
            out.push(Violation {
                index,
                id: s.id.clone(),
                violation,
            });
        }
    }
    out
}
