//! Simulation and multiple-imputation engine for a continuous endpoint in
//! longitudinal trials with treatment discontinuation and administrative
//! withdrawal.
//!
//! The crate is `no_std` with `alloc`; file formats, parallelism and the
//! command line live in the `rdmi` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod datagen;
pub mod estimation;
pub mod harness;
pub mod imputation;
pub mod math;
pub mod model;
pub mod rng;
pub mod survival;

pub use datagen::{generate_trial, generate_truth, GenParams, Preset, TrueValues};
pub use estimation::{estimate_complete, pool_estimates, pool_rubin, CompleteEstimate, Estimand, PooledEstimate};
pub use imputation::{impute, ImputationConfig, ImputationError, ImputationOutput, Method};
pub use model::{Arm, ScenarioLabel, SubjectRecord, TrialDataset, VisitGrid, WithdrawalType};
pub use rng::Stream;
pub use survival::{fit_survival, SurvivalKind, SurvivalModel};
