//! Simulation of users who choose how much to use competing classifier
//! services, and of services that retrain on the users they observe.
//!
//! The main entry points are [`dynamics::Engine`] for running the
//! interaction, [`data`] for building instances and
//! [`training::min_norm_separator`] for the service update.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod domain;
pub mod dynamics;
pub mod models;
pub mod strategic;
pub mod training;

pub use domain::{Dataset, DynamicsConfig, Label, MemoryMatrix, SimState, UsageMatrix, UserRecord};
pub use dynamics::{Engine, StepReport, Trajectory, Verdict};
pub use models::{LossSpec, Model, ModelFamily};
pub use strategic::TiePolicy;
pub use training::{ResamplingTrainer, Retrainer, StickyTrainer, TrainerConfig};
