//! The repeated interaction between users and services.
//!
//! One joint step from `(H^t, A^t, M^t)`:
//! 1. every service retrains on its memory column, giving `H^{t+1}`;
//! 2. every user best-responds to `H^{t+1}`, giving `A^{t+1}`;
//! 3. memory absorbs the new usage, giving `M^{t+1}`.
//!
//! The initial state is produced by [`Engine::start`], where users respond
//! to the initial models and memory folds in an optional prior (such as a
//! handful of users revealed before the first step).

pub mod cycle;
pub mod round_robin;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{
    validate_state, Dataset, DenseMatrix, DomainError, DynamicsConfig, MemoryMatrix, SimState,
    UsageMatrix, Violation,
};
use crate::models::{
    loss, utility, weighted_expected_loss, LossSpec, Model, ModelError, ModelSummary,
};
use crate::strategic::{joint_user_update, user_row, Decision};
use crate::training::{RetrainSite, Retrainer, TrainError};

pub use cycle::{detect_cycle, states_match};
pub use round_robin::{AgentKind, Period, Schedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("service {service} could not retrain at step {step}: {source}")]
    Train {
        step: usize,
        service: usize,
        source: TrainError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("state violates {} invariant(s), first: {:?}", .0.len(), .0.first())]
    InvalidState(Vec<Violation>),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// `M = (A + p * M_prev) / (1 + p)`.
///
/// An entry that was positive stays positive: with `p > 0` a result that
/// would underflow to zero is held at the smallest normal double, so the
/// support of memory is exactly the set of pairs ever used.
pub fn memory_update(
    prev: &MemoryMatrix,
    usage: &UsageMatrix,
    p: f64,
) -> Result<MemoryMatrix, DomainError> {
    if prev.shape() != usage.shape() {
        return Err(DomainError::ShapeMismatch {
            expected: prev.shape(),
            found: usage.shape(),
        });
    }
    let (n, m) = prev.shape();
    let mut out = DenseMatrix::zeros(n, m);
    for j in 0..m {
        let (old, new) = (prev.column(j), usage.column(j));
        for (i, slot) in out.column_mut(j).iter_mut().enumerate() {
            let mut v = (new[i] + p * old[i]) / (1.0 + p);
            if v < f64::MIN_POSITIVE && (new[i] > 0.0 || (p > 0.0 && old[i] > 0.0)) {
                v = f64::MIN_POSITIVE;
            }
            *slot = v;
        }
    }
    Ok(MemoryMatrix(out))
}

/// Zero-loss test: every used pair has zero loss, and no negative user
/// gets positive utility from any service (used or not).
pub fn is_zero_loss(
    state: &SimState,
    dataset: &Dataset,
    spec: &LossSpec,
    zero_tol: f64,
) -> Result<bool, ModelError> {
    for (j, model) in state.models.iter().enumerate() {
        for (i, user) in dataset.users().iter().enumerate() {
            let a = state.usage.get(i, j);
            if a > 0.0 && a * loss(model, &user.features, user.label, spec)? > zero_tol {
                return Ok(false);
            }
            if !user.label.is_positive() && utility(model, &user.features, spec)? > zero_tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// One state of a run with its accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub state: SimState,
    /// Loss of each deployed model on its own current usage.
    pub per_service_loss: Vec<f64>,
    /// Pairs used now that were absent from memory before this step.
    pub newly_revealed: Vec<(usize, usize)>,
    pub is_zero_loss: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// `at_step` is zero-loss and so is its successor.
    ConvergedZeroLoss {
        at_step: usize,
    },
    /// The state at `first_seen + period` equals the state at `first_seen`.
    Oscillating {
        period: usize,
        first_seen: usize,
    },
    Exhausted {
        max_steps: usize,
    },
}

impl Verdict {
    pub fn converged(&self) -> bool {
        matches!(self, Verdict::ConvergedZeroLoss { .. })
    }
}

pub type Trajectory = Vec<StepReport>;

/// Everything a run needs besides its state.
pub struct Engine<'a> {
    pub dataset: &'a Dataset,
    pub spec: LossSpec,
    pub cfg: DynamicsConfig,
    pub trainer: &'a dyn Retrainer,
}

impl<'a> Engine<'a> {
    pub fn new(
        dataset: &'a Dataset,
        spec: LossSpec,
        cfg: DynamicsConfig,
        trainer: &'a dyn Retrainer,
    ) -> Result<Self, DynamicsError> {
        cfg.validate()?;
        Ok(Self {
            dataset,
            spec,
            cfg,
            trainer,
        })
    }

    pub fn max_steps(&self, m: usize) -> usize {
        self.cfg.resolved_max_steps(self.dataset.len(), m)
    }

    /// Users respond to `models`; memory folds that usage into `prior`
    /// (zero when absent).
    pub fn start(
        &self,
        models: Vec<Arc<Model>>,
        prior: Option<&MemoryMatrix>,
    ) -> Result<StepReport, DynamicsError> {
        let (n, m) = (self.dataset.len(), models.len());
        let zeros = MemoryMatrix::zeros(n, m);
        let prior = prior.unwrap_or(&zeros);
        if prior.shape() != (n, m) {
            return Err(DomainError::ShapeMismatch {
                expected: (n, m),
                found: prior.shape(),
            }
            .into());
        }
        let usage = joint_user_update(&models, self.dataset, &self.spec, &self.cfg, 0)?;
        let memory = memory_update(prior, &usage, self.cfg.p)?;
        let state = SimState {
            models,
            usage,
            memory,
            step: 0,
        };
        let violations = validate_state(&state, self.dataset);
        if !violations.is_empty() {
            return Err(DynamicsError::InvalidState(violations));
        }
        self.report(state, prior)
    }

    /// Services retrain, then users respond, then memory absorbs the usage.
    pub fn joint_step(&self, state: &SimState) -> Result<StepReport, DynamicsError> {
        let step = state.step + 1;
        let models = (0..state.n_services())
            .into_par_iter()
            .map(|j| self.retrain(state, j, step))
            .collect::<Result<Vec<_>, _>>()?;
        let usage = joint_user_update(&models, self.dataset, &self.spec, &self.cfg, step)?;
        let memory = memory_update(&state.memory, &usage, self.cfg.p)?;
        self.report(
            SimState {
                models,
                usage,
                memory,
                step,
            },
            &state.memory,
        )
    }

    fn retrain(
        &self,
        state: &SimState,
        service: usize,
        step: usize,
    ) -> Result<Arc<Model>, DynamicsError> {
        self.trainer
            .retrain(
                &state.models[service],
                state.memory.column(service),
                self.dataset,
                &self.spec,
                self.cfg.zero_tol,
                RetrainSite { step, service },
            )
            .map_err(|source| DynamicsError::Train {
                step,
                service,
                source,
            })
    }

    /// Retrains a single service in place. Returns whether its model
    /// changed.
    pub fn update_service(
        &self,
        state: &mut SimState,
        service: usize,
        step: usize,
    ) -> Result<bool, DynamicsError> {
        let next = self.retrain(state, service, step)?;
        let changed = !Arc::ptr_eq(&next, &state.models[service]);
        state.models[service] = next;
        Ok(changed)
    }

    /// One user best-responds in place; memory is not touched. Returns
    /// whether the usage row changed.
    pub fn update_user(
        &self,
        state: &mut SimState,
        user: usize,
        step: usize,
    ) -> Result<bool, DynamicsError> {
        let row = user_row(
            &state.models,
            self.dataset,
            &self.spec,
            &self.cfg,
            Decision { step, user },
        )?;
        let changed = row != state.usage.row(user);
        state.usage.0.set_row(user, &row);
        Ok(changed)
    }

    pub(crate) fn report(
        &self,
        state: SimState,
        prev_memory: &MemoryMatrix,
    ) -> Result<StepReport, DynamicsError> {
        let per_service_loss = state
            .models
            .iter()
            .enumerate()
            .map(|(j, h)| {
                weighted_expected_loss(h, self.dataset, state.usage.column(j), &self.spec)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (n, m) = state.usage.shape();
        let newly_revealed = (0..m)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .filter(|&(i, j)| state.usage.get(i, j) > 0.0 && !prev_memory.is_supported(i, j))
            .collect();
        let is_zero_loss = is_zero_loss(&state, self.dataset, &self.spec, self.cfg.zero_tol)?;
        Ok(StepReport {
            state,
            per_service_loss,
            newly_revealed,
            is_zero_loss,
        })
    }

    /// Runs joint steps until a verdict, keeping every report.
    pub fn run(&self, initial: StepReport) -> Result<(Trajectory, Verdict), DynamicsError> {
        let mut trajectory = Vec::new();
        let verdict = self.run_observed(initial, |r| trajectory.push(r.clone()))?;
        Ok((trajectory, verdict))
    }

    /// Runs joint steps until a verdict, handing each report (the initial
    /// one included) to `observe` as soon as it exists.
    pub fn run_observed(
        &self,
        initial: StepReport,
        mut observe: impl FnMut(&StepReport),
    ) -> Result<Verdict, DynamicsError> {
        let mut monitor = Monitor::new(self.max_steps(initial.state.n_services()));
        let mut current = initial;
        loop {
            observe(&current);
            if let Some(verdict) = monitor.observe(&current) {
                return Ok(verdict);
            }
            current = self.joint_step(&current.state)?;
        }
    }
}

/// Incremental verdict logic shared by joint and round-robin runs.
pub(crate) struct Monitor {
    max_steps: usize,
    previous: Option<(usize, bool)>,
    seen: cycle::SeenStates,
}

impl Monitor {
    pub(crate) fn new(max_steps: usize) -> Self {
        Self {
            max_steps,
            previous: None,
            seen: cycle::SeenStates::default(),
        }
    }

    /// Feeds the next report. Steps are counted by how many reports came
    /// before, so the first report is step 0.
    pub(crate) fn observe(&mut self, report: &StepReport) -> Option<Verdict> {
        let index = self.seen.len();
        if let Some((at_step, true)) = self.previous {
            if report.is_zero_loss {
                return Some(Verdict::ConvergedZeroLoss { at_step });
            }
        }
        self.previous = Some((index, report.is_zero_loss));
        if let Some(first_seen) = self.seen.insert(&report.state) {
            return Some(Verdict::Oscillating {
                period: index - first_seen,
                first_seen,
            });
        }
        (index >= self.max_steps).then_some(Verdict::Exhausted {
            max_steps: self.max_steps,
        })
    }
}

/// The per-step record written to trajectory streams.
#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub models: Vec<ModelSummary>,
    /// Total usage of each service by positive users.
    pub positive_usage: Vec<f64>,
    pub negative_usage: Vec<f64>,
    pub loss: Vec<f64>,
    pub zero_loss: bool,
    pub newly_revealed: usize,
}

impl TrajectoryRecord {
    pub fn new(report: &StepReport, dataset: &Dataset) -> Self {
        let state = &report.state;
        let (positive_usage, negative_usage) = (0..state.n_services())
            .map(|j| state.usage.totals_by_class(dataset, j))
            .unzip();
        Self {
            step: state.step,
            models: state.models.iter().map(|h| h.summary()).collect(),
            positive_usage,
            negative_usage,
            loss: report.per_service_loss.clone(),
            zero_loss: report.is_zero_loss,
            newly_revealed: report.newly_revealed.len(),
        }
    }
}
