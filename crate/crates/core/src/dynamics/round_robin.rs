//! Asynchronous updates in alternating periods.
//!
//! A schedule is a cyclic list of periods. In a service period the listed
//! services retrain from the current memory; in a user period the listed
//! users best-respond to the current models and memory then absorbs the
//! resulting usage once. Two consecutive periods form a round.
//!
//! Within a period the state the agents react to does not change, so a
//! second update of the same agent is a repeat and is skipped.

use serde::{Deserialize, Serialize};

use super::{DynamicsError, Engine, Monitor, StepReport, Trajectory, Verdict};
use crate::domain::SimState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Users,
    Services,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub kind: AgentKind,
    /// Agents in update order; repeats are allowed.
    pub order: Vec<usize>,
}

impl Period {
    pub fn users(order: Vec<usize>) -> Self {
        Self {
            kind: AgentKind::Users,
            order,
        }
    }

    pub fn services(order: Vec<usize>) -> Self {
        Self {
            kind: AgentKind::Services,
            order,
        }
    }

    fn distinct(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for &a in &self.order {
            if !seen.contains(&a) {
                seen.push(a);
            }
        }
        seen
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub periods: Vec<Period>,
}

impl Schedule {
    /// Services then users, every agent once: the same as joint steps.
    pub fn joint(n: usize, m: usize) -> Self {
        Self {
            periods: vec![
                Period::services((0..m).collect()),
                Period::users((0..n).collect()),
            ],
        }
    }

    /// Checks alternation and that every period covers all agents of its
    /// kind.
    pub fn validate(&self, n: usize, m: usize) -> Result<(), DynamicsError> {
        let invalid = |msg: String| Err(DynamicsError::InvalidSchedule(msg));
        if self.periods.is_empty() || !self.periods.len().is_multiple_of(2) {
            return invalid(format!(
                "need a positive even number of periods, got {}",
                self.periods.len()
            ));
        }
        for (k, period) in self.periods.iter().enumerate() {
            let next = &self.periods[(k + 1) % self.periods.len()];
            if next.kind == period.kind {
                return invalid(format!(
                    "periods {k} and {} are both {:?}",
                    (k + 1) % self.periods.len(),
                    period.kind
                ));
            }
            let count = match period.kind {
                AgentKind::Users => n,
                AgentKind::Services => m,
            };
            if let Some(&bad) = period.order.iter().find(|&&a| a >= count) {
                return invalid(format!("period {k} names agent {bad}, only {count} exist"));
            }
            if period.distinct().len() != count {
                return invalid(format!(
                    "period {k} does not update every one of the {count} {:?}",
                    period.kind
                ));
            }
        }
        Ok(())
    }
}

impl Engine<'_> {
    /// Runs the schedule round by round until a verdict. The verdict and
    /// the report step indices count rounds.
    pub fn round_robin_run(
        &self,
        initial: StepReport,
        schedule: &Schedule,
    ) -> Result<(Trajectory, Verdict), DynamicsError> {
        let m = initial.state.n_services();
        schedule.validate(self.dataset.len(), m)?;
        let mut monitor = Monitor::new(self.max_steps(m));
        let mut trajectory = Vec::new();
        let mut current = initial;
        let mut cursor = 0;
        loop {
            if let Some(verdict) = monitor.observe(&current) {
                trajectory.push(current);
                return Ok((trajectory, verdict));
            }
            let round = current.state.step + 1;
            let mut state = current.state.clone();
            let memory_before = state.memory.clone();
            for _ in 0..2 {
                self.run_period(&mut state, &schedule.periods[cursor], round)?;
                cursor = (cursor + 1) % schedule.periods.len();
            }
            state.step = round;
            trajectory.push(current);
            current = self.report(state, &memory_before)?;
        }
    }

    fn run_period(
        &self,
        state: &mut SimState,
        period: &Period,
        round: usize,
    ) -> Result<(), DynamicsError> {
        match period.kind {
            AgentKind::Services => {
                for j in period.distinct() {
                    self.update_service(state, j, round)?;
                }
            }
            AgentKind::Users => {
                for i in period.distinct() {
                    self.update_user(state, i, round)?;
                }
                state.memory = super::memory_update(&state.memory, &state.usage, self.cfg.p)?;
            }
        }
        Ok(())
    }
}
