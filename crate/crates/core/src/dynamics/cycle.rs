//! Detecting revisited states.
//!
//! Two states match when every deployed model agrees parameter-wise and
//! every usage entry agrees, both to within [`STATE_TOL`], and memory has
//! the same support. Memory values themselves keep decaying even when
//! nothing else changes, so only their support is compared.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::domain::SimState;
use crate::models::Model;

use super::StepReport;

pub const STATE_TOL: f64 = 1e-12;

pub fn states_match(a: &SimState, b: &SimState) -> bool {
    a.models.len() == b.models.len()
        && a.models
            .iter()
            .zip(&b.models)
            .all(|(x, y)| Arc::ptr_eq(x, y) || x.approx_eq(y, STATE_TOL))
        && a.usage.shape() == b.usage.shape()
        && a.usage.matrix().max_abs_diff(b.usage.matrix()) <= STATE_TOL
        && support(a) == support(b)
}

fn support(state: &SimState) -> Vec<bool> {
    state
        .memory
        .matrix()
        .raw()
        .iter()
        .map(|&v| v > 0.0)
        .collect()
}

/// Smallest period `k`, then earliest start `s`, such that every state
/// from `s` on equals the state `k` places later.
pub fn detect_cycle(trajectory: &[StepReport]) -> Option<(usize, usize)> {
    let len = trajectory.len();
    (1..len).find_map(|k| {
        let mut s = len - k;
        while s > 0 && states_match(&trajectory[s - 1].state, &trajectory[s - 1 + k].state) {
            s -= 1;
        }
        (s + k < len).then_some((k, s))
    })
}

/// Stored state data needed for an exact comparison.
struct Key {
    models: Vec<Arc<Model>>,
    usage: Vec<f64>,
    support: Vec<bool>,
}

impl Key {
    fn matches(&self, state: &SimState, support: &[bool]) -> bool {
        self.support == support
            && self.models.len() == state.models.len()
            && self
                .models
                .iter()
                .zip(&state.models)
                .all(|(x, y)| Arc::ptr_eq(x, y) || x.approx_eq(y, STATE_TOL))
            && self.usage.len() == state.usage.matrix().raw().len()
            && self
                .usage
                .iter()
                .zip(state.usage.matrix().raw())
                .all(|(a, b)| (a - b).abs() <= STATE_TOL)
    }
}

/// Index of visited states bucketed by a hash of their discrete parts
/// (usage support and memory support), so lookups stay cheap on long runs.
#[derive(Default)]
pub(crate) struct SeenStates {
    keys: Vec<Key>,
    buckets: HashMap<u64, Vec<usize>>,
}

impl SeenStates {
    pub(crate) fn len(&self) -> usize {
        self.keys.len()
    }

    /// Records `state`; returns the index of an earlier matching state.
    pub(crate) fn insert(&mut self, state: &SimState) -> Option<usize> {
        let support = support(state);
        let mut hasher = DefaultHasher::new();
        support.hash(&mut hasher);
        for &v in state.usage.matrix().raw() {
            (v > 0.0).hash(&mut hasher);
        }
        let bucket = self.buckets.entry(hasher.finish()).or_default();
        let earlier = bucket
            .iter()
            .copied()
            .find(|&k| self.keys[k].matches(state, &support));
        bucket.push(self.keys.len());
        self.keys.push(Key {
            models: state.models.clone(),
            usage: state.usage.matrix().raw().to_vec(),
            support,
        });
        earlier
    }
}
