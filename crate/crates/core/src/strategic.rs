//! User best responses.
//!
//! A user with utilities `u_j` picks usage `A_j >= 0` maximising
//! `sum_j A_j u_j - (sum_j A_j)^q / q`. For any fixed total the linear
//! term is largest when all usage sits on the best services, and the
//! optimal total is `u*^(1/(q-1))` when `u* > 0` and zero otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, DenseMatrix, DynamicsConfig, UsageMatrix};
use crate::models::{utility, LossSpec, Model, ModelError};
use crate::training::stream_seed;

/// How a user splits usage between services with (numerically) equal
/// utility.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    EvenSplit,
    /// All usage on one tied service drawn uniformly from a stream keyed
    /// by `(seed, step, user)`.
    Concentrate {
        seed: u64,
    },
    LowestIndex,
}

/// Identifies the decision being made, so seeded policies are replayable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Decision {
    pub step: usize,
    pub user: usize,
}

/// Best-response usage row for one user.
///
/// `Concentrate` draws from the stream of `Decision::default()`; use
/// [`best_response_at`] inside the dynamics.
pub fn best_response(utilities: &[f64], q: f64, policy: TiePolicy, tie_tol: f64) -> Vec<f64> {
    best_response_at(utilities, q, policy, tie_tol, Decision::default())
}

pub fn best_response_at(
    utilities: &[f64],
    q: f64,
    policy: TiePolicy,
    tie_tol: f64,
    at: Decision,
) -> Vec<f64> {
    let mut row = vec![0.0; utilities.len()];
    let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(best > 0.0) {
        return row;
    }
    let total = best.powf(1.0 / (q - 1.0));
    let tied: Vec<usize> = (0..utilities.len())
        .filter(|&j| utilities[j] >= best - tie_tol)
        .collect();
    match policy {
        TiePolicy::EvenSplit => {
            let share = total / tied.len() as f64;
            for &j in &tied {
                row[j] = share;
            }
        }
        TiePolicy::LowestIndex => row[tied[0]] = total,
        TiePolicy::Concentrate { seed } => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(stream_seed(seed, at.step as u64, at.user as u64));
            row[tied[rng.random_range(0..tied.len())]] = total;
        }
    }
    row
}

/// The user's objective for a given usage row.
pub fn user_objective(row: &[f64], utilities: &[f64], q: f64) -> f64 {
    let gain: f64 = row.iter().zip(utilities).map(|(a, u)| a * u).sum();
    let total: f64 = row.iter().sum();
    gain - total.powf(q) / q
}

/// Every user best-responds to the same deployed models.
pub fn joint_user_update(
    models: &[impl AsRef<Model> + Sync],
    dataset: &Dataset,
    spec: &LossSpec,
    cfg: &DynamicsConfig,
    step: usize,
) -> Result<UsageMatrix, ModelError> {
    let rows: Vec<Vec<f64>> = (0..dataset.len())
        .into_par_iter()
        .map(|i| user_row(models, dataset, spec, cfg, Decision { step, user: i }))
        .collect::<Result<_, _>>()?;
    let mut out = DenseMatrix::zeros(dataset.len(), models.len());
    for (i, row) in rows.iter().enumerate() {
        out.set_row(i, row);
    }
    Ok(UsageMatrix(out))
}

/// One user's best response to the deployed models.
pub fn user_row(
    models: &[impl AsRef<Model>],
    dataset: &Dataset,
    spec: &LossSpec,
    cfg: &DynamicsConfig,
    at: Decision,
) -> Result<Vec<f64>, ModelError> {
    let x = &dataset.user(at.user).features;
    let utilities = models
        .iter()
        .map(|h| utility(h.as_ref(), x, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(best_response_at(
        &utilities,
        cfg.q,
        cfg.user_tie_policy,
        cfg.tie_tol,
        at,
    ))
}

/// Search box for [`oracle_best_response`]: every coordinate ranges over
/// `0, resolution, 2 * resolution, ..., bound`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub resolution: f64,
    pub bound: f64,
}

/// Grids larger than this are searched coarse-to-fine instead of in one
/// sweep; the objective is concave so the refinement keeps the maximiser.
const EXHAUSTIVE_LIMIT: usize = 2_000_000;
/// Points in the opening grid of a coarse-to-fine search.
const COARSE_POINTS: usize = 100_000;

/// Brute-force maximiser of the user objective over a grid. Does not use
/// the closed form; it exists to check it.
pub fn oracle_best_response(utilities: &[f64], q: f64, grid: GridSpec) -> Vec<f64> {
    let m = utilities.len();
    let ticks = (grid.bound / grid.resolution).floor() as usize + 1;
    let mut center = vec![0.0; m];
    let mut step = grid.resolution;
    let mut radius = ticks;
    if ticks
        .checked_pow(m as u32)
        .is_none_or(|size| size > EXHAUSTIVE_LIMIT)
    {
        // Start from a coarse grid over the whole box.
        let coarse = (COARSE_POINTS as f64).powf(1.0 / m as f64).floor().max(2.0) as usize;
        step = grid.bound / (coarse - 1) as f64;
        radius = coarse;
    }
    loop {
        center = grid_search(utilities, q, &center, step, radius, grid.bound);
        if step <= grid.resolution {
            return center;
        }
        step = (step / 8.0).max(grid.resolution);
        radius = 17;
    }
}

/// Best point of `{center + k * step}` with `|k| <= radius` per coordinate,
/// clipped to `[0, bound]` and always including zero.
fn grid_search(
    utilities: &[f64],
    q: f64,
    center: &[f64],
    step: f64,
    radius: usize,
    bound: f64,
) -> Vec<f64> {
    let m = utilities.len();
    let axes: Vec<Vec<f64>> = center
        .iter()
        .map(|&c| {
            let r = radius as i64;
            let mut axis: Vec<f64> = (-r..=r)
                .map(|k| c + k as f64 * step)
                .filter(|&v| (0.0..=bound + 1e-12).contains(&v))
                .collect();
            if !axis.contains(&0.0) {
                axis.push(0.0);
            }
            axis
        })
        .collect();
    let mut index = vec![0usize; m];
    let mut point: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let mut best = point.clone();
    let mut best_value = user_objective(&point, utilities, q);
    'outer: loop {
        let mut d = 0;
        loop {
            if d == m {
                break 'outer;
            }
            index[d] += 1;
            if index[d] < axes[d].len() {
                point[d] = axes[d][index[d]];
                break;
            }
            index[d] = 0;
            point[d] = axes[d][0];
            d += 1;
        }
        let value = user_objective(&point, utilities, q);
        if value > best_value {
            best_value = value;
            best.copy_from_slice(&point);
        }
    }
    best
}
