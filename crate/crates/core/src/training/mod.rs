//! Service retraining.
//!
//! Under realizability the minimum of the usage-weighted loss is zero, so
//! a service's update reduces to: keep the current model if it already has
//! zero loss on every user it remembers, otherwise deploy the
//! minimum-norm classifier that fits all of them with unit margin.

mod gram;
mod hull;
mod soft_margin;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Dataset, Label, UserRecord};
use crate::models::{
    FeatureMap, KernelModel, LossSpec, Model, ModelError, ModelFamily, SupportVector,
};
use gram::{AugmentedKernel, Gram};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Pairwise (SMO-style) updates on the dual weights.
    #[default]
    DualAscent,
    ProjectedGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub solver: Solver,
    pub max_iter: usize,
    pub kkt_tol: f64,
    pub margin_target: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            solver: Solver::DualAscent,
            max_iter: 2_000_000,
            kkt_tol: 1e-12,
            margin_target: 1.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("no classifier separates the {support} observed users with positive margin")]
    InfeasibleSupport { support: usize },
    #[error("solver stopped after {iterations} iterations with KKT gap {gap:e}")]
    SolverStalled { iterations: usize, gap: f64 },
    #[error("cannot fit a model to an empty point set")]
    EmptySupport,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Squared hull distance below this fraction of the largest squared
/// feature norm counts as "not separable".
const SEPARATION_FLOOR: f64 = 1e-12;

/// Minimum-norm model with `y_i f(x_i) >= margin_target` on every point.
pub fn min_norm_separator(
    points: &[&UserRecord],
    family: ModelFamily,
    cfg: &TrainerConfig,
) -> Result<Model, TrainError> {
    let first = points.first().ok_or(TrainError::EmptySupport)?;
    let dim = first.features.len();
    if let Some(bad) = points.iter().find(|p| p.features.len() != dim) {
        return Err(ModelError::DimensionMismatch {
            expected: dim,
            found: bad.features.len(),
        }
        .into());
    }
    let kernel = match AugmentedKernel::for_family(family) {
        Some(k) => k,
        None => return threshold_separator(points, cfg.margin_target),
    };

    let gram = Gram::new(
        points.iter().map(|p| p.features.as_slice()).collect(),
        points.iter().map(|p| p.label.sign()).collect(),
        kernel,
    );
    let hull =
        hull::nearest_point(&gram, cfg.solver, cfg.max_iter, cfg.kkt_tol).map_err(|e| match e {
            hull::HullFailure::Stalled { iterations, gap } => {
                TrainError::SolverStalled { iterations, gap }
            }
        })?;
    if hull.sq_norm <= SEPARATION_FLOOR * gram.max_diag().max(1.0) {
        return Err(TrainError::InfeasibleSupport {
            support: points.len(),
        });
    }

    // alpha = lambda / |w|^2 gives margins g_i / |w|^2; rescale so the
    // smallest margin is exactly the target.
    let min_margin = hull.grad.iter().copied().fold(f64::INFINITY, f64::min) / hull.sq_norm;
    if !(min_margin > 0.0) {
        return Err(TrainError::InfeasibleSupport {
            support: points.len(),
        });
    }
    let correction = if min_margin < 1.0 {
        1.0 / min_margin
    } else {
        1.0
    };
    let scale = cfg.margin_target * correction / hull.sq_norm;
    let alpha: Vec<f64> = hull.lambda.iter().map(|l| l * scale).collect();

    Ok(match family {
        ModelFamily::Linear { feature_map } => {
            let mut weights = vec![0.0; feature_map.output_dim(dim)];
            for (p, &a) in points.iter().zip(&alpha) {
                if a == 0.0 {
                    continue;
                }
                let coef = a * p.label.sign();
                for (w, x) in weights.iter_mut().zip(&p.features) {
                    *w += coef * x;
                }
                if feature_map == FeatureMap::AppendOne {
                    weights[dim] += coef;
                }
            }
            Model::linear(weights, feature_map)
        }
        ModelFamily::Rbf { gamma } => {
            let mut bias = 0.0;
            let mut support = Vec::new();
            for (p, &a) in points.iter().zip(&alpha) {
                if a > 0.0 {
                    bias += a * p.label.sign();
                    support.push(SupportVector {
                        features: p.features.clone(),
                        label: p.label,
                        alpha: a,
                    });
                }
            }
            Model::Kernel(KernelModel {
                support,
                bias,
                kernel: crate::models::Kernel::Rbf { gamma },
                input_dim: dim,
            })
        }
        ModelFamily::Threshold => unreachable!("handled above"),
    })
}

/// `sign(x + theta)`: positives need `theta >= margin - x`, negatives need
/// `theta <= -margin - x`; the smallest feasible `|theta|` is a clamp.
fn threshold_separator(points: &[&UserRecord], margin: f64) -> Result<Model, TrainError> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for p in points {
        let x = match p.features.as_slice() {
            [x] => *x,
            other => {
                return Err(ModelError::DimensionMismatch {
                    expected: 1,
                    found: other.len(),
                }
                .into())
            }
        };
        match p.label {
            Label::Positive => lo = lo.max(margin - x),
            Label::Negative => hi = hi.min(-margin - x),
        }
    }
    if lo > hi {
        return Err(TrainError::InfeasibleSupport {
            support: points.len(),
        });
    }
    Ok(Model::threshold(0.0f64.clamp(lo, hi)))
}

/// Indices with strictly positive weight.
pub fn support_of(weights: &[f64]) -> Vec<usize> {
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Whether `model` has loss at most `zero_tol` on every supported user.
pub fn fits_support(
    model: &Model,
    dataset: &Dataset,
    support: &[usize],
    spec: &LossSpec,
    zero_tol: f64,
) -> Result<bool, ModelError> {
    for &i in support {
        let user = dataset.user(i);
        if crate::models::loss(model, &user.features, user.label, spec)? > zero_tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One service update: keep `prev` if it already has zero loss on the
/// remembered users, otherwise refit the minimum-norm separator of them.
///
/// The returned `Arc` is the same allocation as `prev` when the model is
/// kept.
pub fn sticky_retrain(
    prev: &Arc<Model>,
    memory_col: &[f64],
    dataset: &Dataset,
    spec: &LossSpec,
    cfg: &TrainerConfig,
    zero_tol: f64,
) -> Result<Arc<Model>, TrainError> {
    if memory_col.len() != dataset.len() {
        return Err(ModelError::WeightLength {
            expected: dataset.len(),
            found: memory_col.len(),
        }
        .into());
    }
    let support = support_of(memory_col);
    if fits_support(prev, dataset, &support, spec, zero_tol)? {
        return Ok(Arc::clone(prev));
    }
    let points: Vec<&UserRecord> = support.iter().map(|&i| dataset.user(i)).collect();
    Ok(Arc::new(min_norm_separator(&points, prev.family(), cfg)?))
}

/// Where in the dynamics a retrain happens; lets randomized trainers keep
/// independent, replayable streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetrainSite {
    pub step: usize,
    pub service: usize,
}

/// A service update rule.
pub trait Retrainer: Sync {
    fn retrain(
        &self,
        prev: &Arc<Model>,
        memory_col: &[f64],
        dataset: &Dataset,
        spec: &LossSpec,
        zero_tol: f64,
        site: RetrainSite,
    ) -> Result<Arc<Model>, TrainError>;
}

/// The default update: sticky minimum-norm retraining.
#[derive(Clone, Debug, Default)]
pub struct StickyTrainer {
    pub cfg: TrainerConfig,
}

impl StickyTrainer {
    pub fn new(cfg: TrainerConfig) -> Self {
        Self { cfg }
    }
}

impl Retrainer for StickyTrainer {
    fn retrain(
        &self,
        prev: &Arc<Model>,
        memory_col: &[f64],
        dataset: &Dataset,
        spec: &LossSpec,
        zero_tol: f64,
        _site: RetrainSite,
    ) -> Result<Arc<Model>, TrainError> {
        sticky_retrain(prev, memory_col, dataset, spec, &self.cfg, zero_tol)
    }
}

/// A deliberately non-sticky update: every retrain draws a fresh random
/// zero-loss model around the minimum-norm solution, whether or not the
/// previous model was still optimal. Only linear and threshold families
/// are supported.
#[derive(Clone, Debug)]
pub struct ResamplingTrainer {
    pub cfg: TrainerConfig,
    pub seed: u64,
    /// Standard deviation of the Gaussian perturbation.
    pub spread: f64,
    pub max_draws: usize,
}

impl ResamplingTrainer {
    pub fn new(seed: u64) -> Self {
        Self {
            cfg: TrainerConfig::default(),
            seed,
            spread: 1.0,
            max_draws: 256,
        }
    }
}

impl Retrainer for ResamplingTrainer {
    fn retrain(
        &self,
        prev: &Arc<Model>,
        memory_col: &[f64],
        dataset: &Dataset,
        spec: &LossSpec,
        zero_tol: f64,
        site: RetrainSite,
    ) -> Result<Arc<Model>, TrainError> {
        let support = support_of(memory_col);
        let points: Vec<&UserRecord> = support.iter().map(|&i| dataset.user(i)).collect();
        let anchor = if points.is_empty() {
            (*prev.as_ref()).clone()
        } else {
            min_norm_separator(&points, prev.family(), &self.cfg)?
        };
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
            self.seed,
            site.step as u64,
            site.service as u64,
        ));
        for _ in 0..self.max_draws {
            let candidate = perturb(&anchor, self.spread, &mut rng);
            if fits_support(&candidate, dataset, &support, spec, zero_tol)? {
                return Ok(Arc::new(candidate));
            }
        }
        Ok(Arc::new(anchor))
    }
}

fn perturb(model: &Model, spread: f64, rng: &mut impl Rng) -> Model {
    let mut noise = || -> f64 { spread * rng.sample::<f64, _>(StandardNormal) };
    match model {
        Model::Linear(m) => Model::linear(
            m.weights.iter().map(|w| w + noise()).collect(),
            m.feature_map,
        ),
        Model::Threshold(m) => Model::threshold(m.offset + noise()),
        Model::Kernel(m) => {
            let mut m = m.clone();
            m.bias += noise();
            Model::Kernel(m)
        }
    }
}

/// Mixes a base seed with two indices into an independent stream seed.
pub(crate) fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [a, b] {
        x = x.wrapping_add(v.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

/// Positions a soft-margin fit with penalty `c` gets wrong
/// (`y f(x) <= 0`), together with every point's margin `y f(x)`.
pub(crate) fn soft_margin_misclassified(
    points: &[&UserRecord],
    family: ModelFamily,
    c: f64,
) -> (Vec<usize>, Vec<f64>) {
    let margins = match AugmentedKernel::for_family(family) {
        Some(kernel) => {
            soft_margin::fit(
                points.iter().map(|p| p.features.as_slice()).collect(),
                points.iter().map(|p| p.label.sign()).collect(),
                kernel,
                c,
                5_000,
                1e-9,
            )
            .margins
        }
        None => threshold_soft_margins(points, c),
    };
    let wrong = margins
        .iter()
        .enumerate()
        .filter(|(_, &m)| m <= 0.0)
        .map(|(i, _)| i)
        .collect();
    (wrong, margins)
}

/// Threshold models have one parameter and the soft-margin objective
/// `theta^2 / 2 + c * sum hinge` is convex and piecewise quadratic in it:
/// minimise on every piece between hinge breakpoints and keep the best.
fn threshold_soft_margins(points: &[&UserRecord], c: f64) -> Vec<f64> {
    let xs: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.features[0], p.label.sign()))
        .collect();
    let objective = |t: f64| {
        0.5 * t * t
            + c * xs
                .iter()
                .map(|&(x, y)| (1.0 - y * (x + t)).max(0.0))
                .sum::<f64>()
    };
    let mut breaks: Vec<f64> = xs.iter().map(|&(x, y)| y - x).collect();
    breaks.sort_by(f64::total_cmp);
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(breaks);
    edges.push(f64::INFINITY);
    let mut best = (f64::INFINITY, 0.0);
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let probe = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        };
        // Derivative on this piece: t - c * (sum of y over active hinges).
        let pull: f64 = xs
            .iter()
            .filter(|&&(x, y)| 1.0 - y * (x + probe) > 0.0)
            .map(|&(_, y)| y)
            .sum();
        let t = (c * pull).clamp(lo, hi);
        let value = objective(t);
        if value < best.0 {
            best = (value, t);
        }
    }
    xs.iter().map(|&(x, y)| y * (x + best.1)).collect()
}
