//! Classifier families, the utility users derive from them and the loss
//! services train against.
//!
//! Every model exposes a real-valued decision function `f`; the predicted
//! label is `+1` iff `f(x) > 0`, so a point exactly on the boundary is a
//! negative prediction with zero linear utility.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Dataset, Label};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model expects {expected} input features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weight column has length {found}, dataset has {expected} users")]
    WeightLength { expected: usize, found: usize },
}

/// Fixed transform applied to raw features before a linear model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    Identity,
    /// `[x, 1]`: the last weight acts as an intercept and is part of the norm.
    #[default]
    AppendOne,
}

impl FeatureMap {
    pub fn output_dim(self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim,
            FeatureMap::AppendOne => input_dim + 1,
        }
    }

    pub fn input_dim(self, output_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => output_dim,
            FeatureMap::AppendOne => output_dim.saturating_sub(1),
        }
    }

    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        if self == FeatureMap::AppendOne {
            out.push(1.0);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * sq).exp()
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `f(x) = theta . phi(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub feature_map: FeatureMap,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, feature_map: FeatureMap) -> Self {
        Self {
            weights,
            feature_map,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.feature_map.input_dim(self.weights.len())
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64, ModelError> {
        let expected = self.input_dim();
        if x.len() != expected {
            return Err(ModelError::DimensionMismatch {
                expected,
                found: x.len(),
            });
        }
        let mut f = dot(&self.weights[..x.len()], x);
        if self.feature_map == FeatureMap::AppendOne {
            f += self.weights[x.len()];
        }
        Ok(f)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.weights, &self.weights).sqrt()
    }
}

/// One-dimensional threshold rule `sign(x + offset)`, with linear utility
/// capped at 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub offset: f64,
}

impl ThresholdModel {
    pub const UTILITY_CAP: f64 = 1.0;

    pub fn decision(&self, x: &[f64]) -> Result<f64, ModelError> {
        match x {
            [v] => Ok(v + self.offset),
            _ => Err(ModelError::DimensionMismatch {
                expected: 1,
                found: x.len(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportVector {
    pub features: Vec<f64>,
    pub label: Label,
    pub alpha: f64,
}

/// `f(x) = sum_i alpha_i y_i K(x_i, x) + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub support: Vec<SupportVector>,
    pub bias: f64,
    pub kernel: Kernel,
    pub input_dim: usize,
}

impl KernelModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(self
            .support
            .iter()
            .map(|sv| sv.alpha * sv.label.sign() * self.kernel.eval(&sv.features, x))
            .sum::<f64>()
            + self.bias)
    }

    /// RKHS norm with the intercept treated as one more feature
    /// (the same norm the trainer minimises).
    pub fn norm(&self) -> f64 {
        let mut sq = self.bias * self.bias;
        for a in &self.support {
            for b in &self.support {
                sq += a.alpha
                    * b.alpha
                    * a.label.sign()
                    * b.label.sign()
                    * self.kernel.eval(&a.features, &b.features);
            }
        }
        sq.max(0.0).sqrt()
    }
}

/// A deployed classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Threshold(ThresholdModel),
    Kernel(KernelModel),
}

impl AsRef<Model> for Model {
    fn as_ref(&self) -> &Model {
        self
    }
}

/// What a trainer should produce.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    Linear { feature_map: FeatureMap },
    Threshold,
    Rbf { gamma: f64 },
}

impl Model {
    pub fn linear(weights: Vec<f64>, feature_map: FeatureMap) -> Self {
        Model::Linear(LinearModel::new(weights, feature_map))
    }

    pub fn threshold(offset: f64) -> Self {
        Model::Threshold(ThresholdModel { offset })
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64, ModelError> {
        match self {
            Model::Linear(m) => m.decision(x),
            Model::Threshold(m) => m.decision(x),
            Model::Kernel(m) => m.decision(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label, ModelError> {
        Ok(if self.decision(x)? > 0.0 {
            Label::Positive
        } else {
            Label::Negative
        })
    }

    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Model::Linear(m) => Some(m.input_dim()),
            Model::Threshold(_) => Some(1),
            Model::Kernel(m) => Some(m.input_dim),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            Model::Linear(m) => m.norm(),
            Model::Threshold(m) => m.offset.abs(),
            Model::Kernel(m) => m.norm(),
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            Model::Linear(m) => ModelFamily::Linear {
                feature_map: m.feature_map,
            },
            Model::Threshold(_) => ModelFamily::Threshold,
            Model::Kernel(m) => match m.kernel {
                Kernel::Rbf { gamma } => ModelFamily::Rbf { gamma },
                // A linear-kernel machine with an intercept is an affine model.
                Kernel::Linear => ModelFamily::Linear {
                    feature_map: FeatureMap::AppendOne,
                },
            },
        }
    }

    pub fn family_tag(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::Threshold(_) => "threshold",
            Model::Kernel(_) => "kernel",
        }
    }

    /// Linear utility derived from a decision value.
    fn linear_utility(&self, f: f64) -> f64 {
        match self {
            Model::Threshold(_) => f.min(ThresholdModel::UTILITY_CAP),
            _ => f,
        }
    }

    /// Parameter-wise equality within `tol`.
    pub fn approx_eq(&self, other: &Model, tol: f64) -> bool {
        let close = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
        };
        match (self, other) {
            (Model::Linear(a), Model::Linear(b)) => {
                a.feature_map == b.feature_map && close(&a.weights, &b.weights)
            }
            (Model::Threshold(a), Model::Threshold(b)) => (a.offset - b.offset).abs() <= tol,
            (Model::Kernel(a), Model::Kernel(b)) => {
                a.kernel == b.kernel
                    && (a.bias - b.bias).abs() <= tol
                    && a.support.len() == b.support.len()
                    && a.support.iter().zip(&b.support).all(|(s, t)| {
                        s.label == t.label
                            && (s.alpha - t.alpha).abs() <= tol
                            && close(&s.features, &t.features)
                    })
            }
            _ => false,
        }
    }

    /// Compact description used in trajectory records.
    pub fn summary(&self) -> ModelSummary {
        match self {
            Model::Linear(m) => ModelSummary {
                family: "linear",
                params: m.weights.clone(),
                n_support: None,
                norm: m.norm(),
            },
            Model::Threshold(m) => ModelSummary {
                family: "threshold",
                params: vec![m.offset],
                n_support: None,
                norm: m.offset.abs(),
            },
            Model::Kernel(m) => ModelSummary {
                family: "kernel",
                params: vec![m.bias],
                n_support: Some(m.support.len()),
                norm: m.norm(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSummary {
    pub family: &'static str,
    /// Weights for linear models, the offset for thresholds, the bias for
    /// kernel machines.
    pub params: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_support: Option<usize>,
    pub norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Hinge,
    /// Misclassification indicator `1{y * h(x) = -1}`.
    ZeroOne,
    /// `1{f(x) * y > 0}`, i.e. the indicator of a *correct* strict
    /// classification. Kept only for comparison; it is not a sensible
    /// training loss.
    ZeroOneLiteral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    /// `f(x)` (capped at 1 for threshold models).
    #[default]
    Linear,
    /// `1{f(x) > 0}`.
    ZeroOne,
}

/// Loss/utility pairing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LossSpec {
    pub loss: LossKind,
    pub utility: UtilityKind,
}

impl LossSpec {
    pub const HINGE_LINEAR: LossSpec = LossSpec {
        loss: LossKind::Hinge,
        utility: UtilityKind::Linear,
    };
    pub const ZERO_ONE: LossSpec = LossSpec {
        loss: LossKind::ZeroOne,
        utility: UtilityKind::ZeroOne,
    };

    /// Loss value at zero utility. Both supported pairings use 1.
    pub fn v(&self) -> f64 {
        1.0
    }

    pub fn utility_from_decision(&self, model: &Model, f: f64) -> f64 {
        match self.utility {
            UtilityKind::Linear => model.linear_utility(f),
            UtilityKind::ZeroOne => {
                if f > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn loss_from_decision(&self, f: f64, y: Label) -> f64 {
        let y = y.sign();
        match self.loss {
            LossKind::Hinge => (1.0 - y * f).max(0.0),
            LossKind::ZeroOne => {
                let predicted = if f > 0.0 { 1.0 } else { -1.0 };
                if predicted == y {
                    0.0
                } else {
                    1.0
                }
            }
            LossKind::ZeroOneLiteral => {
                if f * y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn utility(model: &Model, x: &[f64], spec: &LossSpec) -> Result<f64, ModelError> {
    Ok(spec.utility_from_decision(model, model.decision(x)?))
}

pub fn loss(model: &Model, x: &[f64], y: Label, spec: &LossSpec) -> Result<f64, ModelError> {
    Ok(spec.loss_from_decision(model.decision(x)?, y))
}

/// Usage-weighted average loss; zero when all weights vanish.
pub fn weighted_expected_loss(
    model: &Model,
    dataset: &Dataset,
    weights: &[f64],
    spec: &LossSpec,
) -> Result<f64, ModelError> {
    if weights.len() != dataset.len() {
        return Err(ModelError::WeightLength {
            expected: dataset.len(),
            found: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (user, &w) in dataset.users().iter().zip(weights) {
        if w > 0.0 {
            acc += w / total * loss(model, &user.features, user.label, spec)?;
        }
    }
    Ok(acc)
}
