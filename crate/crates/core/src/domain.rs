//! Core value types shared by the rest of the crate: the user pool, the
//! usage and memory matrices, the simulation state and the dynamics
//! configuration.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::Model;
use crate::strategic::TiePolicy;

/// Binary outcome label. Stored as an integer so sign logic stays exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
#[repr(i8)]
pub enum Label {
    Positive = 1,
    Negative = -1,
}

impl Label {
    pub fn sign(self) -> f64 {
        self as i8 as f64
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl TryFrom<i8> for Label {
    type Error = DomainError;

    fn try_from(value: i8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(DomainError::InvalidLabel(other as i64)),
        }
    }
}

impl From<Label> for i8 {
    fn from(label: Label) -> i8 {
        label as i8
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", *self as i8)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("label must be +1 or -1, got {0}")]
    InvalidLabel(i64),
    #[error("dataset must contain at least one user")]
    EmptyDataset,
    #[error("user {index} has {found} features, expected {expected}")]
    FeatureDimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("user {index} has a non-finite feature")]
    NonFiniteFeature { index: usize },
    #[error("matrix shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid dynamics configuration: {0}")]
    InvalidConfig(String),
}

/// One user: a fixed feature vector and its true label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub features: Vec<f64>,
    pub label: Label,
}

impl UserRecord {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }
}

/// The fixed pool of users. Non-empty, all feature vectors share a dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    users: Vec<UserRecord>,
    dim: usize,
}

impl Dataset {
    pub fn new(users: Vec<UserRecord>) -> Result<Self, DomainError> {
        let dim = users
            .first()
            .ok_or(DomainError::EmptyDataset)?
            .features
            .len();
        for (index, user) in users.iter().enumerate() {
            if user.features.len() != dim {
                return Err(DomainError::FeatureDimension {
                    index,
                    expected: dim,
                    found: user.features.len(),
                });
            }
            if user.features.iter().any(|v| !v.is_finite()) {
                return Err(DomainError::NonFiniteFeature { index });
            }
        }
        Ok(Self { users, dim })
    }

    /// Convenience constructor from parallel feature/label slices with
    /// labels given as `+1`/`-1` integers.
    pub fn from_pairs(points: &[(Vec<f64>, i8)]) -> Result<Self, DomainError> {
        let users = points
            .iter()
            .map(|(x, y)| Ok(UserRecord::new(x.clone(), Label::try_from(*y)?)))
            .collect::<Result<Vec<_>, DomainError>>()?;
        Self::new(users)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn user(&self, i: usize) -> &UserRecord {
        &self.users[i]
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.users.iter().map(|u| u.label)
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.labels().filter(|&l| l == label).count()
    }

    /// Dataset restricted to the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, DomainError> {
        Self::new(indices.iter().map(|&i| self.users[i].clone()).collect())
    }
}

/// Dense column-major `rows x cols` matrix of reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from row-major nested rows. Panics if rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut out = Self::zeros(n, m);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), m, "ragged row {i}");
            for (j, &v) in row.iter().enumerate() {
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn set_row(&mut self, i: usize, row: &[f64]) {
        for (j, &v) in row.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let rows = self.rows;
        self.data
            .iter()
            .enumerate()
            .map(move |(k, &v)| (k % rows, k / rows, v))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn raw(&self) -> &[f64] {
        &self.data
    }
}

/// `A`: usage of service `j` by user `i`. Entries are expected to be
/// non-negative; [`validate_state`] reports violations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageMatrix(pub DenseMatrix);

/// `M`: discounted aggregate of past usage that each service trains on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryMatrix(pub DenseMatrix);

macro_rules! matrix_newtype {
    ($name:ident) => {
        impl $name {
            pub fn zeros(n: usize, m: usize) -> Self {
                Self(DenseMatrix::zeros(n, m))
            }

            pub fn from_rows(rows: &[Vec<f64>]) -> Self {
                Self(DenseMatrix::from_rows(rows))
            }

            pub fn get(&self, i: usize, j: usize) -> f64 {
                self.0.get(i, j)
            }

            pub fn shape(&self) -> (usize, usize) {
                self.0.shape()
            }

            pub fn n_users(&self) -> usize {
                self.0.rows()
            }

            pub fn n_services(&self) -> usize {
                self.0.cols()
            }

            pub fn column(&self, j: usize) -> &[f64] {
                self.0.column(j)
            }

            pub fn row(&self, i: usize) -> Vec<f64> {
                self.0.row(i)
            }

            pub fn to_rows(&self) -> Vec<Vec<f64>> {
                self.0.to_rows()
            }

            pub fn matrix(&self) -> &DenseMatrix {
                &self.0
            }

            /// Whether entry `(i, j)` is strictly positive.
            pub fn is_supported(&self, i: usize, j: usize) -> bool {
                self.0.get(i, j) > 0.0
            }
        }
    };
}

matrix_newtype!(UsageMatrix);
matrix_newtype!(MemoryMatrix);

impl UsageMatrix {
    /// Total usage of service `j` split by the label of the user.
    /// Returns `(positive, negative)`.
    pub fn totals_by_class(&self, dataset: &Dataset, j: usize) -> (f64, f64) {
        self.column(j)
            .iter()
            .zip(dataset.labels())
            .fold((0.0, 0.0), |(pos, neg), (&a, label)| match label {
                Label::Positive => (pos + a, neg),
                Label::Negative => (pos, neg + a),
            })
    }
}

/// Full dynamical state at one step: deployed models `H^t`, usage `A^t`,
/// memory `M^t` (which already folds in `A^t`) and the step index.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub models: Vec<Arc<Model>>,
    pub usage: UsageMatrix,
    pub memory: MemoryMatrix,
    pub step: usize,
}

impl SimState {
    pub fn n_services(&self) -> usize {
        self.models.len()
    }
}

/// Parameters of the user/service interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    /// Memory discount `p >= 0`; zero is memoryless retraining.
    pub p: f64,
    /// Usage cost power `q > 1`.
    pub q: f64,
    /// Numeric zero for losses and utilities.
    pub zero_tol: f64,
    /// Utilities within this distance of the maximum count as tied.
    pub tie_tol: f64,
    pub user_tie_policy: TiePolicy,
    /// Step budget. `None` means `4 * n * m`.
    pub max_steps: Option<usize>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            p: 0.0,
            q: 2.0,
            zero_tol: 1e-9,
            tie_tol: 1e-9,
            user_tie_policy: TiePolicy::EvenSplit,
            max_steps: None,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.q > 1.0) || !self.q.is_finite() {
            return Err(DomainError::InvalidConfig(format!(
                "q must exceed 1, got {}",
                self.q
            )));
        }
        if !(self.p >= 0.0) || !self.p.is_finite() {
            return Err(DomainError::InvalidConfig(format!(
                "p must be >= 0, got {}",
                self.p
            )));
        }
        if !(self.zero_tol > 0.0) || !(self.tie_tol > 0.0) {
            return Err(DomainError::InvalidConfig(
                "tolerances must be positive".into(),
            ));
        }
        if self.max_steps == Some(0) {
            return Err(DomainError::InvalidConfig(
                "max_steps must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn resolved_max_steps(&self, n: usize, m: usize) -> usize {
        self.max_steps.unwrap_or(4 * n * m).max(1)
    }
}

/// Which matrix a violation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    Usage,
    Memory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NonNegativityViolation {
        matrix: MatrixKind,
        i: usize,
        j: usize,
    },
    NonFiniteEntry {
        matrix: MatrixKind,
        i: usize,
        j: usize,
    },
    DimensionMismatch {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    ModelInputDimension {
        service: usize,
        expected: usize,
        found: usize,
    },
}

/// Checks every state invariant; returns one record per failure.
pub fn validate_state(state: &SimState, dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let expected = (dataset.len(), state.models.len());
    for (kind, matrix) in [
        (MatrixKind::Usage, &state.usage.0),
        (MatrixKind::Memory, &state.memory.0),
    ] {
        if matrix.shape() != expected {
            out.push(Violation::DimensionMismatch {
                what: format!("{kind:?}"),
                expected,
                found: matrix.shape(),
            });
        }
        for (i, j, v) in matrix.iter() {
            if !v.is_finite() {
                out.push(Violation::NonFiniteEntry { matrix: kind, i, j });
            } else if v < 0.0 {
                out.push(Violation::NonNegativityViolation { matrix: kind, i, j });
            }
        }
    }
    for (service, model) in state.models.iter().enumerate() {
        if let Some(dim) = model.input_dim() {
            if dim != dataset.dim() {
                out.push(Violation::ModelInputDimension {
                    service,
                    expected: dataset.dim(),
                    found: dim,
                });
            }
        }
    }
    out
}
