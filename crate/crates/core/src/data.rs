//! Loading user pools from CSV, preprocessing them into a realizable
//! instance, and the built-in synthetic scenarios.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Dataset, DomainError, DynamicsConfig, Label, MemoryMatrix, UserRecord};
use crate::models::{FeatureMap, Model, ModelFamily};
use crate::strategic::TiePolicy;
use crate::training::{
    min_norm_separator, soft_margin_misclassified, support_of, TrainError, TrainerConfig,
};

/// Environment variable naming the directory that holds external data
/// files.
pub const DATA_DIR_ENV: &str = "STRATEGIC_USAGE_DATA_DIR";
/// File name of the UCI banknote authentication data.
pub const BANKNOTE_FILE: &str = "data_banknote_authentication.txt";

pub fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("row {row}, column {column}: {reason}")]
    Parse {
        row: u64,
        column: String,
        reason: String,
    },
    #[error("row {row}: label {value:?} is not in the label map")]
    UnknownLabel { row: u64, value: String },
    #[error("dataset has no {0} users")]
    MissingClass(Label),
    #[error("asked for {requested} users labelled {label}, only {available} available")]
    Subsample {
        label: Label,
        requested: usize,
        available: usize,
    },
    #[error("{remaining} users are still not separable after {passes} filter passes")]
    FilterFailed { passes: usize, remaining: usize },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Feature,
    /// Expanded into one indicator per distinct value, in sorted order.
    Categorical,
    Label,
    Ignore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
}

/// How to read a CSV file. With a header row, columns are matched by
/// name and every header must be listed; without one, the listed columns
/// are taken in file order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Raw label text to `+1`/`-1`. When empty, the text must itself be
    /// `1`, `+1` or `-1`.
    #[serde(default)]
    pub label_map: BTreeMap<String, Label>,
    #[serde(default)]
    pub max_rows: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl CsvSchema {
    /// The UCI banknote file: four numeric features and a class column,
    /// no header; class 0 (genuine) is positive.
    pub fn banknote() -> Self {
        let col = |name: &str, role| ColumnSpec {
            name: name.into(),
            role,
        };
        Self {
            columns: vec![
                col("variance", ColumnRole::Feature),
                col("skewness", ColumnRole::Feature),
                col("curtosis", ColumnRole::Feature),
                col("entropy", ColumnRole::Feature),
                col("class", ColumnRole::Label),
            ],
            has_header: false,
            label_map: BTreeMap::from([
                ("0".into(), Label::Positive),
                ("1".into(), Label::Negative),
            ]),
            max_rows: None,
        }
    }

    fn label(&self, raw: &str, row: u64) -> Result<Label, DataError> {
        if self.label_map.is_empty() {
            return match raw {
                "1" | "+1" => Ok(Label::Positive),
                "-1" => Ok(Label::Negative),
                _ => Err(DataError::UnknownLabel {
                    row,
                    value: raw.into(),
                }),
            };
        }
        self.label_map
            .get(raw)
            .copied()
            .ok_or_else(|| DataError::UnknownLabel {
                row,
                value: raw.into(),
            })
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let io = |e: &dyn std::fmt::Display| DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io(&e))?;

    // Role of each file column, in file order.
    let layout: Vec<&ColumnSpec> = if schema.has_header {
        let headers = reader.headers().map_err(|e| io(&e))?.clone();
        headers
            .iter()
            .map(|h| {
                schema
                    .columns
                    .iter()
                    .find(|c| c.name == h)
                    .ok_or_else(|| DataError::Parse {
                        row: 1,
                        column: h.into(),
                        reason: "column is not named in the schema".into(),
                    })
            })
            .collect::<Result<_, _>>()?
    } else {
        schema.columns.iter().collect()
    };
    let label_columns = layout
        .iter()
        .filter(|c| c.role == ColumnRole::Label)
        .count();
    if label_columns != 1 {
        return Err(DataError::Parse {
            row: 0,
            column: "<schema>".into(),
            reason: format!("schema needs exactly one label column, has {label_columns}"),
        });
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        if schema.max_rows.is_some_and(|k| rows.len() >= k) {
            break;
        }
        let record = record.map_err(|e| DataError::Parse {
            row: e.position().map_or(0, |p| p.line()),
            column: "<row>".into(),
            reason: e.to_string(),
        })?;
        let row = record
            .position()
            .map_or(rows.len() as u64 + 1, |p| p.line());
        if record.len() != layout.len() {
            return Err(DataError::Parse {
                row,
                column: "<row>".into(),
                reason: format!("expected {} fields, found {}", layout.len(), record.len()),
            });
        }
        rows.push((row, record));
    }
    if rows.is_empty() {
        return Err(DataError::Parse {
            row: 0,
            column: "<file>".into(),
            reason: "no data rows".into(),
        });
    }

    let categories: Vec<Vec<String>> = layout
        .iter()
        .enumerate()
        .map(|(k, c)| match c.role {
            ColumnRole::Categorical => rows
                .iter()
                .map(|(_, r)| r[k].to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            _ => Vec::new(),
        })
        .collect();

    let mut users = Vec::with_capacity(rows.len());
    for (row, record) in &rows {
        let mut features = Vec::new();
        let mut label = None;
        for (k, column) in layout.iter().enumerate() {
            let raw = &record[k];
            match column.role {
                ColumnRole::Feature => {
                    let v: f64 = raw.parse().map_err(|_| DataError::Parse {
                        row: *row,
                        column: column.name.clone(),
                        reason: format!("{raw:?} is not a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(DataError::Parse {
                            row: *row,
                            column: column.name.clone(),
                            reason: "value is not finite".into(),
                        });
                    }
                    features.push(v);
                }
                ColumnRole::Categorical => {
                    features.extend(
                        categories[k]
                            .iter()
                            .map(|c| if c == raw { 1.0 } else { 0.0 }),
                    );
                }
                ColumnRole::Label => label = Some(schema.label(raw, *row)?),
                ColumnRole::Ignore => {}
            }
        }
        users.push(UserRecord::new(features, label.expect("one label column")));
    }
    Ok(Dataset::new(users)?)
}

/// Centres every feature and scales it to unit (population) variance;
/// constant features become zero.
pub fn normalize(dataset: &Dataset) -> Dataset {
    let n = dataset.len() as f64;
    let d = dataset.dim();
    let mut mean = vec![0.0; d];
    for u in dataset.users() {
        mean.iter_mut()
            .zip(&u.features)
            .for_each(|(m, x)| *m += x / n);
    }
    let mut var = vec![0.0; d];
    for u in dataset.users() {
        var.iter_mut()
            .zip(&u.features)
            .zip(&mean)
            .for_each(|((v, x), m)| *v += (x - m) * (x - m) / n);
    }
    let users = dataset
        .users()
        .iter()
        .map(|u| {
            let features = (0..d)
                .map(|k| {
                    let sd = var[k].sqrt();
                    if sd > 1e-12 * (1.0 + mean[k].abs()) {
                        (u.features[k] - mean[k]) / sd
                    } else {
                        0.0
                    }
                })
                .collect();
            UserRecord::new(features, u.label)
        })
        .collect();
    Dataset::new(users).expect("same shape as a valid dataset")
}

/// Maximum number of fit-and-remove passes before giving up.
pub const FILTER_PASSES: usize = 3;

/// Drops users until a hard-margin classifier of `family` fits the rest.
///
/// Each pass fits a soft-margin classifier with penalty `c` and removes
/// every user it gets wrong (`y f(x) <= 0`). When that set is empty or
/// would remove everyone (a symmetric tie), only the worst user goes.
/// Returns the remaining dataset and the removed positions.
pub fn realizability_filter(
    dataset: &Dataset,
    c: f64,
    family: ModelFamily,
) -> Result<(Dataset, Vec<usize>), DataError> {
    let cfg = TrainerConfig::default();
    let mut kept: Vec<usize> = (0..dataset.len()).collect();
    for pass in 0..=FILTER_PASSES {
        let points: Vec<&UserRecord> = kept.iter().map(|&i| dataset.user(i)).collect();
        match min_norm_separator(&points, family, &cfg) {
            Ok(_) => {
                let removed = (0..dataset.len())
                    .filter(|i| kept.binary_search(i).is_err())
                    .collect();
                return Ok((dataset.select(&kept)?, removed));
            }
            Err(TrainError::InfeasibleSupport { .. }) if pass < FILTER_PASSES => {}
            Err(TrainError::InfeasibleSupport { .. }) => break,
            Err(e) => return Err(e.into()),
        }
        let (wrong, margins) = soft_margin_misclassified(&points, family, c);
        let drop: Vec<usize> = if wrong.is_empty() || wrong.len() == points.len() {
            let worst = (0..points.len())
                .min_by(|&a, &b| margins[a].total_cmp(&margins[b]))
                .expect("non-empty");
            vec![worst]
        } else {
            wrong
        };
        kept = kept
            .iter()
            .enumerate()
            .filter(|(k, _)| !drop.contains(k))
            .map(|(_, &i)| i)
            .collect();
        if kept.is_empty() {
            break;
        }
    }
    Err(DataError::FilterFailed {
        passes: FILTER_PASSES,
        remaining: kept.len(),
    })
}

/// The first `per_class` users of each label, in original order. Returns
/// the subset and the kept positions.
pub fn subsample(dataset: &Dataset, per_class: usize) -> Result<(Dataset, Vec<usize>), DataError> {
    for label in [Label::Positive, Label::Negative] {
        let available = dataset.count_label(label);
        if available < per_class {
            return Err(DataError::Subsample {
                label,
                requested: per_class,
                available,
            });
        }
    }
    let mut taken = [0usize; 2];
    let kept: Vec<usize> = (0..dataset.len())
        .filter(|&i| {
            let slot = &mut taken[usize::from(!dataset.user(i).label.is_positive())];
            *slot += 1;
            *slot <= per_class
        })
        .collect();
    Ok((dataset.select(&kept)?, kept))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Soft-margin penalty.
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    1.0
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { c: default_c() }
    }
}

/// Preprocessing applied after loading, in field order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSpec {
    pub normalize: bool,
    pub realizability_filter: Option<FilterSpec>,
    /// Keep the first this-many users of each class.
    pub subsample_per_class: Option<usize>,
}

/// Why a row left the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Misclassified,
    Subsampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RemovedRow {
    /// Position in the loaded dataset.
    pub row: usize,
    pub reason: RemovalReason,
}

#[derive(Clone, Debug)]
pub struct Preprocessed {
    pub dataset: Dataset,
    /// Position in the loaded dataset of each remaining user.
    pub kept: Vec<usize>,
    pub removed: Vec<RemovedRow>,
}

pub fn preprocess(
    dataset: &Dataset,
    spec: &PreprocessSpec,
    family: ModelFamily,
) -> Result<Preprocessed, DataError> {
    let mut current = if spec.normalize {
        normalize(dataset)
    } else {
        dataset.clone()
    };
    let mut kept: Vec<usize> = (0..dataset.len()).collect();
    let mut removed = Vec::new();
    if let Some(filter) = spec.realizability_filter {
        let (filtered, gone) = realizability_filter(&current, filter.c, family)?;
        removed.extend(gone.iter().map(|&k| RemovedRow {
            row: kept[k],
            reason: RemovalReason::Misclassified,
        }));
        kept = kept
            .iter()
            .enumerate()
            .filter(|(k, _)| gone.binary_search(k).is_err())
            .map(|(_, &i)| i)
            .collect();
        current = filtered;
    }
    if let Some(per_class) = spec.subsample_per_class {
        let (sub, positions) = subsample(&current, per_class)?;
        removed.extend(
            (0..current.len())
                .filter(|k| positions.binary_search(k).is_err())
                .map(|k| RemovedRow {
                    row: kept[k],
                    reason: RemovalReason::Subsampled,
                }),
        );
        kept = positions.iter().map(|&k| kept[k]).collect();
        current = sub;
    }
    removed.sort_by_key(|r| r.row);
    Ok(Preprocessed {
        dataset: current,
        kept,
        removed,
    })
}

/// Prior memory in which each service has seen one random positive and
/// one random negative user.
pub fn reveal_seed_users(
    dataset: &Dataset,
    m: usize,
    seed: u64,
) -> Result<MemoryMatrix, DataError> {
    let by_label = |label| {
        (0..dataset.len())
            .filter(|&i| dataset.user(i).label == label)
            .collect::<Vec<_>>()
    };
    let (positives, negatives) = (by_label(Label::Positive), by_label(Label::Negative));
    if positives.is_empty() {
        return Err(DataError::MissingClass(Label::Positive));
    }
    if negatives.is_empty() {
        return Err(DataError::MissingClass(Label::Negative));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prior = MemoryMatrix::zeros(dataset.len(), m);
    for j in 0..m {
        for pool in [&positives, &negatives] {
            let &i = pool.choose(&mut rng).expect("non-empty");
            prior.0.set(i, j, 1.0);
        }
    }
    Ok(prior)
}

/// One model per prior column: the minimum-norm separator of the users
/// that column has seen.
pub fn models_from_prior(
    dataset: &Dataset,
    prior: &MemoryMatrix,
    family: ModelFamily,
    cfg: &TrainerConfig,
) -> Result<Vec<Arc<Model>>, TrainError> {
    (0..prior.n_services())
        .map(|j| {
            let points: Vec<&UserRecord> = support_of(prior.column(j))
                .iter()
                .map(|&i| dataset.user(i))
                .collect();
            min_norm_separator(&points, family, cfg).map(Arc::new)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BuiltinScenario {
    /// Five points in the plane, two affine classifiers; oscillates
    /// without memory.
    FivePoint,
    /// `n` positive users spaced 0.7 apart on the non-positive half-line
    /// and one threshold service.
    ThresholdLine { n: usize },
    /// One negative user at zero and `m` threshold services at offsets
    /// `2, 3, ..., m + 1`.
    ThresholdServices { m: usize },
}

impl BuiltinScenario {
    pub const NAMES: [&'static str; 3] =
        ["five_point", "threshold_line:<n>", "threshold_services:<m>"];

    /// Parses `five_point`, `threshold_line:<n>` or `threshold_services:<m>`.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let unknown = || DataError::UnknownScenario(text.into());
        let (name, arg) = match text.split_once(':') {
            Some((name, arg)) => (name, Some(arg.parse::<usize>().map_err(|_| unknown())?)),
            None => (text, None),
        };
        match (name, arg) {
            ("five_point", None) => Ok(Self::FivePoint),
            ("threshold_line", Some(n)) if n >= 1 => Ok(Self::ThresholdLine { n }),
            ("threshold_services", Some(m)) if m >= 1 => Ok(Self::ThresholdServices { m }),
            _ => Err(unknown()),
        }
    }

    pub fn build(self) -> Scenario {
        match self {
            BuiltinScenario::FivePoint => Scenario {
                dataset: Dataset::from_pairs(&[
                    (vec![1.0, 1.0], 1),
                    (vec![1.0, 1.0], 1),
                    (vec![-1.0, 1.0], -1),
                    (vec![1.0, -1.0], -1),
                    (vec![-1.0, -1.0], -1),
                ])
                .expect("valid"),
                models: vec![
                    Arc::new(Model::linear(vec![1.0, 0.0, 0.0], FeatureMap::AppendOne)),
                    Arc::new(Model::linear(vec![0.0, 1.0, 0.0], FeatureMap::AppendOne)),
                ],
                dynamics: DynamicsConfig::default(),
            },
            BuiltinScenario::ThresholdLine { n } => Scenario {
                dataset: Dataset::new(
                    (0..n)
                        .map(|i| UserRecord::new(vec![-0.7 * i as f64], Label::Positive))
                        .collect(),
                )
                .expect("n >= 1"),
                models: vec![Arc::new(Model::threshold(0.5))],
                dynamics: DynamicsConfig {
                    p: 0.5,
                    ..Default::default()
                },
            },
            BuiltinScenario::ThresholdServices { m } => Scenario {
                dataset: Dataset::new(vec![UserRecord::new(vec![0.0], Label::Negative)])
                    .expect("one user"),
                // Services are numbered from one, the offsets are `j + 1`.
                models: (1..=m)
                    .map(|j| Arc::new(Model::threshold((j + 1) as f64)))
                    .collect(),
                // Every service offers the capped utility 1, so the user
                // must pick one of them each step.
                dynamics: DynamicsConfig {
                    p: 0.5,
                    user_tie_policy: TiePolicy::LowestIndex,
                    ..Default::default()
                },
            },
        }
    }
}

/// A ready-to-run instance.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub dataset: Dataset,
    pub models: Vec<Arc<Model>>,
    pub dynamics: DynamicsConfig,
}

pub fn builtin_scenario(which: BuiltinScenario) -> Scenario {
    which.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema(cols: &[(&str, ColumnRole)]) -> CsvSchema {
        CsvSchema {
            columns: cols
                .iter()
                .map(|(n, r)| ColumnSpec {
                    name: n.to_string(),
                    role: *r,
                })
                .collect(),
            has_header: true,
            label_map: BTreeMap::new(),
            max_rows: None,
        }
    }

    #[test]
    fn one_hot_width_and_values() {
        let f = write_temp("income,payment,age,id,fraud\n1.5,AB,30,7,1\n2.0,CD,40,8,-1\n0.5,AB,50,9,-1\n3.0,EE,20,1,1\n");
        let s = schema(&[
            ("income", ColumnRole::Feature),
            ("payment", ColumnRole::Categorical),
            ("age", ColumnRole::Feature),
            ("id", ColumnRole::Ignore),
            ("fraud", ColumnRole::Label),
        ]);
        let d = load_csv(f.path(), &s).unwrap();
        // Two numeric columns plus three payment categories.
        assert_eq!(d.dim(), 5);
        assert_eq!(d.user(1).features, vec![2.0, 0.0, 1.0, 0.0, 40.0]);
        assert_eq!(d.user(1).label, Label::Negative);
    }

    #[test]
    fn banknote_layout_without_header() {
        let f = write_temp("3.6216,8.6661,-2.8073,-0.44699,0\n-1.3971,3.3191,-1.3927,-1.9948,1\n");
        let d = load_csv(f.path(), &CsvSchema::banknote()).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 4));
        assert_eq!(
            d.labels().collect::<Vec<_>>(),
            vec![Label::Positive, Label::Negative]
        );
    }

    #[test]
    fn csv_errors() {
        let s = schema(&[("x", ColumnRole::Feature), ("y", ColumnRole::Label)]);
        let empty = write_temp("");
        assert!(matches!(
            load_csv(empty.path(), &s),
            Err(DataError::Parse { .. })
        ));
        let header_only = write_temp("x,y\n");
        assert!(matches!(
            load_csv(header_only.path(), &s),
            Err(DataError::Parse { .. })
        ));
        let bad_number = write_temp("x,y\n1.0,1\nabc,-1\n");
        let err = load_csv(bad_number.path(), &s).unwrap_err();
        assert!(
            matches!(err, DataError::Parse { row: 3, ref column, .. } if column == "x"),
            "{err:?}"
        );
        let bad_label = write_temp("x,y\n1.0,2\n");
        assert!(matches!(
            load_csv(bad_label.path(), &s),
            Err(DataError::UnknownLabel { .. })
        ));
        let extra = write_temp("x,z,y\n1,2,1\n");
        assert!(matches!(
            load_csv(extra.path(), &s),
            Err(DataError::Parse { .. })
        ));
        let missing = Path::new("/definitely/not/here.csv");
        let err = load_csv(missing, &s).unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.csv"));
    }

    #[test]
    fn max_rows_truncates() {
        let f = write_temp("x,y\n1,1\n2,-1\n3,1\n");
        let mut s = schema(&[("x", ColumnRole::Feature), ("y", ColumnRole::Label)]);
        s.max_rows = Some(2);
        assert_eq!(load_csv(f.path(), &s).unwrap().len(), 2);
    }

    #[test]
    fn normalization_moments() {
        let d = Dataset::from_pairs(&[
            (vec![1.0, 5.0], 1),
            (vec![2.0, 5.0], -1),
            (vec![6.0, 5.0], 1),
        ])
        .unwrap();
        let z = normalize(&d);
        for k in 0..2 {
            let col: Vec<f64> = z.users().iter().map(|u| u.features[k]).collect();
            let mean = col.iter().sum::<f64>() / 3.0;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            if k == 0 {
                assert!((var - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(col, vec![0.0; 3]);
            }
        }
    }

    #[test]
    fn subsample_takes_the_first_of_each_class() {
        let d = Dataset::from_pairs(&[
            (vec![0.0], -1),
            (vec![1.0], 1),
            (vec![2.0], -1),
            (vec![3.0], 1),
            (vec![4.0], 1),
        ])
        .unwrap();
        let (s, kept) = subsample(&d, 2).unwrap();
        assert_eq!(kept, vec![0, 1, 2, 3]);
        assert_eq!(s.len(), 4);
        assert!(matches!(
            subsample(&d, 3),
            Err(DataError::Subsample {
                label: Label::Negative,
                ..
            })
        ));
    }

    #[test]
    fn seed_users_are_replayable() {
        let d = builtin_scenario(BuiltinScenario::FivePoint).dataset;
        let a = reveal_seed_users(&d, 3, 100).unwrap();
        assert_eq!(a, reveal_seed_users(&d, 3, 100).unwrap());
        for j in 0..3 {
            let col = a.column(j);
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 2);
            assert_eq!(col[0] + col[1], 1.0);
        }
        let positives = Dataset::from_pairs(&[(vec![0.0], 1)]).unwrap();
        assert_eq!(
            reveal_seed_users(&positives, 1, 1),
            Err(DataError::MissingClass(Label::Negative))
        );
    }

    #[test]
    fn builtin_scenarios() {
        let five = builtin_scenario(BuiltinScenario::FivePoint);
        assert_eq!((five.dataset.len(), five.models.len()), (5, 2));
        let line = builtin_scenario(BuiltinScenario::ThresholdLine { n: 1 });
        assert_eq!(line.dataset.user(0).features, vec![0.0]);
        assert_eq!(*line.models[0], Model::threshold(0.5));
        let services = builtin_scenario(BuiltinScenario::ThresholdServices { m: 2 });
        assert_eq!(*services.models[0], Model::threshold(2.0));
        assert_eq!(*services.models[1], Model::threshold(3.0));
        assert_eq!(
            BuiltinScenario::parse("threshold_line:4").unwrap(),
            BuiltinScenario::ThresholdLine { n: 4 }
        );
        assert!(BuiltinScenario::parse("threshold_line:0").is_err());
        assert!(BuiltinScenario::parse("five_point:2").is_err());
        assert!(BuiltinScenario::parse("banana").is_err());
    }

    #[test]
    fn separable_data_passes_the_filter_untouched() {
        let d = builtin_scenario(BuiltinScenario::FivePoint).dataset;
        let (kept, removed) = realizability_filter(
            &d,
            1.0,
            ModelFamily::Linear {
                feature_map: FeatureMap::AppendOne,
            },
        )
        .unwrap();
        assert!(removed.is_empty());
        assert_eq!(kept, d);
    }

    #[test]
    fn models_from_prior_fit_their_seeds() {
        let d = builtin_scenario(BuiltinScenario::FivePoint).dataset;
        let prior = reveal_seed_users(&d, 2, 5).unwrap();
        let family = ModelFamily::Linear {
            feature_map: FeatureMap::AppendOne,
        };
        let models = models_from_prior(&d, &prior, family, &TrainerConfig::default()).unwrap();
        for (j, h) in models.iter().enumerate() {
            for i in support_of(prior.column(j)) {
                let u = d.user(i);
                assert!(u.label.sign() * h.decision(&u.features).unwrap() >= 1.0 - 1e-9);
            }
        }
    }
}
