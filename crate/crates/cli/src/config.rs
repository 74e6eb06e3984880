//! The run configuration file and its resolution into runnable parts.
//!
//! A configuration is one TOML document. Everything except
//! `schema_version` and `[scenario]` has a default; see the README for
//! the full schema.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use strategic_usage::data::{
    data_dir, load_csv, preprocess, BuiltinScenario, CsvSchema, PreprocessSpec, RemovedRow,
    DATA_DIR_ENV,
};
use strategic_usage::models::FeatureMap;
use strategic_usage::{Dataset, DynamicsConfig, LossSpec, ModelFamily, TiePolicy, TrainerConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    /// Number of services. Required for CSV scenarios; builtin scenarios
    /// fix their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub services: Option<usize>,
    /// Picks the users each service sees before the first step of a CSV
    /// scenario.
    #[serde(default)]
    pub seed: u64,
    /// Model family for CSV scenarios. Defaults to affine linear models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelFamily>,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default)]
    pub dynamics: DynamicsOverrides,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    /// Worker threads for sweeps; defaults to the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `five_point`, `threshold_line:<n>` or `threshold_services:<m>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// A relative path is looked up in the data directory when the
    /// environment names one, otherwise next to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaChoice>,
    #[serde(default)]
    pub preprocess: PreprocessSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaChoice {
    /// Only `"banknote"` is known.
    Named(String),
    Inline(CsvSchema),
}

impl SchemaChoice {
    fn resolve(&self) -> Result<CsvSchema> {
        match self {
            SchemaChoice::Named(name) if name == "banknote" => Ok(CsvSchema::banknote()),
            SchemaChoice::Named(name) => {
                bail!("unknown named schema {name:?} (known: \"banknote\")")
            }
            SchemaChoice::Inline(schema) => Ok(schema.clone()),
        }
    }
}

/// Fields left out keep the scenario's own value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_policy: Option<TiePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl DynamicsOverrides {
    pub fn apply(&self, base: &DynamicsConfig) -> DynamicsConfig {
        DynamicsConfig {
            p: self.p.unwrap_or(base.p),
            q: self.q.unwrap_or(base.q),
            zero_tol: self.zero_tol.unwrap_or(base.zero_tol),
            tie_tol: self.tie_tol.unwrap_or(base.tie_tol),
            user_tie_policy: self.tie_policy.unwrap_or(base.user_tie_policy),
            max_steps: self.max_steps.or(base.max_steps),
        }
    }
}

/// Values to cross. An empty list keeps the base configuration's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed: Vec<u64>,
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        self.p.is_empty() && self.q.is_empty() && self.m.is_empty() && self.seed.is_empty()
    }
}

/// Command-line values that replace config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub max_steps: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        ensure!(
            config.schema_version == SCHEMA_VERSION,
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            config.schema_version
        );
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.p.is_some() {
            self.dynamics.p = o.p;
        }
        if o.q.is_some() {
            self.dynamics.q = o.q;
        }
        if o.m.is_some() {
            self.services = o.m;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if o.max_steps.is_some() {
            self.dynamics.max_steps = o.max_steps;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }
}

/// A config file read from disk, with the directory relative paths are
/// resolved against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn read(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config = RunConfig::parse(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        config.apply(overrides);
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    /// Output directory; relative paths sit next to the config file.
    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.output_dir)
    }

    pub fn csv_path(&self) -> Option<PathBuf> {
        let csv = self.config.scenario.csv.as_ref()?;
        if csv.is_absolute() {
            return Some(csv.clone());
        }
        Some(match data_dir() {
            Some(dir) => dir.join(csv),
            None => self.base_dir.join(csv),
        })
    }

    /// Checks everything that can be checked without running: field
    /// ranges, scenario shape, file existence and sweep contents.
    pub fn validate(&self, sweeping: bool) -> Result<()> {
        let c = &self.config;
        match (&c.scenario.builtin, &c.scenario.csv) {
            (Some(_), Some(_)) => bail!("[scenario] sets both `builtin` and `csv`"),
            (None, None) => bail!("[scenario] needs `builtin` or `csv`"),
            (Some(name), None) => {
                BuiltinScenario::parse(name)?;
                ensure!(
                    c.services.is_none(),
                    "`services` only applies to CSV scenarios"
                );
                ensure!(c.model.is_none(), "`model` only applies to CSV scenarios");
                ensure!(
                    c.scenario.schema.is_none(),
                    "`schema` only applies to CSV scenarios"
                );
                if let Some(sweep) = &c.sweep {
                    ensure!(sweep.m.is_empty(), "sweeping `m` needs a CSV scenario");
                }
            }
            (None, Some(_)) => {
                let path = self.csv_path().expect("csv is set");
                ensure!(
                    path.is_file(),
                    "data file {} does not exist (relative paths resolve against ${DATA_DIR_ENV} when set)",
                    path.display()
                );
                ensure!(c.scenario.schema.is_some(), "CSV scenarios need a `schema`");
                c.scenario.schema.as_ref().expect("checked").resolve()?;
                ensure!(
                    c.services.is_some_and(|m| m >= 1),
                    "CSV scenarios need `services` >= 1"
                );
                if let Some(sweep) = &c.sweep {
                    ensure!(
                        sweep.m.iter().all(|&m| m >= 1),
                        "swept `m` values must be >= 1"
                    );
                }
            }
        }
        c.dynamics.apply(&DynamicsConfig::default()).validate()?;
        if let Some(sweep) = &c.sweep {
            for &p in &sweep.p {
                ensure!(p >= 0.0 && p.is_finite(), "swept p = {p} must be >= 0");
            }
            for &q in &sweep.q {
                ensure!(q > 1.0 && q.is_finite(), "swept q = {q} must exceed 1");
            }
        }
        if sweeping {
            ensure!(
                c.sweep.as_ref().is_some_and(|s| !s.is_empty()),
                "sweep needs a non-empty [sweep] list"
            );
        }
        ensure!(c.threads != Some(0), "threads must be positive");
        Ok(())
    }

    /// Loads and preprocesses the CSV pool, if the scenario has one.
    pub fn load_data(&self) -> Result<Option<LoadedData>> {
        let Some(path) = self.csv_path() else {
            return Ok(None);
        };
        let scenario = &self.config.scenario;
        let schema = scenario
            .schema
            .as_ref()
            .context("CSV scenarios need a `schema`")?
            .resolve()?;
        let raw = load_csv(&path, &schema)?;
        let out = preprocess(&raw, &scenario.preprocess, self.family())?;
        Ok(Some(LoadedData {
            loaded_rows: raw.len(),
            dataset: out.dataset,
            removed: out.removed,
        }))
    }

    pub fn family(&self) -> ModelFamily {
        self.config.model.unwrap_or(ModelFamily::Linear {
            feature_map: FeatureMap::AppendOne,
        })
    }
}

/// A preprocessed CSV pool.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub loaded_rows: usize,
    pub dataset: Dataset,
    pub removed: Vec<RemovedRow>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\n[scenario]\nbuiltin = \"five_point\"\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("out"));
        assert_eq!(c.loss, LossSpec::HINGE_LINEAR);
        assert_eq!(c.dynamics, DynamicsOverrides::default());
        assert!(c.sweep.is_none());
    }

    #[test]
    fn wrong_version_and_unknown_keys_are_rejected() {
        assert!(
            RunConfig::parse("schema_version = 2\n[scenario]\nbuiltin = \"five_point\"\n").is_err()
        );
        assert!(RunConfig::parse(&format!("{MINIMAL}colour = 1\n")).is_err());
    }

    #[test]
    fn nested_tables_parse() {
        let text = r#"
schema_version = 1
services = 3
seed = 100
model = { family = "rbf", gamma = 0.5 }
loss = { loss = "zero_one", utility = "zero_one" }

[scenario]
csv = "pool.csv"
schema = "banknote"
preprocess = { normalize = true, realizability_filter = { c = 2.0 }, subsample_per_class = 10 }

[dynamics]
p = 0.5
tie_policy = { kind = "concentrate", seed = 4 }

[sweep]
seed = [1, 2, 3]
"#;
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.model, Some(ModelFamily::Rbf { gamma: 0.5 }));
        assert_eq!(c.loss, LossSpec::ZERO_ONE);
        assert_eq!(
            c.scenario.schema,
            Some(SchemaChoice::Named("banknote".into()))
        );
        assert_eq!(c.scenario.preprocess.subsample_per_class, Some(10));
        assert_eq!(
            c.dynamics.tie_policy,
            Some(TiePolicy::Concentrate { seed: 4 })
        );
        assert_eq!(c.sweep.unwrap().seed, vec![1, 2, 3]);
    }

    #[test]
    fn inline_schema_parses() {
        let text = r#"
schema_version = 1
services = 2
[scenario]
csv = "pool.csv"
[scenario.schema]
has_header = false
label_map = { "yes" = 1, "no" = -1 }
columns = [{ name = "x", role = "feature" }, { name = "y", role = "label" }]
"#;
        let c = RunConfig::parse(text).unwrap();
        let Some(SchemaChoice::Inline(schema)) = c.scenario.schema else {
            panic!("expected an inline schema")
        };
        assert!(!schema.has_header);
        assert_eq!(schema.label_map["no"], strategic_usage::Label::Negative);
    }

    #[test]
    fn serialized_config_parses_back() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.dynamics.p = Some(0.25);
        c.sweep = Some(SweepConfig {
            q: vec![1.5, 2.0],
            ..Default::default()
        });
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn overrides_replace_fields() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.apply(&Overrides {
            p: Some(0.5),
            seed: Some(9),
            output_dir: Some("x".into()),
            ..Default::default()
        });
        assert_eq!(c.dynamics.p, Some(0.5));
        assert_eq!(c.seed, 9);
        assert_eq!(c.output_dir, PathBuf::from("x"));
    }

    #[test]
    fn validation_catches_inconsistent_scenarios() {
        let loaded = |text: &str| LoadedConfig {
            config: RunConfig::parse(text).unwrap(),
            base_dir: PathBuf::new(),
        };
        assert!(loaded(MINIMAL).validate(false).is_ok());
        assert!(loaded(MINIMAL).validate(true).is_err());
        assert!(loaded(&format!("services = 2\n{MINIMAL}"))
            .validate(false)
            .is_err());
        assert!(
            loaded("schema_version = 1\n[scenario]\nbuiltin = \"nine_point\"\n")
                .validate(false)
                .is_err()
        );
        assert!(loaded("schema_version = 1\n[scenario]\n")
            .validate(false)
            .is_err());
        let bad_q = format!("{MINIMAL}[dynamics]\nq = 1.0\n");
        assert!(loaded(&bad_q).validate(false).is_err());
    }
}
