//! A single run: build the instance, step it to a verdict and write the
//! trajectory, plot tables and summary.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Serialize;

use strategic_usage::data::{models_from_prior, reveal_seed_users, BuiltinScenario};
use strategic_usage::dynamics::TrajectoryRecord;
use strategic_usage::{
    Dataset, DynamicsConfig, Engine, MemoryMatrix, Model, StepReport, StickyTrainer, Verdict,
};

use crate::config::{LoadedConfig, LoadedData, RunConfig};

/// Everything `Engine::start` needs.
pub struct Instance {
    pub dataset: Arc<Dataset>,
    pub models: Vec<Arc<Model>>,
    pub prior: Option<MemoryMatrix>,
    pub dynamics: DynamicsConfig,
}

/// Builds the instance a config describes. `data` must be the loaded CSV
/// pool for CSV scenarios.
pub fn build_instance(loaded: &LoadedConfig, data: Option<&LoadedData>) -> Result<Instance> {
    let c = &loaded.config;
    if let Some(name) = &c.scenario.builtin {
        let scenario = BuiltinScenario::parse(name)?.build();
        return Ok(Instance {
            dynamics: c.dynamics.apply(&scenario.dynamics),
            dataset: Arc::new(scenario.dataset),
            models: scenario.models,
            prior: None,
        });
    }
    let data = data.context("CSV scenario without loaded data")?;
    let m = c.services.context("CSV scenarios need `services`")?;
    let prior = reveal_seed_users(&data.dataset, m, c.seed)?;
    let models = models_from_prior(&data.dataset, &prior, loaded.family(), &c.trainer)
        .context("fitting the initial models to the seed users")?;
    Ok(Instance {
        dataset: Arc::new(data.dataset.clone()),
        models,
        prior: Some(prior),
        dynamics: c.dynamics.apply(&DynamicsConfig::default()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ServiceTotals {
    pub service: usize,
    pub positive: f64,
    pub negative: f64,
}

/// The deterministic outcome record of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub users: usize,
    pub services: usize,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub verdict: Verdict,
    /// First step of the final zero-loss pair, when the run converged.
    pub time_to_convergence: Option<usize>,
    /// Index of the last recorded step.
    pub last_step: usize,
    pub final_usage: Vec<ServiceTotals>,
    pub final_loss: Vec<f64>,
    pub final_zero_loss: bool,
}

impl Summary {
    pub fn negative_usage(&self) -> f64 {
        self.final_usage.iter().map(|t| t.negative).sum()
    }

    pub fn positive_usage(&self) -> f64 {
        self.final_usage.iter().map(|t| t.positive).sum()
    }
}

pub fn scenario_label(c: &RunConfig) -> String {
    match (&c.scenario.builtin, &c.scenario.csv) {
        (Some(name), _) => name.clone(),
        (None, Some(path)) => path.display().to_string(),
        (None, None) => String::new(),
    }
}

pub fn verdict_label(v: &Verdict) -> String {
    match v {
        Verdict::ConvergedZeroLoss { at_step } => format!("converged_zero_loss(at_step={at_step})"),
        Verdict::Oscillating { period, first_seen } => {
            format!("oscillating(period={period},first_seen={first_seen})")
        }
        Verdict::Exhausted { max_steps } => format!("exhausted(max_steps={max_steps})"),
    }
}

/// Per-step output streams, each flushed after every line so an
/// interrupted run leaves a valid prefix.
struct Streams {
    trajectory: BufWriter<File>,
    loss: BufWriter<File>,
    usage: BufWriter<File>,
}

impl Streams {
    fn create(dir: &Path, m: usize) -> io::Result<Self> {
        let open = |name: &str| File::create(dir.join(name)).map(BufWriter::new);
        let mut streams = Self {
            trajectory: open("trajectory.jsonl")?,
            loss: open("loss.tsv")?,
            usage: open("usage.tsv")?,
        };
        let loss_header: Vec<String> = (0..m).map(|j| format!("loss_{j}")).collect();
        writeln!(streams.loss, "step\t{}", loss_header.join("\t"))?;
        let usage_header: Vec<String> = (0..m)
            .flat_map(|j| [format!("positive_{j}"), format!("negative_{j}")])
            .collect();
        writeln!(streams.usage, "step\t{}", usage_header.join("\t"))?;
        Ok(streams)
    }

    fn write(&mut self, record: &TrajectoryRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.trajectory, record)?;
        writeln!(self.trajectory)?;
        self.trajectory.flush()?;

        let losses: Vec<String> = record.loss.iter().map(f64::to_string).collect();
        writeln!(self.loss, "{}\t{}", record.step, losses.join("\t"))?;
        self.loss.flush()?;

        let usage: Vec<String> = record
            .positive_usage
            .iter()
            .zip(&record.negative_usage)
            .flat_map(|(pos, neg)| [pos.to_string(), neg.to_string()])
            .collect();
        writeln!(self.usage, "{}\t{}", record.step, usage.join("\t"))?;
        self.usage.flush()
    }
}

/// Runs `loaded` and writes every output into `out_dir`.
pub fn execute(
    loaded: &LoadedConfig,
    data: Option<&LoadedData>,
    out_dir: &Path,
) -> Result<Summary> {
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    fs::write(out_dir.join("config.toml"), loaded.config.to_toml())?;
    if let Some(data) = data {
        write_filter_report(&out_dir.join("filter_report.jsonl"), data)?;
    }

    let instance = build_instance(loaded, data)?;
    let trainer = StickyTrainer::new(loaded.config.trainer.clone());
    let engine = Engine::new(
        &instance.dataset,
        loaded.config.loss,
        instance.dynamics.clone(),
        &trainer,
    )?;
    let start = engine.start(instance.models.clone(), instance.prior.as_ref())?;

    let mut streams = Streams::create(out_dir, start.state.n_services())
        .with_context(|| format!("cannot create output files in {}", out_dir.display()))?;
    let mut write_error = None;
    let mut last: Option<StepReport> = None;
    let verdict = engine.run_observed(start, |report| {
        if write_error.is_none() {
            write_error = streams
                .write(&TrajectoryRecord::new(report, &instance.dataset))
                .err();
        }
        last = Some(report.clone());
    })?;
    if let Some(e) = write_error {
        return Err(e).context("writing trajectory output");
    }

    let last = last.expect("the initial report is always observed");
    let summary = summarize(&loaded.config, &instance, &last, verdict);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(out_dir.join("summary.json"), text)?;
    Ok(summary)
}

fn summarize(c: &RunConfig, instance: &Instance, last: &StepReport, verdict: Verdict) -> Summary {
    let state = &last.state;
    Summary {
        scenario: scenario_label(c),
        users: instance.dataset.len(),
        services: state.n_services(),
        p: instance.dynamics.p,
        q: instance.dynamics.q,
        seed: c.seed,
        verdict,
        time_to_convergence: match verdict {
            Verdict::ConvergedZeroLoss { at_step } => Some(at_step),
            _ => None,
        },
        last_step: state.step,
        final_usage: (0..state.n_services())
            .map(|j| {
                let (positive, negative) = state.usage.totals_by_class(&instance.dataset, j);
                ServiceTotals {
                    service: j,
                    positive,
                    negative,
                }
            })
            .collect(),
        final_loss: last.per_service_loss.clone(),
        final_zero_loss: last.is_zero_loss,
    }
}

fn write_filter_report(path: &Path, data: &LoadedData) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    for row in &data.removed {
        serde_json::to_writer(&mut out, row)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
