use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use usage_cli::config::{LoadedConfig, Overrides};
use usage_cli::run::{execute, verdict_label};
use usage_cli::sweep::execute_sweep;

#[derive(Parser)]
#[command(
    name = "strategic-usage",
    version,
    about = "Strategic usage dynamics between users and retraining services"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its trajectory and summary.
    Run(RunArgs),
    /// Run the cross product of the config's [sweep] lists.
    Sweep(RunArgs),
    /// Builtin scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Check a config without running it.
    Validate(RunArgs),
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// List builtin scenario names.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML config.
    config: PathBuf,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Number of services (CSV scenarios only).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Output directory, relative to the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<LoadedConfig> {
        let output_dir = match &self.out {
            Some(dir) if dir.is_relative() => Some(std::env::current_dir()?.join(dir)),
            other => other.clone(),
        };
        let overrides = Overrides {
            p: self.p,
            q: self.q,
            m: self.m,
            seed: self.seed,
            max_steps: self.max_steps,
            output_dir,
            threads: self.threads,
        };
        LoadedConfig::read(&self.config, &overrides)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let loaded = args.load()?;
            loaded.validate(false)?;
            let data = loaded.load_data()?;
            let out = loaded.output_dir();
            let summary = execute(&loaded, data.as_ref(), &out)?;
            println!("{} -> {}", verdict_label(&summary.verdict), display(&out));
        }
        Command::Sweep(args) => {
            let loaded = args.load()?;
            loaded.validate(true)?;
            let data = loaded.load_data()?;
            let results = execute_sweep(&loaded, data.as_ref())?;
            for r in &results {
                match (&r.summary, &r.error) {
                    (Some(s), _) => {
                        println!("cell {:03}: {}", r.cell.index, verdict_label(&s.verdict))
                    }
                    (None, Some(e)) => println!("cell {:03}: failed: {e}", r.cell.index),
                    (None, None) => unreachable!("a cell has a summary or an error"),
                }
            }
            println!(
                "{} cells -> {}",
                results.len(),
                display(&loaded.output_dir())
            );
        }
        Command::Scenario {
            action: ScenarioAction::List,
        } => {
            for (name, about) in usage_cli::scenario_list() {
                println!("{name:<24}{about}");
            }
        }
        Command::Validate(args) => {
            let loaded = args.load()?;
            let sweeping = loaded.config.sweep.is_some();
            loaded.validate(sweeping)?;
            match loaded.load_data()? {
                Some(data) => println!(
                    "ok: {} rows loaded, {} kept after preprocessing",
                    data.loaded_rows,
                    data.dataset.len()
                ),
                None => println!("ok"),
            }
        }
    }
    Ok(())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}
