use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{RunConfig, CONFIG_ENV};
use crate::engine::Engine;
use crate::error::{Result, ServiceError};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "steamflood", version, about = "Steam-flood forecasting and allocation")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic pad's raw sources into data_dir.
    Generate,
    /// Parse, consolidate and impute the sources into a pad table.
    Ingest,
    /// Grid search, then fit the final model on the training split.
    Train,
    /// Train/test metrics and the monthly accuracy report.
    Evaluate,
    /// Features ranked by gain share.
    Importance {
        #[arg(long, default_value_t = 8)]
        top: usize,
    },
    /// Brute-force search over allocation plans.
    Optimize {
        #[arg(long)]
        step: Option<f64>,
    },
    /// Predicted total over a two-well slice of the simplex.
    Heatmap {
        #[arg(long, default_value_t = 0)]
        i: usize,
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Err(ServiceError::Config(format!("no config given; pass --config or set {CONFIG_ENV}"))),
    }
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(ServiceError::pipeline)?;
    println!("{text}");
    Ok(())
}

fn step_or_default(engine: &Engine, step: Option<f64>) -> Result<f64> {
    let step = step.unwrap_or_else(|| engine.default_step());
    steamflood_core::optimize::grid_steps(step).map_err(|e| ServiceError::InvalidInput(e.to_string()))?;
    Ok(step)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Generate => print(&pipeline::generate(&cfg)?),
        Command::Ingest => print(&pipeline::ingest(&cfg)?),
        Command::Train => print(&pipeline::train(&cfg)?),
        Command::Evaluate => print(&pipeline::evaluate(&cfg)?),
        Command::Importance { top } => {
            let engine = Engine::load(&cfg)?;
            let out = engine.importance(top)?;
            engine.store().put_json(&format!("importance-{top}.json"), &out)?;
            print(&out)
        }
        Command::Optimize { step } => {
            let engine = Engine::load(&cfg)?;
            let step = step_or_default(&engine, step)?;
            let out = engine.optimize(step)?;
            engine.store().put_json(&format!("optimize-{step}.json"), &out)?;
            print(&out)
        }
        Command::Heatmap { i, j, step } => {
            let engine = Engine::load(&cfg)?;
            let step = step_or_default(&engine, step)?;
            let out = engine.heatmap(i, j, step)?;
            let stem = format!("heatmap-{i}-{j}-{step}");
            engine.store().put_json(&format!("{stem}.json"), &out)?;
            let mut csv = Vec::new();
            out.grid.write_csv(&mut csv).map_err(ServiceError::pipeline)?;
            engine.store().put(&format!("{stem}.csv"), &csv)?;
            print(&out)
        }
        Command::Serve { port } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| ServiceError::io("tokio runtime", e))?;
            rt.block_on(crate::api::serve(&cfg, port))
        }
    }
}
