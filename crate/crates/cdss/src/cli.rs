//! The `cdss` command line.
//!
//! Pipeline subcommands run every stage up to and including the named one,
//! resuming from artifacts already in the output directory. Exit status is
//! 0 on success, 2 for invalid input or configuration and 1 otherwise.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use cdss_core::knowledge::reference_ckm;

use crate::model_io::{save_model, ModelDocument};
use crate::pipeline::{Pipeline, PipelineConfig, Stage};
use crate::service::{ModelSource, ModelStore};

#[derive(Parser, Debug)]
#[command(name = "cdss", version, about = "Hybrid decision-tree diagnosis of glycemic status")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    /// Pipeline configuration (TOML or JSON). Built-in defaults otherwise.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate (or copy) the cohort.
    Synth(PipelineArgs),
    /// Split, impute and write train/test files.
    Ingest(PipelineArgs),
    /// Train one tree per split criterion on a validation fold.
    Train(PipelineArgs),
    /// Rank criteria and retrain the winner on the full training split.
    Rank(PipelineArgs),
    /// Merge the expert model with the learned model.
    Hybridize(PipelineArgs),
    /// Evaluate every model on the test split and write the report.
    Evaluate(PipelineArgs),
    /// Run all stages.
    Run(PipelineArgs),
    /// Serve the diagnosis API.
    Serve(ServeArgs),
    /// Write the built-in reference expert model as JSON.
    ReferenceCkm {
        /// Destination file; standard output when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Decision-tree model served for diagnosis.
    #[arg(long, env = "CDSS_MODEL_PATH")]
    pub model: Option<PathBuf>,
    /// Learned model to blend with the served tree.
    #[arg(long, env = "CDSS_PM_PATH")]
    pub pm: Option<PathBuf>,
    /// Weight of the served tree in the blend; 1 disables blending.
    #[arg(long, env = "CDSS_ALPHA", default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, env = "CDSS_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

/// Failure with its process exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

fn pipeline_for(args: &PipelineArgs) -> Result<Pipeline, CliError> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path),
        None => Ok(PipelineConfig::default()),
    }
    .map_err(|e| CliError {
        code: e.exit_code(),
        message: e.to_string(),
    })?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| config.out_dir());
    Ok(Pipeline::new(config, out))
}

fn run_stage(args: &PipelineArgs, stage: Stage) -> Result<(), CliError> {
    let pipeline = pipeline_for(args)?;
    let summary = pipeline.run_until(stage).map_err(|e| CliError {
        code: e.exit_code(),
        message: e.to_string(),
    })?;
    for s in &summary.resumed {
        println!("{:<10} reused", s.name());
    }
    for s in &summary.executed {
        println!("{:<10} done", s.name());
    }
    println!("artifacts in {}", summary.out_dir.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(CliError {
            code: 2,
            message: format!("--alpha {} must lie in [0, 1]", args.alpha),
        });
    }
    let store = match args.model {
        None => {
            tracing::warn!("no model configured; diagnosis requests will fail until one is loaded");
            ModelStore::empty()
        }
        Some(model_path) => {
            let source = ModelSource {
                model_path,
                pm_path: args.pm,
                alpha: args.alpha,
            };
            match source.load() {
                Ok(_) => ModelStore::from_source(source).map_err(|e| CliError {
                    code: 1,
                    message: e.to_string(),
                })?,
                Err(e) => {
                    tracing::error!(error = %e, "model failed to load; starting without one");
                    ModelStore::unloaded(source)
                }
            }
        }
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError {
        code: 1,
        message: e.to_string(),
    })?;
    runtime
        .block_on(crate::http::serve(Arc::new(store), args.addr))
        .map_err(|e| CliError {
            code: 1,
            message: format!("{}: {e}", args.addr),
        })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => run_stage(&a, Stage::Synth),
        Command::Ingest(a) => run_stage(&a, Stage::Ingest),
        Command::Train(a) => run_stage(&a, Stage::Train),
        Command::Rank(a) => run_stage(&a, Stage::Rank),
        Command::Hybridize(a) => run_stage(&a, Stage::Hybridize),
        Command::Evaluate(a) | Command::Run(a) => run_stage(&a, Stage::Evaluate),
        Command::Serve(a) => serve(a),
        Command::ReferenceCkm { out } => {
            let doc = ModelDocument::new("reference_ckm", reference_ckm());
            match out {
                Some(path) => save_model(&doc, &path).map_err(|e| CliError {
                    code: 1,
                    message: e.to_string(),
                }),
                None => {
                    print!("{}", crate::model_io::to_json(&doc));
                    Ok(())
                }
            }
        }
    }
}
