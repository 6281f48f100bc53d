//! Run configuration. Each setting resolves as: command-line flag, then
//! environment variable (only `CA_API_KEY`, `CA_API_BASE`, `CA_MODEL`),
//! then the `--config` TOML file, then the built-in default.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use trialagent_core::agent::{DEFAULT_DECISION_THRESHOLD, DEFAULT_MAX_ITERATIONS};
use trialagent_core::gateway::{ENV_API_BASE, ENV_API_KEY, ENV_MODEL};
use trialagent_core::knowledge::PathBounds;

use crate::CliError;

pub const DEFAULT_MODEL: &str = "gpt-4";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Call the chat-completions endpoint.
    Live,
    /// Answer from a recorded cassette; no network.
    Replay,
    /// Call the endpoint and record every exchange into a cassette.
    Record,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML file with defaults for any of the settings below.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Trial CSV: the dataset to ingest, evaluate or train on.
    #[arg(long, global = true, value_name = "CSV")]
    pub trials: Option<PathBuf>,
    /// Labeled trial CSV the historical drug and disease failure rates are computed from.
    #[arg(long, global = true, value_name = "CSV")]
    pub history: Option<PathBuf>,
    /// DrugBank-style TSV of drug descriptions.
    #[arg(long, global = true, value_name = "TSV")]
    pub drugbank: Option<PathBuf>,
    /// Hetionet-style TSV edge list.
    #[arg(long, global = true, value_name = "TSV")]
    pub hetionet: Option<PathBuf>,
    /// Enrollment model file written by `train-enrollment`.
    #[arg(long, global = true, value_name = "JSON")]
    pub enrollment_model: Option<PathBuf>,
    /// External enrollment predictor endpoint (POST trial JSON, reply {probability}).
    #[arg(long, global = true, value_name = "URL", conflicts_with = "enrollment_model")]
    pub enrollment_url: Option<String>,
    /// Model backend [default: replay when --cassette is set, otherwise live].
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Cassette file (predict) or directory of <trial_id>.json cassettes (evaluate).
    #[arg(long, global = true, value_name = "PATH")]
    pub cassette: Option<PathBuf>,
    /// Trials evaluated concurrently [default: 1].
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Longest drug-to-disease path, in edges [default: 4].
    #[arg(long, global = true)]
    pub max_path_len: Option<usize>,
    /// Most paths returned per query [default: 25].
    #[arg(long, global = true)]
    pub max_paths: Option<usize>,
    /// Decision threshold on the success probability [default: 0.5].
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// ReAct iterations per specialist [default: 8].
    #[arg(long, global = true)]
    pub max_iterations: Option<usize>,
    /// Directory overriding the built-in prompt files.
    #[arg(long, global = true, value_name = "DIR")]
    pub prompts: Option<PathBuf>,
    /// Chat model name (env CA_MODEL) [default: gpt-4].
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Endpoint base URL (env CA_API_BASE).
    #[arg(long, global = true, value_name = "URL")]
    pub api_base: Option<String>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Human-readable output instead of compact JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    trials: Option<PathBuf>,
    history: Option<PathBuf>,
    drugbank: Option<PathBuf>,
    hetionet: Option<PathBuf>,
    enrollment_model: Option<PathBuf>,
    enrollment_url: Option<String>,
    backend: Option<BackendKind>,
    cassette: Option<PathBuf>,
    parallelism: Option<usize>,
    max_path_len: Option<usize>,
    max_paths: Option<usize>,
    threshold: Option<f64>,
    max_iterations: Option<usize>,
    prompts: Option<PathBuf>,
    model: Option<String>,
    api_base: Option<String>,
    api_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub cassette: Option<PathBuf>,
    pub trials: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub drugbank: Option<PathBuf>,
    pub hetionet: Option<PathBuf>,
    pub enrollment_model: Option<PathBuf>,
    pub enrollment_url: Option<String>,
    pub parallelism: usize,
    pub bounds: PathBounds,
    pub threshold: f64,
    pub max_iterations: usize,
    pub prompts: Option<PathBuf>,
    pub model: String,
    pub api_base: Option<String>,
    pub api_key: Option<String>,
    pub out: Option<PathBuf>,
    pub pretty: bool,
}

/// Environment lookups, injectable for tests.
pub trait Env {
    fn var(&self, key: &str) -> Option<String>;
}

pub struct ProcessEnv;

impl Env for ProcessEnv {
    fn var(&self, key: &str) -> Option<String> {
        std::env::var(key).ok().filter(|v| !v.is_empty())
    }
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut file: FileConfig =
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
    // relative paths in the file are relative to the file
    let base = path.parent().unwrap_or(Path::new(""));
    for slot in [
        &mut file.trials,
        &mut file.history,
        &mut file.drugbank,
        &mut file.hetionet,
        &mut file.enrollment_model,
        &mut file.cassette,
        &mut file.prompts,
    ] {
        if let Some(p) = slot.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(file)
}

impl RunConfig {
    pub fn resolve(flags: &GlobalArgs, env: &dyn Env) -> Result<RunConfig, CliError> {
        let file = match &flags.config {
            Some(path) => load_file(path)?,
            None => FileConfig::default(),
        };
        let cassette = flags.cassette.clone().or(file.cassette);
        let backend = flags.backend.or(file.backend).unwrap_or(if cassette.is_some() {
            BackendKind::Replay
        } else {
            BackendKind::Live
        });
        let bounds = PathBounds {
            max_len: flags.max_path_len.or(file.max_path_len).unwrap_or(PathBounds::default().max_len),
            max_paths: flags.max_paths.or(file.max_paths).unwrap_or(PathBounds::default().max_paths),
        };
        let config = RunConfig {
            backend,
            cassette,
            trials: flags.trials.clone().or(file.trials),
            history: flags.history.clone().or(file.history),
            drugbank: flags.drugbank.clone().or(file.drugbank),
            hetionet: flags.hetionet.clone().or(file.hetionet),
            enrollment_model: flags.enrollment_model.clone().or(file.enrollment_model),
            enrollment_url: flags.enrollment_url.clone().or(file.enrollment_url),
            parallelism: flags.parallelism.or(file.parallelism).unwrap_or(1),
            bounds,
            threshold: flags.threshold.or(file.threshold).unwrap_or(DEFAULT_DECISION_THRESHOLD),
            max_iterations: flags.max_iterations.or(file.max_iterations).unwrap_or(DEFAULT_MAX_ITERATIONS),
            prompts: flags.prompts.clone().or(file.prompts),
            model: flags.model.clone().or_else(|| env.var(ENV_MODEL)).or(file.model).unwrap_or_else(|| DEFAULT_MODEL.into()),
            api_base: flags.api_base.clone().or_else(|| env.var(ENV_API_BASE)).or(file.api_base),
            api_key: env.var(ENV_API_KEY).or(file.api_key),
            out: flags.out.clone(),
            pretty: flags.pretty,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.parallelism == 0 {
            return Err(CliError::usage("--parallelism must be at least 1"));
        }
        if self.bounds.max_len == 0 || self.bounds.max_paths == 0 {
            return Err(CliError::usage("--max-path-len and --max-paths must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::usage("--threshold must lie in [0, 1]"));
        }
        if self.max_iterations == 0 {
            return Err(CliError::usage("--max-iterations must be at least 1"));
        }
        if self.enrollment_model.is_some() && self.enrollment_url.is_some() {
            return Err(CliError::usage("set either an enrollment model file or an enrollment URL, not both"));
        }
        Ok(())
    }

    /// Checks the backend has what it needs; called only by commands that talk to a model.
    pub fn require_backend(&self) -> Result<(), CliError> {
        match self.backend {
            BackendKind::Replay | BackendKind::Record if self.cassette.is_none() => Err(CliError::usage(format!(
                "--backend {} requires --cassette",
                if self.backend == BackendKind::Replay { "replay" } else { "record" }
            ))),
            BackendKind::Live | BackendKind::Record if self.api_base.is_none() => {
                Err(CliError::usage(format!("a live backend needs --api-base or {ENV_API_BASE}")))
            }
            _ => Ok(()),
        }
    }
}
