mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{GlobalArgs, ProcessEnv, RunConfig};

/// Multi-agent clinical trial outcome prediction.
#[derive(Debug, Parser)]
#[command(
    name = "trialagent",
    version,
    about,
    after_help = "Settings resolve as: flags > environment > config file > defaults. \
Only CA_API_KEY, CA_API_BASE and CA_MODEL are read from the environment; \
relative paths in the --config TOML file are resolved against the file's directory.\n\n\
Exit status: 0 success, 1 the run failed (prediction error, tool error, every trial failed), \
2 bad usage or unreadable input."
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the input files and print a manifest (rows, sha256, warnings).
    Ingest {
        /// Skip malformed rows instead of failing on the first one.
        #[arg(long)]
        lenient: bool,
    },
    /// Predict the outcome of one trial.
    Predict(PredictArgs),
    /// Predict every trial in --trials and report metrics.
    Evaluate {
        /// Also write one JSON line per trial here.
        #[arg(long, value_name = "JSONL")]
        results: Option<PathBuf>,
    },
    /// Inspect or run a single tool.
    Tool {
        #[command(subcommand)]
        action: ToolAction,
    },
    /// Fit the reference enrollment model on --trials and write it to --out.
    TrainEnrollment {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        l2: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Trial record as JSON.
    #[arg(long, value_name = "JSON", conflicts_with_all = ["drug", "disease", "criteria", "phase"])]
    pub trial: Option<PathBuf>,
    /// Trial id; looked up in --trials unless --drug and --disease are given.
    #[arg(long)]
    pub trial_id: Option<String>,
    #[arg(long, value_name = "NAME")]
    pub drug: Vec<String>,
    #[arg(long, value_name = "NAME")]
    pub disease: Vec<String>,
    #[arg(long, value_name = "TEXT", default_value = "")]
    pub criteria: String,
    #[arg(long, default_value = "")]
    pub phase: String,
}

#[derive(Debug, Subcommand)]
enum ToolAction {
    /// List the available tools.
    List,
    /// Call a tool directly with `--arg key=value` pairs.
    Run {
        name: String,
        #[arg(long = "arg", value_name = "KEY=VALUE")]
        args: Vec<String>,
        /// Trial the enrollment tool is bound to.
        #[arg(long, value_name = "JSON")]
        trial: Option<PathBuf>,
    },
}

/// A failure carrying its exit status. `detail` goes to stderr verbatim.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
    pub detail: Option<String>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into(), detail: None }
    }

    pub fn failed(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into(), detail: None }
    }

    pub fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::resolve(&cli.global, &ProcessEnv)?;
    match cli.command {
        Command::Ingest { lenient } => commands::ingest(&config, lenient),
        Command::Predict(args) => commands::predict(&config, &args),
        Command::Evaluate { results } => commands::evaluate(&config, results.as_deref()),
        Command::Tool { action: ToolAction::List } => commands::tool_list(&config),
        Command::Tool { action: ToolAction::Run { name, args, trial } } => {
            commands::tool_run(&config, &name, &args, trial.as_deref())
        }
        Command::TrainEnrollment { epochs, learning_rate, l2 } => {
            commands::train_enrollment_model(&config, epochs, learning_rate, l2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(detail) = &err.detail {
                eprintln!("{detail}");
            }
            eprintln!("error: {err}");
            ExitCode::from(err.code)
        }
    }
}
