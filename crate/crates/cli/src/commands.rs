use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use trialagent_core::agent::{Engine, EngineSettings, PromptSet, Resources};
use trialagent_core::eval::{evaluate_dataset, MetricsError};
use trialagent_core::gateway::{HttpBackend, HttpConfig, LlmBackend, RecordingBackend, ReplayBackend, ToolCallRequest};
use trialagent_core::knowledge::{DrugStore, HetioGraph, StoreError};
use trialagent_core::risk::{
    enrollment_examples, train_enrollment, EnrollmentModel, EnrollmentPredictor, EntityKind, ExternalPredictor,
    OutcomeTable, RiskError, TrainingConfig,
};
use trialagent_core::tools::{
    disease_statistics_tool, drug_statistics_tool, drugbank_tool, enrollment_tool, hetionet_tool, ToolRegistry,
};
use trialagent_core::{parse_trial_dataset, IngestMode, Phase, TrialError, TrialRecord};

use crate::config::{BackendKind, RunConfig};
use crate::{CliError, PredictArgs};

fn read_bytes(path: &Path, what: &str) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::usage(format!("cannot read {what} {}: {e}", path.display())))
}

fn trial_error(path: &Path, err: TrialError) -> CliError {
    CliError::usage(format!("{}: {err}", path.display()))
}

fn store_error(path: &Path, err: StoreError) -> CliError {
    CliError::usage(format!("{}: {err}", path.display()))
}

/// Writes `text` to `--out`, or stdout.
fn emit(config: &RunConfig, text: &str) -> Result<(), CliError> {
    match &config.out {
        Some(path) => write_file(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| if text.ends_with('\n') { Ok(()) } else { stdout.write_all(b"\n") })
                .map_err(|e| CliError::failed(format!("cannot write to stdout: {e}")))
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T, pretty: bool) -> String {
    let text = if pretty { serde_json::to_string_pretty(value) } else { serde_json::to_string(value) };
    text.expect("value serializes")
}

fn load_trials(path: &Path, mode: IngestMode) -> Result<Vec<TrialRecord>, CliError> {
    let bytes = read_bytes(path, "trial file")?;
    Ok(parse_trial_dataset(bytes.as_slice(), mode).map_err(|e| trial_error(path, e))?.records)
}

fn load_trial_json(path: &Path) -> Result<TrialRecord, CliError> {
    let bytes = read_bytes(path, "trial")?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::usage(format!("{}: invalid trial record: {e}", path.display())))
}

/// Stores, outcome tables and enrollment predictor named by the config.
/// Missing sources leave the matching tools answering "no data".
pub fn load_resources(config: &RunConfig) -> Result<Resources, CliError> {
    let mut resources = Resources { path_bounds: config.bounds, ..Resources::default() };
    if let Some(path) = &config.drugbank {
        let loaded = DrugStore::load(read_bytes(path, "DrugBank file")?.as_slice()).map_err(|e| store_error(path, e))?;
        loaded.warnings.iter().for_each(|w| log::warn!("{}: {w}", path.display()));
        resources.drugbank = Arc::new(loaded.value);
    }
    if let Some(path) = &config.hetionet {
        let loaded = HetioGraph::load(read_bytes(path, "Hetionet file")?.as_slice(), IngestMode::Strict)
            .map_err(|e| store_error(path, e))?;
        loaded.warnings.iter().for_each(|w| log::warn!("{}: {w}", path.display()));
        resources.hetionet = Arc::new(loaded.value);
    }
    match &config.history {
        Some(path) => {
            let history = load_trials(path, IngestMode::Strict)?;
            let build = |kind| OutcomeTable::build(&history, kind).map_err(|e| CliError::usage(format!("{}: {e}", path.display())));
            resources.drug_outcomes = Arc::new(build(EntityKind::Drug)?);
            resources.disease_outcomes = Arc::new(build(EntityKind::Disease)?);
        }
        None => log::info!("no --history given; historical statistics tools will report no data"),
    }
    resources.enrollment = match (&config.enrollment_model, &config.enrollment_url) {
        (Some(path), _) => Some(Arc::new(EnrollmentModel::load(path).map_err(|e| CliError::usage(e.to_string()))?)
            as Arc<dyn EnrollmentPredictor>),
        (None, Some(url)) => Some(Arc::new(ExternalPredictor::new(url.clone()))),
        (None, None) => {
            log::info!("no enrollment model configured; the enrollment tool will report an error");
            None
        }
    };
    Ok(resources)
}

fn load_prompts(config: &RunConfig) -> Result<PromptSet, CliError> {
    match &config.prompts {
        Some(dir) => PromptSet::load_dir(dir).map_err(|e| CliError::usage(e.to_string())),
        None => Ok(PromptSet::builtin()),
    }
}

fn settings(config: &RunConfig) -> EngineSettings {
    EngineSettings {
        model: config.model.clone(),
        max_iterations: config.max_iterations,
        threshold: config.threshold,
        ..EngineSettings::default()
    }
}

fn http_backend(config: &RunConfig) -> HttpBackend {
    let base = config.api_base.clone().expect("checked by require_backend");
    HttpBackend::new(HttpConfig::new(base, config.api_key.clone()))
}

fn replay_backend(path: &Path) -> Result<ReplayBackend, CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!("cassette {} does not exist", path.display())));
    }
    ReplayBackend::load(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- ingest

#[derive(Serialize)]
struct ManifestEntry {
    kind: &'static str,
    path: PathBuf,
    sha256: String,
    rows: usize,
    warnings: Vec<String>,
}

pub fn ingest(config: &RunConfig, lenient: bool) -> Result<(), CliError> {
    let mode = if lenient { IngestMode::Lenient } else { IngestMode::Strict };
    let mut manifest = Vec::new();
    let mut entry = |kind: &'static str, path: &Path, rows: usize, warnings: Vec<String>, bytes: &[u8]| {
        manifest.push(ManifestEntry {
            kind,
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(bytes)),
            rows,
            warnings,
        });
    };
    for (kind, path) in [("trials", &config.trials), ("history", &config.history)] {
        let Some(path) = path else { continue };
        let bytes = read_bytes(path, "trial file")?;
        let dataset = parse_trial_dataset(bytes.as_slice(), mode).map_err(|e| trial_error(path, e))?;
        let warnings = dataset.skipped.iter().map(|i| format!("row {}: {}", i.row, i.message)).collect();
        entry(kind, path, dataset.records.len(), warnings, &bytes);
    }
    if let Some(path) = &config.drugbank {
        let bytes = read_bytes(path, "DrugBank file")?;
        let loaded = DrugStore::load(bytes.as_slice()).map_err(|e| store_error(path, e))?;
        entry("drugbank", path, loaded.value.len(), loaded.warnings, &bytes);
    }
    if let Some(path) = &config.hetionet {
        let bytes = read_bytes(path, "Hetionet file")?;
        let loaded = HetioGraph::load(bytes.as_slice(), mode).map_err(|e| store_error(path, e))?;
        entry("hetionet", path, loaded.value.edge_count(), loaded.warnings, &bytes);
    }
    if let Some(path) = &config.enrollment_model {
        let bytes = read_bytes(path, "enrollment model")?;
        let text = String::from_utf8_lossy(&bytes);
        let model = EnrollmentModel::from_json(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let nonzero = model.weights.iter().filter(|w| **w != 0.0).count();
        entry("enrollment_model", path, nonzero, Vec::new(), &bytes);
    }
    if manifest.is_empty() {
        return Err(CliError::usage("nothing to ingest: pass --trials, --history, --drugbank, --hetionet or --enrollment-model"));
    }
    emit(config, &to_json(&manifest, config.pretty))
}

// ---------------------------------------------------------------- predict

fn predict_record(config: &RunConfig, args: &PredictArgs) -> Result<TrialRecord, CliError> {
    if let Some(path) = &args.trial {
        return load_trial_json(path);
    }
    let Some(trial_id) = &args.trial_id else {
        return Err(CliError::usage("predict needs --trial FILE or --trial-id"));
    };
    if args.drug.is_empty() && args.disease.is_empty() {
        let Some(path) = &config.trials else {
            return Err(CliError::usage("--trial-id alone needs --trials to look the trial up in"));
        };
        return load_trials(path, IngestMode::Strict)?
            .into_iter()
            .find(|r| &r.trial_id == trial_id)
            .ok_or_else(|| CliError::usage(format!("trial {trial_id} is not in {}", path.display())));
    }
    TrialRecord::new(trial_id.clone(), Phase::parse(&args.phase), args.drug.clone(), args.disease.clone(), args.criteria.clone())
        .map_err(|e| CliError::usage(e.to_string()))
}

pub fn predict(config: &RunConfig, args: &PredictArgs) -> Result<(), CliError> {
    let record = predict_record(config, args)?;
    config.require_backend()?;
    let resources = load_resources(config)?;
    let prompts = load_prompts(config)?;

    let mut recorder = None;
    let backend: Arc<dyn LlmBackend> = match config.backend {
        BackendKind::Replay => Arc::new(replay_backend(config.cassette.as_deref().expect("checked"))?),
        BackendKind::Live => Arc::new(http_backend(config)),
        BackendKind::Record => {
            let rec = Arc::new(RecordingBackend::new(http_backend(config)));
            recorder = Some(rec.clone());
            rec
        }
    };
    let engine = Engine::new(backend, resources).with_prompts(prompts).with_settings(settings(config));
    let outcome = engine.predict(&record);
    if let (Some(rec), Some(path)) = (&recorder, &config.cassette) {
        rec.save(path).map_err(|e| CliError::usage(format!("cannot write cassette {}: {e}", path.display())))?;
        log::info!("recorded {} exchange(s) to {}", rec.cassette().len(), path.display());
    }
    match outcome {
        Ok(result) => emit(config, &result.to_json(config.pretty)),
        Err(err) => Err(CliError::failed(err.to_string()).with_detail(to_json(&err, config.pretty))),
    }
}

// ---------------------------------------------------------------- evaluate

pub fn evaluate(config: &RunConfig, results: Option<&Path>) -> Result<(), CliError> {
    let Some(trials) = &config.trials else {
        return Err(CliError::usage("evaluate needs --trials"));
    };
    let records = load_trials(trials, IngestMode::Strict)?;
    config.require_backend()?;
    if matches!(config.backend, BackendKind::Replay) && !config.cassette.as_deref().is_some_and(Path::is_dir) {
        return Err(CliError::usage("evaluate replays from a directory of <trial_id>.json cassettes; --cassette must be a directory"));
    }
    if matches!(config.backend, BackendKind::Record) {
        let dir = config.cassette.as_deref().expect("checked");
        fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    let resources = load_resources(config)?;
    let prompts = load_prompts(config)?;
    let live: Arc<dyn LlmBackend> = match config.backend {
        BackendKind::Live => Arc::new(http_backend(config)),
        // per-trial backends are built below; this one is never called
        _ => Arc::new(ReplayBackend::new(Default::default())),
    };
    let engine = Engine::new(live, resources).with_prompts(prompts).with_settings(settings(config));

    let predict = |record: &TrialRecord| {
        let cassette = config.cassette.as_deref().map(|dir| dir.join(format!("{}.json", record.trial_id)));
        match config.backend {
            BackendKind::Live => engine.predict(record).map_err(|e| e.to_string()),
            BackendKind::Replay => {
                let path = cassette.expect("checked");
                let backend = ReplayBackend::load(&path).map_err(|e| format!("cassette {}: {e}", path.display()))?;
                engine.with_backend(Arc::new(backend)).predict(record).map_err(|e| e.to_string())
            }
            BackendKind::Record => {
                let path = cassette.expect("checked");
                let backend = Arc::new(RecordingBackend::new(http_backend(config)));
                let outcome = engine.with_backend(backend.clone()).predict(record).map_err(|e| e.to_string());
                backend.save(&path).map_err(|e| format!("cannot write cassette {}: {e}", path.display()))?;
                outcome
            }
        }
    };
    let evaluation = evaluate_dataset(&records, predict, config.parallelism, config.threshold).map_err(|e| match e {
        MetricsError::AllFailed(_) => CliError::failed(e.to_string()),
        other => CliError::usage(other.to_string()),
    })?;
    for failure in evaluation.failures() {
        log::warn!("trial {} failed: {}", failure.trial_id, failure.error.as_deref().unwrap_or_default());
    }
    if let Some(path) = results {
        write_file(path, &evaluation.trials_jsonl())?;
    }
    emit(config, &evaluation.metrics_json(config.pretty))
}

// ---------------------------------------------------------------- tools

fn full_registry(resources: &Resources, trial: Option<TrialRecord>) -> ToolRegistry {
    let mut registry = ToolRegistry::new();
    let mut tools = vec![
        drugbank_tool(resources.drugbank.clone()),
        hetionet_tool(resources.hetionet.clone(), resources.path_bounds),
        drug_statistics_tool(resources.drug_outcomes.clone()),
        disease_statistics_tool(resources.disease_outcomes.clone()),
    ];
    if let Some(record) = trial {
        tools.push(enrollment_tool(resources.enrollment.clone(), record));
    }
    for tool in tools {
        registry.register(tool).expect("built-in tools are valid and distinct");
    }
    registry
}

pub fn tool_list(config: &RunConfig) -> Result<(), CliError> {
    let placeholder = TrialRecord::new("-", Phase::Unknown, vec!["-".into()], vec!["-".into()], "").expect("valid");
    let registry = full_registry(&Resources::default(), Some(placeholder));
    if config.pretty {
        let lines: Vec<String> = registry
            .names()
            .into_iter()
            .map(|name| format!("{name}: {}", registry.get(name).expect("listed").description))
            .collect();
        emit(config, &lines.join("\n"))
    } else {
        emit(config, &to_json(&registry.schema_payload(), false))
    }
}

/// Parses `key=value`, typing the value by the schema property type.
fn parse_arg(raw: &str, properties: Option<&Map<String, Value>>) -> Result<(String, Value), CliError> {
    let (key, value) = raw.split_once('=').ok_or_else(|| CliError::usage(format!("--arg {raw:?} is not KEY=VALUE")))?;
    let declared = properties.and_then(|p| p.get(key)).and_then(|s| s.get("type")).and_then(Value::as_str);
    let typed = match declared {
        Some("integer") => value.parse::<i64>().map(Value::from).ok(),
        Some("number") => value.parse::<f64>().ok().and_then(|n| serde_json::Number::from_f64(n).map(Value::Number)),
        Some("boolean") => value.parse::<bool>().map(Value::Bool).ok(),
        Some("array") | Some("object") => serde_json::from_str(value).ok(),
        _ => Some(Value::String(value.to_string())),
    };
    let typed = typed.ok_or_else(|| {
        CliError::usage(format!("--arg {key}: {value:?} is not a valid {}", declared.unwrap_or("value")))
    })?;
    Ok((key.to_string(), typed))
}

pub fn tool_run(config: &RunConfig, name: &str, raw_args: &[String], trial: Option<&Path>) -> Result<(), CliError> {
    let trial = trial.map(load_trial_json).transpose()?;
    let resources = load_resources(config)?;
    let registry = full_registry(&resources, trial);
    let Some(tool) = registry.get(name) else {
        let hint = if name == trialagent_core::tools::ENROLLMENT_MODEL { " (it needs --trial)" } else { "" };
        return Err(CliError::usage(format!("unknown tool {name:?}{hint}; available: {}", registry.names().join(", "))));
    };
    let properties = tool.parameters.get("properties").and_then(Value::as_object);
    let arguments: Map<String, Value> = raw_args.iter().map(|raw| parse_arg(raw, properties)).collect::<Result<_, _>>()?;
    let call = ToolCallRequest::new("cli", name, Value::Object(arguments).to_string());
    let result = registry.dispatch(&call);
    let text = if config.pretty { result.content.clone() } else { to_json(&result, false) };
    emit(config, &text)?;
    if result.is_error {
        return Err(CliError::failed(format!("tool {name} reported an error")));
    }
    Ok(())
}

// ---------------------------------------------------------------- train-enrollment

#[derive(Serialize)]
struct TrainingSummary<'a> {
    out: &'a Path,
    label_source: trialagent_core::risk::LabelSource,
    examples: usize,
    positives: usize,
    training_accuracy: f64,
    final_loss: Option<f64>,
    nonzero_weights: usize,
}

pub fn train_enrollment_model(
    config: &RunConfig,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    l2: Option<f64>,
) -> Result<(), CliError> {
    let Some(trials) = &config.trials else {
        return Err(CliError::usage("train-enrollment needs --trials"));
    };
    let Some(out) = &config.out else {
        return Err(CliError::usage("train-enrollment needs --out for the model file"));
    };
    let defaults = TrainingConfig::default();
    let training = TrainingConfig {
        epochs: epochs.unwrap_or(defaults.epochs),
        learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
        l2: l2.unwrap_or(defaults.l2),
        ..defaults
    };
    let rates_valid = training.learning_rate > 0.0 && training.l2 >= 0.0;
    if training.epochs == 0 || !rates_valid {
        return Err(CliError::usage("--epochs and --learning-rate must be positive and --l2 non-negative"));
    }
    let records = load_trials(trials, IngestMode::Strict)?;
    let (examples, source) = enrollment_examples(&records);
    if examples.is_empty() {
        return Err(CliError::usage(format!("{} has no labeled trials to train on", trials.display())));
    }
    let trained = train_enrollment(&examples, source, &training).map_err(|e| match e {
        RiskError::SingleClass { .. } => CliError::failed(e.to_string()),
        other => CliError::usage(other.to_string()),
    })?;
    let model_json = trained.model.to_json().map_err(|e| CliError::failed(e.to_string()))?;
    write_file(out, &model_json)?;
    let summary = TrainingSummary {
        out,
        label_source: source,
        examples: trained.model.provenance.examples,
        positives: trained.model.provenance.positives,
        training_accuracy: trained.training_accuracy,
        final_loss: trained.loss_history.last().copied(),
        nonzero_weights: trained.model.weights.iter().filter(|w| **w != 0.0).count(),
    };
    println!("{}", to_json(&summary, config.pretty));
    Ok(())
}
