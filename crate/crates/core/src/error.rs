use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("invalid trial record {trial_id:?}: {message}")]
    InvalidRecord { trial_id: String, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("could not resolve {entity} {name:?} in the knowledge graph")]
    Unresolved { entity: &'static str, name: String },
    #[error("invalid path search bounds: {0}")]
    Bounds(String),
}

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("trial {0} has no outcome label")]
    Unlabeled(String),
    #[error("training data must contain both classes (got {positives} positive of {total})")]
    SingleClass { positives: usize, total: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("external predictor error: {0}")]
    External(String),
    #[error("model file error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider rejected request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("replay cassette exhausted at position {position}; request fingerprint {actual}")]
    ReplayExhausted { position: usize, actual: String },
    #[error("replay mismatch at position {position}: expected fingerprint {expected}, got {actual}")]
    ReplayMismatch { position: usize, expected: String, actual: String },
    #[error("backend misconfigured: {0}")]
    Config(String),
    #[error("cassette io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cassette format error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("tool {0:?} is already registered")]
    Duplicate(String),
    #[error("tool {name:?}: required parameter {parameter:?} is not declared in properties")]
    UndeclaredRequired { name: String, parameter: String },
    #[error("tool {name:?}: parameters schema must be an object schema ({reason})")]
    BadSchema { name: String, reason: String },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot compute metrics over zero examples")]
    Empty,
    #[error("example {trial_id:?} has score {score} outside [0, 1]")]
    ScoreOutOfRange { trial_id: String, score: f64 },
    #[error("every trial failed ({0} failures)")]
    AllFailed(usize),
    #[error("trial {0} has no outcome label")]
    Unlabeled(String),
    #[error("parallelism must be at least 1")]
    Parallelism,
}
