use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::logistic::{train_logistic, LogisticModel, TrainingConfig};
use super::{featurize, FeatureVector, RiskError, FEATURE_DIM};
use crate::trial::{Label, TrialRecord};

/// Version of the featurization the model weights are tied to.
pub const FEATURE_SPEC_VERSION: u32 = 1;

/// Anything that can estimate the probability that a trial enrolls successfully.
pub trait EnrollmentPredictor: Send + Sync {
    fn success_probability(&self, record: &TrialRecord) -> Result<f64, RiskError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Trained on the `enroll_label` column.
    EnrollLabel,
    /// No enrollment labels were available; the trial outcome label stood in.
    OutcomeLabelProxy,
    /// Hand-set weights, not fit to data.
    Authored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub label_source: LabelSource,
    pub examples: usize,
    pub positives: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Reference enrollment predictor: logistic regression over [`featurize`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentModel {
    pub version: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    weights: Vec<(usize, f64)>,
    bias: f64,
    provenance: Provenance,
}

impl EnrollmentModel {
    pub fn zeros(provenance: Provenance) -> Self {
        EnrollmentModel { version: FEATURE_SPEC_VERSION, weights: vec![0.0; FEATURE_DIM], bias: 0.0, provenance }
    }

    pub fn features(record: &TrialRecord) -> FeatureVector {
        featurize(&record.segmented_criteria(), &record.drugs, &record.diseases)
    }

    pub fn predict(&self, record: &TrialRecord) -> f64 {
        let logistic = LogisticModel { weights: self.weights.clone(), bias: self.bias };
        logistic.predict(&Self::features(record))
    }

    /// JSON with sparse `[index, value]` weight pairs (zeros omitted).
    pub fn to_json(&self) -> Result<String, RiskError> {
        let file = ModelFile {
            version: self.version,
            weights: self.weights.iter().copied().enumerate().filter(|&(_, w)| w != 0.0).collect(),
            bias: self.bias,
            provenance: self.provenance.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self, RiskError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != FEATURE_SPEC_VERSION {
            return Err(RiskError::InvalidModel(format!(
                "model feature version {} is not supported (expected {FEATURE_SPEC_VERSION})",
                file.version
            )));
        }
        let mut weights = vec![0.0; FEATURE_DIM];
        for (index, value) in file.weights {
            if index >= FEATURE_DIM {
                return Err(RiskError::InvalidModel(format!("weight index {index} out of range")));
            }
            if !value.is_finite() {
                return Err(RiskError::InvalidModel(format!("weight {index} is not finite")));
            }
            weights[index] = value;
        }
        if !file.bias.is_finite() {
            return Err(RiskError::InvalidModel("bias is not finite".into()));
        }
        Ok(EnrollmentModel { version: file.version, weights, bias: file.bias, provenance: file.provenance })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RiskError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| RiskError::InvalidModel(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

impl EnrollmentPredictor for EnrollmentModel {
    fn success_probability(&self, record: &TrialRecord) -> Result<f64, RiskError> {
        Ok(self.predict(record))
    }
}

/// Picks enrollment labels: `enroll_label` where any record has one,
/// otherwise the outcome label as a proxy. Records without the chosen label are skipped.
pub fn enrollment_examples(records: &[TrialRecord]) -> (Vec<(&TrialRecord, Label)>, LabelSource) {
    let has_enroll = records.iter().any(|r| r.enroll_label.is_some());
    let source = if has_enroll { LabelSource::EnrollLabel } else { LabelSource::OutcomeLabelProxy };
    let examples = records
        .iter()
        .filter_map(|r| {
            let label = if has_enroll { r.enroll_label } else { r.label };
            label.map(|l| (r, l))
        })
        .collect();
    (examples, source)
}

#[derive(Debug, Clone)]
pub struct TrainedEnrollment {
    pub model: EnrollmentModel,
    pub training_accuracy: f64,
    pub loss_history: Vec<f64>,
}

pub fn train_enrollment(
    examples: &[(&TrialRecord, Label)],
    label_source: LabelSource,
    config: &TrainingConfig,
) -> Result<TrainedEnrollment, RiskError> {
    let features: Vec<FeatureVector> = examples.iter().map(|(r, _)| EnrollmentModel::features(r)).collect();
    let labels: Vec<bool> = examples.iter().map(|(_, l)| l.is_success()).collect();
    if examples.len() < 2 {
        return Err(RiskError::SingleClass { positives: labels.iter().filter(|&&y| y).count(), total: labels.len() });
    }
    let run = train_logistic(&features, &labels, FEATURE_DIM, config)?;
    let correct = features
        .iter()
        .zip(&labels)
        .filter(|(x, &y)| (run.model.predict(x) >= 0.5) == y)
        .count();
    let provenance = Provenance {
        label_source,
        examples: labels.len(),
        positives: labels.iter().filter(|&&y| y).count(),
        training: Some(*config),
        note: None,
    };
    Ok(TrainedEnrollment {
        training_accuracy: correct as f64 / labels.len() as f64,
        loss_history: run.loss_history,
        model: EnrollmentModel {
            version: FEATURE_SPEC_VERSION,
            weights: run.model.weights,
            bias: run.model.bias,
            provenance,
        },
    })
}

/// Delegates to an HTTP service: POST `{trial_id, drugs, diseases, criteria}`, reply `{probability}`.
pub struct ExternalPredictor {
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    trial_id: &'a str,
    drugs: &'a [String],
    diseases: &'a [String],
    criteria: &'a str,
}

#[derive(Deserialize)]
struct ExternalResponse {
    probability: f64,
}

impl ExternalPredictor {
    pub fn new(url: impl Into<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .unwrap_or_else(|_| reqwest::blocking::Client::new());
        ExternalPredictor { url: url.into(), client }
    }
}

impl EnrollmentPredictor for ExternalPredictor {
    fn success_probability(&self, record: &TrialRecord) -> Result<f64, RiskError> {
        let body = ExternalRequest {
            trial_id: &record.trial_id,
            drugs: &record.drugs,
            diseases: &record.diseases,
            criteria: &record.criteria,
        };
        let response = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| RiskError::External(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| RiskError::External(e.to_string()))?;
        if !status.is_success() {
            return Err(RiskError::External(format!("HTTP {}: {}", status.as_u16(), text.trim())));
        }
        let parsed: ExternalResponse =
            serde_json::from_str(&text).map_err(|e| RiskError::External(format!("bad response: {e}")))?;
        if !(0.0..=1.0).contains(&parsed.probability) {
            return Err(RiskError::External(format!("probability {} outside [0, 1]", parsed.probability)));
        }
        Ok(parsed.probability)
    }
}
