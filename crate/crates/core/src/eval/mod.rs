//! Classification metrics and the batch evaluation harness.
//!
//! ROC-AUC is the Mann-Whitney statistic (ties count one half). PR-AUC is
//! average precision: walk examples by descending score, ties broken by
//! trial id, and add precision-at-rank at every positive.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::agent::PredictionResult;
pub use crate::error::MetricsError;
use crate::trial::TrialRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub trial_id: String,
    pub score: f64,
    pub label: bool,
}

impl ScoredExample {
    pub fn new(trial_id: impl Into<String>, score: f64, label: bool) -> Self {
        ScoredExample { trial_id: trial_id.into(), score, label }
    }
}

/// `roc_auc` and `pr_auc` are `None` (JSON `null`) unless both classes occur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub positives: usize,
    pub failures: usize,
    pub accuracy: f64,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Mann-Whitney U via midranks.
fn roc_auc(examples: &[ScoredExample], positives: usize) -> f64 {
    let mut order: Vec<&ScoredExample> = examples.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && order[end + 1].score == order[start].score {
            end += 1;
        }
        // 1-based ranks start+1 ..= end+1 share their mean
        let midrank = (start + end + 2) as f64 / 2.0;
        positive_rank_sum += midrank * order[start..=end].iter().filter(|e| e.label).count() as f64;
        start = end + 1;
    }
    let p = positives as f64;
    let negatives = (examples.len() - positives) as f64;
    (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * negatives)
}

fn ranking_order(a: &ScoredExample, b: &ScoredExample) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.trial_id.cmp(&b.trial_id)).then_with(|| b.label.cmp(&a.label))
}

fn average_precision(examples: &[ScoredExample], positives: usize) -> f64 {
    let mut order: Vec<&ScoredExample> = examples.iter().collect();
    order.sort_by(|a, b| ranking_order(a, b));
    let mut hits = 0;
    let mut sum = 0.0;
    for (rank, example) in order.iter().enumerate() {
        if example.label {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / positives as f64
}

pub fn compute_metrics(examples: &[ScoredExample], threshold: f64) -> Result<MetricsReport, MetricsError> {
    if examples.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(bad) = examples.iter().find(|e| !(0.0..=1.0).contains(&e.score)) {
        return Err(MetricsError::ScoreOutOfRange { trial_id: bad.trial_id.clone(), score: bad.score });
    }
    let n = examples.len();
    let positives = examples.iter().filter(|e| e.label).count();
    let (mut tp, mut fp, mut fn_, mut correct) = (0, 0, 0, 0);
    for e in examples {
        let predicted = e.score >= threshold;
        match (predicted, e.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        correct += usize::from(predicted == e.label);
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let both_classes = positives > 0 && positives < n;
    Ok(MetricsReport {
        n,
        positives,
        failures: 0,
        accuracy: ratio(correct, n),
        roc_auc: both_classes.then(|| roc_auc(examples, positives)),
        pr_auc: both_classes.then(|| average_precision(examples, positives)),
        precision,
        recall,
        f1,
    })
}

/// One line of the per-trial results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvaluation {
    pub trial_id: String,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    /// Every trial, failures included, sorted by trial id.
    pub trials: Vec<TrialEvaluation>,
}

impl Evaluation {
    pub fn failures(&self) -> impl Iterator<Item = &TrialEvaluation> {
        self.trials.iter().filter(|t| t.error.is_some())
    }

    pub fn metrics_json(&self, pretty: bool) -> String {
        let text = if pretty { serde_json::to_string_pretty(&self.metrics) } else { serde_json::to_string(&self.metrics) };
        text.expect("metrics always serialize")
    }

    pub fn trials_jsonl(&self) -> String {
        self.trials.iter().map(|t| serde_json::to_string(t).expect("trial lines serialize") + "\n").collect()
    }
}

/// Runs `predict` over every record on at most `parallelism` threads.
/// Failed trials are listed and left out of the metrics; the report is
/// over the trials that produced a prediction. Output order is by trial
/// id whatever the completion order.
pub fn evaluate_dataset<F>(
    records: &[TrialRecord],
    predict: F,
    parallelism: usize,
    threshold: f64,
) -> Result<Evaluation, MetricsError>
where
    F: Fn(&TrialRecord) -> Result<PredictionResult, String> + Sync,
{
    if parallelism == 0 {
        return Err(MetricsError::Parallelism);
    }
    let labels: Vec<u8> = records
        .iter()
        .map(|r| r.label.map(|l| l.as_u8()).ok_or_else(|| MetricsError::Unlabeled(r.trial_id.clone())))
        .collect::<Result<_, _>>()?;
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }

    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(records.len()));
    thread::scope(|scope| {
        for _ in 0..parallelism.min(records.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, AtomicOrdering::SeqCst);
                let Some(record) = records.get(i) else { break };
                let outcome = predict(record);
                let entry = match outcome {
                    Ok(result) => TrialEvaluation {
                        trial_id: record.trial_id.clone(),
                        label: labels[i],
                        probability: Some(result.probability),
                        decision: Some(result.decision),
                        error: None,
                    },
                    Err(message) => {
                        log::warn!("trial {} failed: {message}", record.trial_id);
                        TrialEvaluation {
                            trial_id: record.trial_id.clone(),
                            label: labels[i],
                            probability: None,
                            decision: None,
                            error: Some(message),
                        }
                    }
                };
                done.lock().unwrap_or_else(|p| p.into_inner()).push(entry);
            });
        }
    });
    let mut trials = done.into_inner().unwrap_or_else(|p| p.into_inner());
    trials.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));

    let scored: Vec<ScoredExample> = trials
        .iter()
        .filter_map(|t| t.probability.map(|p| ScoredExample::new(t.trial_id.clone(), p, t.label == 1)))
        .collect();
    let failures = trials.len() - scored.len();
    if scored.is_empty() {
        return Err(MetricsError::AllFailed(failures));
    }
    let mut metrics = compute_metrics(&scored, threshold)?;
    metrics.failures = failures;
    Ok(Evaluation { metrics, trials })
}
