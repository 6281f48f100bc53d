//! Class-weighted L2 logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{FeatureVector, RiskError};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Weight each class by `n / (2 * n_class)`.
    pub balance_classes: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { learning_rate: 0.1, epochs: 500, l2: 1e-4, balance_classes: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        LogisticModel { weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn logit(&self, x: &FeatureVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Loss value and gradient at a point.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    pub grad_weights: Vec<f64>,
    pub grad_bias: f64,
}

/// Weighted mean cross-entropy plus `l2 / 2 * ||w||^2` (bias unpenalized).
/// `sample_weights` are normalized by their sum.
pub fn objective(
    model: &LogisticModel,
    features: &[FeatureVector],
    labels: &[bool],
    sample_weights: &[f64],
    l2: f64,
) -> Objective {
    let total_weight: f64 = sample_weights.iter().sum();
    let mut loss = 0.0;
    let mut grad_weights: Vec<f64> = model.weights.iter().map(|w| l2 * w).collect();
    let mut grad_bias = 0.0;
    for ((x, &y), &w) in features.iter().zip(labels).zip(sample_weights) {
        let z = model.logit(x);
        let target = if y { 1.0 } else { 0.0 };
        let scale = w / total_weight;
        loss += scale * (softplus(z) - target * z);
        let residual = scale * (sigmoid(z) - target);
        for (i, v) in x.iter() {
            grad_weights[i] += residual * v;
        }
        grad_bias += residual;
    }
    loss += 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    Objective { loss, grad_weights, grad_bias }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: LogisticModel,
    /// Loss before the first update followed by the loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl TrainingRun {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap_or(&f64::NAN)
    }
}

const MAX_HALVINGS: usize = 60;

/// Fits from zero-initialized weights. Each epoch tries the configured
/// learning rate first and halves it until the loss does not increase, so
/// the loss history is non-increasing.
pub fn train_logistic(
    features: &[FeatureVector],
    labels: &[bool],
    dim: usize,
    config: &TrainingConfig,
) -> Result<TrainingRun, RiskError> {
    if features.len() != labels.len() {
        return Err(RiskError::InvalidModel(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(bad) = features.iter().filter_map(FeatureVector::max_index).find(|&i| i >= dim) {
        return Err(RiskError::InvalidModel(format!("feature index {bad} exceeds dimension {dim}")));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(RiskError::SingleClass { positives, total: labels.len() });
    }
    let n = labels.len() as f64;
    let sample_weights: Vec<f64> = if config.balance_classes {
        let (w_pos, w_neg) = (n / (2.0 * positives as f64), n / (2.0 * (labels.len() - positives) as f64));
        labels.iter().map(|&y| if y { w_pos } else { w_neg }).collect()
    } else {
        vec![1.0; labels.len()]
    };

    let mut model = LogisticModel::zeros(dim);
    let mut current = objective(&model, features, labels, &sample_weights, config.l2);
    let mut loss_history = vec![current.loss];
    for _ in 0..config.epochs {
        let mut step = config.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = LogisticModel {
                weights: model.weights.iter().zip(&current.grad_weights).map(|(w, g)| w - step * g).collect(),
                bias: model.bias - step * current.grad_bias,
            };
            let next = objective(&candidate, features, labels, &sample_weights, config.l2);
            if next.loss <= current.loss {
                accepted = Some((candidate, next));
                break;
            }
            step *= 0.5;
        }
        // with no descent step left the model is at a minimum up to floating-point resolution
        if let Some((candidate, next)) = accepted {
            model = candidate;
            current = next;
        }
        loss_history.push(current.loss);
    }
    if model.weights.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
        return Err(RiskError::InvalidModel("training produced non-finite weights".into()));
    }
    Ok(TrainingRun { model, loss_history })
}
