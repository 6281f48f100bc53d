//! Historical drug/disease risk tables, the shared name matcher, and the
//! enrollment-success predictor (reference hashed-feature logistic model or
//! an external HTTP service).

mod enrollment;
mod features;
mod logistic;
mod matching;
mod table;

pub use crate::error::RiskError;
pub use enrollment::{
    enrollment_examples, train_enrollment, EnrollmentModel, EnrollmentPredictor, ExternalPredictor, LabelSource,
    Provenance, TrainedEnrollment, FEATURE_SPEC_VERSION,
};
pub use features::{bucket_of, featurize, fnv1a64, tokens, FeatureVector, DENSE_FEATURES, FEATURE_DIM, HASH_BUCKETS};
pub use logistic::{objective, sigmoid, train_logistic, LogisticModel, Objective, TrainingConfig, TrainingRun};
pub use matching::{fuzzy_match, fuzzy_match_with_threshold, similarity, RISK_TABLE_THRESHOLD};
pub use table::{EntityKind, OutcomeCounts, OutcomeTable, RiskScore};
