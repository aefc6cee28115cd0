//! Label-smoothed softmax regression from featurized context to response
//! class, with confidence-based opt-out and evaluation metrics.

mod checkpoint;
mod features;
mod metrics;
mod model;
mod train;

pub use checkpoint::{features_path, read_model, write_model, Checkpoint};
pub use features::{FeatureExtractor, FeatureMode, SparseVector};
pub use metrics::{
    accuracy, calibrate_opt_out, majority_baseline, majority_class, opt_out_curve, score, threshold_grid,
    unique_per_100, Abstentions, Calibration, OptOutPoint, Scored,
};
pub use model::{
    log_softmax, smoothed_targets, softmax, ClassifierModel, Gradients, Prediction, DEFAULT_SMOOTHING,
};
pub use train::{train, TrainConfig, TrainReport};

use crate::error::Result;
use crate::responsebank::LabeledExample;

/// Featurize labeled examples.
pub fn featurize(extractor: &FeatureExtractor, examples: &[LabeledExample]) -> Vec<(SparseVector, u32)> {
    examples
        .iter()
        .map(|e| (extractor.extract(&e.context), e.class_id))
        .collect()
}

/// Fit a tf-idf featurizer on the examples' contexts.
pub fn fit_tfidf_features(examples: &[LabeledExample]) -> Result<FeatureExtractor> {
    FeatureExtractor::fit_tfidf(examples.iter().map(|e| e.context.as_slice()))
}
