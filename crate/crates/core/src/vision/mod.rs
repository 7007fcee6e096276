//! Visual side of variation purification: HOG features, per-variation linear
//! classifiers, saliency scores and visual grouping.

use thiserror::Error;

pub mod hog;
pub mod image;
pub mod linear;
pub mod saliency;

pub use self::hog::{extract_hog, HogLayout};
pub use self::image::GrayImage;
pub use self::linear::{train_linear_classifier, LinearClassifier, SvmConfig};
pub use self::saliency::{
    filter_salient, merge_visual_groups, saliency_score, visual_edge, MergeMode, SaliencyReport, SplitSizes,
    VariationImageSplit, VisualGraph, VisualGroup,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("undecodable image: {0}")]
    UndecodableImage(String),
    #[error("degenerate training set: {positives} positives, {negatives} negatives")]
    DegenerateTrainingSet { positives: usize, negatives: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Dense real-valued descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}
