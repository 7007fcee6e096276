//! Linear SVM trained with a deterministic full-batch subgradient schedule.
//!
//! Minimizes `lambda/2 |w|^2 + mean_i hinge(y_i (w.x_i + b))` with step
//! `1 / (lambda t)` for a fixed number of epochs. The bias is trained as the
//! weight of a constant unit feature, so it shrinks with `w`. Examples are visited in
//! input order (positives, then negatives) and every reduction is sequential,
//! so identical inputs give bitwise-identical weights.

use serde::{Deserialize, Serialize};

use super::{FeatureVector, VisionError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
}

impl SvmConfig {
    /// `lambda = 1 / n` for a nominal training-set size `n`.
    pub fn for_training_size(n: usize) -> Self {
        Self {
            lambda: 1.0 / n.max(1) as f64,
            epochs: 200,
        }
    }
}

impl Default for SvmConfig {
    /// Sized for the default 75 positive + 25 negative training images.
    fn default() -> Self {
        Self::for_training_size(100)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

impl LinearClassifier {
    pub fn decision(&self, x: &FeatureVector) -> f64 {
        dot(&self.weights, x.as_slice()) + self.bias
    }

    /// Positive iff the decision value is strictly positive.
    pub fn predict(&self, x: &FeatureVector) -> bool {
        self.decision(x) > 0.0
    }

    /// Fraction of `positives` predicted positive plus `negatives` predicted
    /// negative, over the pooled count.
    pub fn accuracy(&self, positives: &[FeatureVector], negatives: &[FeatureVector]) -> f64 {
        let total = positives.len() + negatives.len();
        if total == 0 {
            return 0.0;
        }
        let correct = positives.iter().filter(|x| self.predict(x)).count()
            + negatives.iter().filter(|x| !self.predict(x)).count();
        correct as f64 / total as f64
    }
}

pub fn train_linear_classifier(
    positives: &[FeatureVector],
    negatives: &[FeatureVector],
    config: &SvmConfig,
) -> Result<LinearClassifier, VisionError> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(VisionError::DegenerateTrainingSet {
            positives: positives.len(),
            negatives: negatives.len(),
        });
    }
    let dim = positives[0].len();
    if let Some(bad) = positives.iter().chain(negatives).find(|x| x.len() != dim) {
        return Err(VisionError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if !(config.lambda > 0.0) {
        return Err(VisionError::InvalidConfig(format!("lambda must be positive, got {}", config.lambda)));
    }

    let m = (positives.len() + negatives.len()) as f64;
    let examples: Vec<(&[f64], f64)> = positives
        .iter()
        .map(|x| (x.as_slice(), 1.0))
        .chain(negatives.iter().map(|x| (x.as_slice(), -1.0)))
        .collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut grad = vec![0.0; dim];
    for t in 1..=config.epochs {
        let t = t as f64;
        let step = 1.0 / (config.lambda * t);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut bias_grad = 0.0;
        for &(x, y) in &examples {
            if y * (dot(&w, x) + b) < 1.0 {
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += y * xi;
                }
                bias_grad += y;
            }
        }
        // w <- (1 - step * lambda) w + step * mean violator subgradient
        let shrink = 1.0 - 1.0 / t;
        let scale = step / m;
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi = shrink * *wi + scale * gi;
        }
        b = shrink * b + scale * bias_grad;
    }
    Ok(LinearClassifier { weights: w, bias: b })
}
