//! Exemplar-LDA re-ranking.
//!
//! Every image becomes a linear detector `w = Σ⁻¹ (x − μ₀)` whitened against
//! background statistics of unrelated images; each image is then scored by
//! the detectors of the other images in its set.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::PurifyError;
use crate::vision::linear::dot;
use crate::vision::FeatureVector;

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_KEEP: usize = 100;

/// Background mean and regularized covariance, with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct BackgroundStats {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    regularizer: f64,
}

impl BackgroundStats {
    /// Wraps a given mean and covariance. Fails unless the covariance is
    /// symmetric positive-definite.
    pub fn from_parts(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self, PurifyError> {
        let dim = mean.len();
        if covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(PurifyError::DimensionMismatch {
                expected: dim,
                found: covariance.nrows(),
            });
        }
        let factor = Cholesky::new(covariance.clone()).ok_or(PurifyError::NotPositiveDefinite)?;
        Ok(Self {
            mean,
            covariance,
            factor,
            regularizer: 0.0,
        })
    }

    /// Σ = I, μ₀ = 0.
    pub fn identity(dim: usize) -> Self {
        Self::from_parts(vec![0.0; dim], DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn regularizer(&self) -> f64 {
        self.regularizer
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Solves Σ w = v.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(v);
        self.factor.solve(&rhs).as_slice().to_vec()
    }
}

/// Sample mean and unbiased sample covariance of `negatives`, plus
/// `λI` with `λ = max(0.01 · trace(Σ) / dim, 1e-6)`.
pub fn background_stats(negatives: &[FeatureVector]) -> Result<BackgroundStats, PurifyError> {
    if negatives.len() < 2 {
        return Err(PurifyError::InsufficientNegatives(negatives.len()));
    }
    let dim = negatives[0].len();
    if let Some(bad) = negatives.iter().find(|x| x.len() != dim) {
        return Err(PurifyError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let n = negatives.len();
    let mut mean = vec![0.0; dim];
    for x in negatives {
        for (m, v) in mean.iter_mut().zip(x.as_slice()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // Centered data as a dim x n matrix; Σ = C Cᵀ / (n − 1).
    let centered = DMatrix::from_fn(dim, n, |r, c| negatives[c].as_slice()[r] - mean[r]);
    let mut covariance = (&centered * centered.transpose()) / (n - 1) as f64;
    // Force exact symmetry.
    for r in 0..dim {
        for c in r + 1..dim {
            let v = 0.5 * (covariance[(r, c)] + covariance[(c, r)]);
            covariance[(r, c)] = v;
            covariance[(c, r)] = v;
        }
    }
    let regularizer = (0.01 * covariance.trace() / dim as f64).max(1e-6);
    for i in 0..dim {
        covariance[(i, i)] += regularizer;
    }
    let mut stats = BackgroundStats::from_parts(mean, covariance)?;
    stats.regularizer = regularizer;
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExemplarDetector {
    pub weights: Vec<f64>,
    /// Index of the source exemplar within its image set.
    pub exemplar: usize,
}

impl ExemplarDetector {
    pub fn response(&self, x: &FeatureVector) -> f64 {
        dot(&self.weights, x.as_slice())
    }
}

pub fn train_exemplar_lda(
    exemplar: usize,
    x: &FeatureVector,
    stats: &BackgroundStats,
) -> Result<ExemplarDetector, PurifyError> {
    if x.len() != stats.dim() {
        return Err(PurifyError::DimensionMismatch {
            expected: stats.dim(),
            found: x.len(),
        });
    }
    let diff: Vec<f64> = x.as_slice().iter().zip(stats.mean()).map(|(a, m)| a - m).collect();
    Ok(ExemplarDetector {
        weights: stats.solve(&diff),
        exemplar,
    })
}

/// One detector per image, `exemplar` set to the image index.
pub fn train_detectors(images: &[FeatureVector], stats: &BackgroundStats) -> Result<Vec<ExemplarDetector>, PurifyError> {
    images
        .iter()
        .enumerate()
        .map(|(i, x)| train_exemplar_lda(i, x, stats))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedImage {
    /// Index into the input list.
    pub index: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EldaSelection {
    /// Best-first, at most `keep` entries.
    pub kept: Vec<RankedImage>,
    /// Remaining images, best-first.
    pub dropped: Vec<RankedImage>,
}

/// Mean of the `top_k` largest responses to `x` among detectors other than
/// the one built from image `index`. Zero when no other detector exists.
pub fn exemplar_score(index: usize, x: &FeatureVector, detectors: &[ExemplarDetector], top_k: usize) -> f64 {
    let mut responses: Vec<f64> = detectors
        .iter()
        .filter(|d| d.exemplar != index)
        .map(|d| d.response(x))
        .collect();
    if responses.is_empty() || top_k == 0 {
        return 0.0;
    }
    responses.sort_by(|a, b| b.total_cmp(a));
    let k = top_k.min(responses.len());
    responses[..k].iter().sum::<f64>() / k as f64
}

/// Ranks images by [`exemplar_score`] (descending, ties by input order) and
/// keeps the first `keep`.
pub fn elda_select(
    images: &[FeatureVector],
    detectors: &[ExemplarDetector],
    keep: usize,
    top_k: usize,
) -> EldaSelection {
    let mut ranked: Vec<RankedImage> = images
        .iter()
        .enumerate()
        .map(|(index, x)| RankedImage {
            index,
            score: exemplar_score(index, x, detectors, top_k),
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    let dropped = ranked.split_off(keep.min(ranked.len()));
    EldaSelection { kept: ranked, dropped }
}
