//! Image-set purification: exemplar-LDA re-ranking followed by progressive
//! probabilistic pruning.

use thiserror::Error;

pub mod elda;
pub mod provider;
pub mod prune;

pub use self::elda::{
    background_stats, elda_select, train_detectors, train_exemplar_lda, BackgroundStats, EldaSelection,
    ExemplarDetector, RankedImage,
};
pub use self::provider::{
    ClassScorePair, CommandProvider, LogisticConfig, LogisticProvider, ProviderError, ProviderSpec, ScoreProvider,
};
pub use self::prune::{progressive_prune, removal_probability, PruneConfig, PruneOutcome, PruneTrace, StopReason};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PurifyError {
    #[error("need at least 2 negatives for background statistics, got {0}")]
    InsufficientNegatives(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("background covariance is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("every image was removed")]
    EmptySurvivorSet(Box<PruneTrace>),
}
