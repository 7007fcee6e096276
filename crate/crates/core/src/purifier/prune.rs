//! Progressive probabilistic pruning of a positive image set.

use serde::{Deserialize, Serialize};

use super::provider::{ClassScorePair, ScoreProvider};
use super::PurifyError;
use crate::rng::SplitMix64;
use crate::vision::FeatureVector;

/// Probability of removing an image with class scores `scores`:
/// `max(0, 2 − exp(|S1 − S2|))`, clamped to `[0, 1]`.
pub fn removal_probability(scores: &ClassScorePair) -> f64 {
    (2.0 - scores.gap().exp()).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    pub max_rounds: usize,
    /// Stop once a round removes less than this fraction of its input.
    pub min_removal_fraction: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            max_rounds: 3,
            min_removal_fraction: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// A round removed fewer images than the configured fraction.
    Converged,
    MaxRounds,
    /// Every image was removed.
    EmptySurvivorSet,
}

/// One scored image within a round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    /// Index into the original image list.
    pub image: usize,
    pub scores: ClassScorePair,
    pub probability: f64,
    pub draw: f64,
    pub removed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneRound {
    pub round: usize,
    pub decisions: Vec<PruneDecision>,
}

impl PruneRound {
    pub fn input_len(&self) -> usize {
        self.decisions.len()
    }

    pub fn removed(&self) -> impl Iterator<Item = &PruneDecision> {
        self.decisions.iter().filter(|d| d.removed)
    }

    pub fn kept(&self) -> impl Iterator<Item = &PruneDecision> {
        self.decisions.iter().filter(|d| !d.removed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneTrace {
    pub rounds: Vec<PruneRound>,
    pub stop: StopReason,
}

impl PruneTrace {
    /// Round (1-based) in which `image` was removed, if any.
    pub fn removal_round(&self, image: usize) -> Option<&PruneDecision> {
        self.rounds
            .iter()
            .flat_map(|r| r.removed())
            .find(|d| d.image == image)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneOutcome {
    /// Surviving indices into the input list, ascending.
    pub kept: Vec<usize>,
    pub trace: PruneTrace,
}

/// Retrain, score, sample; repeated until a round removes less than the
/// configured fraction or `max_rounds` is reached.
///
/// Each round draws one `u` in `[0, 1)` per surviving image, in index order,
/// from a single SplitMix64 stream seeded with `seed`; an image is removed
/// iff `u < P`. Negatives are never pruned.
pub fn progressive_prune(
    images: &[FeatureVector],
    negatives: &[FeatureVector],
    provider: &mut dyn ScoreProvider,
    seed: u64,
    config: &PruneConfig,
) -> Result<PruneOutcome, PurifyError> {
    let mut rng = SplitMix64::new(seed);
    let mut kept: Vec<usize> = (0..images.len()).collect();
    let mut rounds = Vec::new();
    let negative_refs: Vec<&FeatureVector> = negatives.iter().collect();

    if kept.is_empty() {
        return Err(PurifyError::EmptySurvivorSet(Box::new(PruneTrace {
            rounds,
            stop: StopReason::EmptySurvivorSet,
        })));
    }

    let stop = loop {
        let round = rounds.len() + 1;
        let current: Vec<&FeatureVector> = kept.iter().map(|&i| &images[i]).collect();
        provider.train(&current, &negative_refs)?;
        let scores = provider.score_all(&current)?;
        if scores.len() != current.len() {
            return Err(PurifyError::Provider(super::ProviderError::InvalidScores(format!(
                "expected {} pairs, got {}",
                current.len(),
                scores.len()
            ))));
        }
        let decisions: Vec<PruneDecision> = kept
            .iter()
            .zip(scores)
            .map(|(&image, scores)| {
                let probability = removal_probability(&scores);
                let draw = rng.next_f64();
                PruneDecision {
                    image,
                    scores,
                    probability,
                    draw,
                    removed: draw < probability,
                }
            })
            .collect();
        let removed = decisions.iter().filter(|d| d.removed).count();
        let input = decisions.len();
        kept = decisions.iter().filter(|d| !d.removed).map(|d| d.image).collect();
        rounds.push(PruneRound { round, decisions });

        if kept.is_empty() {
            break StopReason::EmptySurvivorSet;
        }
        if (removed as f64) < config.min_removal_fraction * input as f64 {
            break StopReason::Converged;
        }
        if round >= config.max_rounds {
            break StopReason::MaxRounds;
        }
    };

    let trace = PruneTrace { rounds, stop };
    if stop == StopReason::EmptySurvivorSet {
        return Err(PurifyError::EmptySurvivorSet(Box::new(trace)));
    }
    Ok(PruneOutcome { kept, trace })
}
