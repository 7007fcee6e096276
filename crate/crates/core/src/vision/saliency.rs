//! Per-variation train/validation splits, visual saliency scores and the
//! visual-similarity graph between variations.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::linear::LinearClassifier;
use super::{FeatureVector, VisionError};
use crate::rng::SplitMix64;
use crate::union_find::UnionFind;

pub const DEFAULT_SALIENCY_THRESHOLD: f64 = 0.7;
pub const DEFAULT_VISUAL_SLACK: f64 = 0.1;

/// Absorbs rounding in `E_ij + slack` so exact ties still merge.
const SLACK_TOLERANCE: f64 = 1e-12;

/// Train/validation sizes drawn from a pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
}

impl SplitSizes {
    /// Sizes actually used for a pool of `available` items. A pool smaller
    /// than `train + validation` is split in the configured proportion with
    /// at least one item on each side.
    pub fn for_pool(&self, available: usize) -> Result<SplitSizes, VisionError> {
        let wanted = self.train + self.validation;
        if available < 2 || wanted == 0 {
            return Err(VisionError::DegenerateTrainingSet {
                positives: available,
                negatives: 0,
            });
        }
        if available >= wanted {
            return Ok(*self);
        }
        let validation = ((available * self.validation) as f64 / wanted as f64)
            .round()
            .clamp(1.0, (available - 1) as f64) as usize;
        Ok(SplitSizes {
            train: available - validation,
            validation,
        })
    }

    /// Shuffles `pool` with `rng` and returns (train, validation). Items past
    /// `train + validation` are unused.
    pub fn split(
        &self,
        pool: &[FeatureVector],
        rng: &mut SplitMix64,
    ) -> Result<(Vec<FeatureVector>, Vec<FeatureVector>), VisionError> {
        let sizes = self.for_pool(pool.len())?;
        let mut order: Vec<usize> = (0..pool.len()).collect();
        rng.shuffle(&mut order);
        let train = order[..sizes.train].iter().map(|&i| pool[i].clone()).collect();
        let validation = order[sizes.train..sizes.train + sizes.validation]
            .iter()
            .map(|&i| pool[i].clone())
            .collect();
        Ok((train, validation))
    }
}

/// Positive and negative train/validation sets for one variation.
#[derive(Clone, Debug)]
pub struct VariationImageSplit {
    pub train_positive: Vec<FeatureVector>,
    pub validation_positive: Vec<FeatureVector>,
    pub train_negative: Vec<FeatureVector>,
    pub validation_negative: Vec<FeatureVector>,
}

impl VariationImageSplit {
    /// Splits `positives` with `rng`; the negative sets are shared across
    /// variations and passed in already split.
    pub fn new(
        positives: &[FeatureVector],
        sizes: SplitSizes,
        negatives: &(Vec<FeatureVector>, Vec<FeatureVector>),
        rng: &mut SplitMix64,
    ) -> Result<Self, VisionError> {
        let (train_positive, validation_positive) = sizes.split(positives, rng)?;
        Ok(Self {
            train_positive,
            validation_positive,
            train_negative: negatives.0.clone(),
            validation_negative: negatives.1.clone(),
        })
    }

    pub fn validation_len(&self) -> usize {
        self.validation_positive.len() + self.validation_negative.len()
    }
}

/// S_i: accuracy of `classifier` on the pooled validation images of `split`.
pub fn saliency_score(classifier: &LinearClassifier, split: &VariationImageSplit) -> f64 {
    classifier.accuracy(&split.validation_positive, &split.validation_negative)
}

/// E_ij: accuracy of variation j's classifier on variation i's validation
/// images.
pub fn visual_edge(classifier_j: &LinearClassifier, split_i: &VariationImageSplit) -> f64 {
    saliency_score(classifier_j, split_i)
}

/// Partitions `items` into (kept, removed); an item is removed when its score
/// is at or below `threshold`.
pub fn filter_salient<T>(items: Vec<T>, scores: &[f64], threshold: f64) -> (Vec<(T, f64)>, Vec<(T, f64)>) {
    assert_eq!(items.len(), scores.len(), "one score per variation");
    items
        .into_iter()
        .zip(scores.iter().copied())
        .partition(|(_, s)| *s > threshold)
}

/// One row of the saliency table: variations kept at `threshold` scored
/// against known-relevant labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyRow {
    pub threshold: f64,
    pub kept: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    pub concept: String,
    /// (variation, S_i) in evaluation order.
    pub scores: Vec<(String, f64)>,
    pub rows: Vec<SaliencyRow>,
}

impl SaliencyReport {
    /// Builds rows for each threshold when relevance labels are available.
    pub fn new(
        concept: &str,
        scores: Vec<(String, f64)>,
        relevant: Option<&BTreeSet<String>>,
        thresholds: &[f64],
    ) -> Self {
        let rows = match relevant {
            None => Vec::new(),
            Some(relevant) => {
                let total_relevant = scores.iter().filter(|(v, _)| relevant.contains(v)).count();
                thresholds
                    .iter()
                    .map(|&threshold| {
                        let kept: Vec<&String> =
                            scores.iter().filter(|(_, s)| *s > threshold).map(|(v, _)| v).collect();
                        let hits = kept.iter().filter(|v| relevant.contains(**v)).count();
                        SaliencyRow {
                            threshold,
                            kept: kept.len(),
                            precision: if kept.is_empty() { 0.0 } else { hits as f64 / kept.len() as f64 },
                            recall: if total_relevant == 0 { 0.0 } else { hits as f64 / total_relevant as f64 },
                        }
                    })
                    .collect()
            }
        };
        Self {
            concept: concept.to_string(),
            scores,
            rows,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Visual saliency: {}", self.concept);
        let _ = writeln!(out, "{:<32}|{:>8}", "variation", "S_i");
        let _ = writeln!(out, "{}", "-".repeat(42));
        for (v, s) in &self.scores {
            let _ = writeln!(out, "{:<32}|{:>8.4}", v, s);
        }
        if !self.rows.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<10}|{:>8} |{:>16} |{:>13} |{:>6}", "concept", "S_i", "precision rate", "recall rate", "kept");
            let _ = writeln!(out, "{}", "-".repeat(60));
            for (i, r) in self.rows.iter().enumerate() {
                let name = if i == 0 { self.concept.as_str() } else { "" };
                let _ = writeln!(
                    out,
                    "{:<10}|{:>8.2} |{:>16.4} |{:>13.4} |{:>6}",
                    name, r.threshold, r.precision, r.recall, r.kept
                );
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeMode {
    /// Merge when `E_ij + slack >= V_j` holds for either ordered pair.
    #[default]
    Either,
    /// Merge only when it holds in both orientations.
    Both,
}

/// Visual similarity graph over the surviving variations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualGraph {
    pub names: Vec<String>,
    pub frequencies: Vec<u64>,
    /// V_i.
    pub scores: Vec<f64>,
    /// `edges[i][j]` = E_ij.
    pub edges: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualGroup {
    pub representative: usize,
    pub members: Vec<usize>,
}

impl VisualGraph {
    /// Trains nothing: evaluates every classifier on every split.
    pub fn from_classifiers(
        names: Vec<String>,
        frequencies: Vec<u64>,
        classifiers: &[LinearClassifier],
        splits: &[VariationImageSplit],
    ) -> Self {
        assert_eq!(classifiers.len(), splits.len());
        let edges: Vec<Vec<f64>> = splits
            .iter()
            .map(|split_i| classifiers.iter().map(|c_j| visual_edge(c_j, split_i)).collect())
            .collect();
        let scores = (0..splits.len()).map(|i| edges[i][i]).collect();
        Self {
            names,
            frequencies,
            scores,
            edges,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn fires(&self, i: usize, j: usize, slack: f64) -> bool {
        self.edges[i][j] + slack >= self.scores[j] - SLACK_TOLERANCE
    }
}

/// Groups variations whose classifiers transfer to each other's validation
/// data. Representative: highest V, then frequency, then name.
pub fn merge_visual_groups(graph: &VisualGraph, slack: f64, mode: MergeMode) -> Vec<VisualGroup> {
    let n = graph.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let merge = match mode {
                MergeMode::Either => graph.fires(i, j, slack) || graph.fires(j, i, slack),
                MergeMode::Both => graph.fires(i, j, slack) && graph.fires(j, i, slack),
            };
            if merge {
                uf.union(i, j);
            }
        }
    }
    let mut groups: Vec<VisualGroup> = uf
        .groups()
        .into_iter()
        .map(|members| {
            let representative = *members
                .iter()
                .min_by(|&&a, &&b| {
                    graph.scores[b]
                        .total_cmp(&graph.scores[a])
                        .then_with(|| graph.frequencies[b].cmp(&graph.frequencies[a]))
                        .then_with(|| graph.names[a].cmp(&graph.names[b]))
                })
                .expect("non-empty group");
            VisualGroup {
                representative,
                members,
            }
        })
        .collect();
    groups.sort_by_key(|g| g.representative);
    groups
}
