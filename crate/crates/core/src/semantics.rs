//! Normalized Google Distance over the offline count index and the text-stage
//! purification of the variation graph.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CountIndex, VariationCandidate};
use crate::union_find::UnionFind;

pub const DEFAULT_CENTER_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SYNONYM_THRESHOLD: f64 = 0.1;

/// A term was never seen in the count index, so its distance is undefined.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("distance undefined: `{term}` does not occur in the count index")]
pub struct UndefinedDistance {
    pub term: String,
}

/// NGD(x, y) with natural logarithms.
///
/// Zero co-occurrence and a non-positive denominator (a term present in every
/// document) yield `f64::INFINITY`.
pub fn ngd(x: &str, y: &str, counts: &CountIndex) -> Result<f64, UndefinedDistance> {
    let fx = counts.frequency(x);
    let fy = counts.frequency(y);
    let fxy = counts.co_frequency(x, y);
    ngd_from_counts(x, y, fx, fy, fxy, counts.total_docs())
}

/// NGD evaluated on raw counts; `x`/`y` only label the error.
pub fn ngd_from_counts(
    x: &str,
    y: &str,
    fx: u64,
    fy: u64,
    fxy: u64,
    total: u64,
) -> Result<f64, UndefinedDistance> {
    if fx == 0 {
        return Err(UndefinedDistance { term: x.to_string() });
    }
    if fy == 0 {
        return Err(UndefinedDistance { term: y.to_string() });
    }
    if fxy == 0 {
        return Ok(f64::INFINITY);
    }
    let (lx, ly) = ((fx as f64).ln(), (fy as f64).ln());
    let numerator = lx.max(ly) - (fxy as f64).ln();
    let denominator = (total as f64).ln() - lx.min(ly);
    if denominator <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((numerator / denominator).max(0.0))
}

/// d_xy: the mean of both NGD orientations.
pub fn symmetric_distance(x: &str, y: &str, counts: &CountIndex) -> Result<f64, UndefinedDistance> {
    let forward = ngd(x, y, counts)?;
    let backward = ngd(y, x, counts)?;
    Ok((forward + backward) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextRemovalReason {
    /// Center distance at or above the threshold, or infinite.
    CenterDistance,
    /// A term of the variation never occurs in the count index.
    UndefinedDistance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovedVariation {
    pub phrase: String,
    pub reason: TextRemovalReason,
    /// `None` when the distance was undefined.
    pub center_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub candidate: VariationCandidate,
    /// d_x; `None` when undefined.
    pub center_distance: Option<f64>,
}

/// A synonym group after merging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynonymGroup {
    /// Node index of the representative.
    pub representative: usize,
    /// Node indices of all members, representative included, ascending.
    pub members: Vec<usize>,
}

/// Word-variation graph centred on the concept.
#[derive(Clone, Debug)]
pub struct VariationGraph {
    pub concept: String,
    pub nodes: Vec<GraphNode>,
    pub removed: Vec<RemovedVariation>,
    /// d_xy for retained node pairs `i < j`, filled by [`merge_synonyms`];
    /// `None` when undefined.
    pair_distances: Vec<Vec<Option<f64>>>,
    groups: UnionFind,
}

impl VariationGraph {
    /// Computes center distances d_x = d(concept, variation) for every
    /// candidate using the symmetric distance.
    pub fn build(concept: &str, candidates: Vec<VariationCandidate>, counts: &CountIndex) -> Self {
        let nodes: Vec<GraphNode> = candidates
            .into_iter()
            .map(|candidate| {
                let center_distance = symmetric_distance(concept, &candidate.phrase, counts).ok();
                GraphNode {
                    candidate,
                    center_distance,
                }
            })
            .collect();
        Self::from_nodes(concept, nodes)
    }

    /// Graph over nodes whose center distances are already known.
    pub fn from_nodes(concept: &str, nodes: Vec<GraphNode>) -> Self {
        let n = nodes.len();
        Self {
            concept: concept.to_string(),
            nodes,
            removed: Vec::new(),
            pair_distances: Vec::new(),
            groups: UnionFind::new(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// d_xy between retained nodes, once computed by [`merge_synonyms`].
    pub fn pair_distance(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        if a == b {
            return Some(0.0);
        }
        self.pair_distances.get(a).and_then(|row| row.get(b - a - 1).copied().flatten())
    }

    /// Synonym groups with their representatives: highest corpus frequency,
    /// ties broken by phrase. Ordered by representative phrase frequency as
    /// the nodes are.
    pub fn groups(&self) -> Vec<SynonymGroup> {
        let mut uf = self.groups.clone();
        let mut groups: Vec<SynonymGroup> = uf
            .groups()
            .into_iter()
            .map(|members| {
                let representative = *members
                    .iter()
                    .min_by(|&&a, &&b| {
                        let (ca, cb) = (&self.nodes[a].candidate, &self.nodes[b].candidate);
                        cb.frequency
                            .cmp(&ca.frequency)
                            .then_with(|| ca.phrase.cmp(&cb.phrase))
                            .then_with(|| a.cmp(&b))
                    })
                    .expect("groups are non-empty");
                SynonymGroup {
                    representative,
                    members,
                }
            })
            .collect();
        groups.sort_by_key(|g| g.representative);
        groups
    }
}

/// Removes nodes with d_x ≥ `threshold`, infinite d_x, or undefined d_x.
pub fn prune_by_center_distance(graph: VariationGraph, threshold: f64) -> VariationGraph {
    let VariationGraph {
        concept,
        nodes,
        mut removed,
        ..
    } = graph;
    let mut kept = Vec::with_capacity(nodes.len());
    for node in nodes {
        match node.center_distance {
            Some(d) if d < threshold => kept.push(node),
            Some(d) => removed.push(RemovedVariation {
                phrase: node.candidate.phrase,
                reason: TextRemovalReason::CenterDistance,
                center_distance: Some(d),
            }),
            None => removed.push(RemovedVariation {
                phrase: node.candidate.phrase,
                reason: TextRemovalReason::UndefinedDistance,
                center_distance: None,
            }),
        }
    }
    let mut out = VariationGraph::from_nodes(&concept, kept);
    out.removed = removed;
    out
}

/// Unions every pair with d_xy ≤ `threshold`. Undefined or infinite
/// distances never merge.
pub fn merge_synonyms(graph: VariationGraph, threshold: f64, counts: &CountIndex) -> VariationGraph {
    let mut graph = graph;
    let n = graph.nodes.len();
    let phrases: Vec<&str> = graph.nodes.iter().map(|g| g.candidate.phrase.as_str()).collect();
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            (i + 1..n)
                .map(|j| symmetric_distance(phrases[i], phrases[j], counts).ok())
                .collect()
        })
        .collect();
    merge_with_distances(&mut graph, rows, threshold);
    graph
}

/// Same as [`merge_synonyms`] but with precomputed upper-triangular rows:
/// `rows[i][j - i - 1]` holds d_ij.
pub fn merge_with_distances(graph: &mut VariationGraph, rows: Vec<Vec<Option<f64>>>, threshold: f64) {
    let n = graph.nodes.len();
    assert_eq!(rows.len(), n, "one row per node");
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), n - i - 1, "upper-triangular rows");
        for (offset, d) in row.iter().enumerate() {
            if matches!(d, Some(d) if *d <= threshold) {
                graph.groups.union(i, i + 1 + offset);
            }
        }
    }
    graph.pair_distances = rows;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub input: usize,
    pub kept: usize,
    pub removed: usize,
}

/// Precision columns for one side (before or after filtering).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCounts {
    pub correct: usize,
    pub noisy: usize,
    pub precision: f64,
}

impl LabeledCounts {
    fn new(correct: usize, noisy: usize) -> Self {
        let total = correct + noisy;
        let precision = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Self {
            correct,
            noisy,
            precision,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSummary {
    pub before: LabeledCounts,
    pub after: LabeledCounts,
    /// Relevant variations wrongly removed.
    pub false_pos: usize,
}

impl LabeledSummary {
    /// Compares the phrase sets before and after filtering against the set of
    /// phrases known to be relevant.
    pub fn from_sets<'a>(
        before: impl IntoIterator<Item = &'a str>,
        after: impl IntoIterator<Item = &'a str>,
        relevant: &BTreeSet<String>,
    ) -> Self {
        let before: BTreeSet<&str> = before.into_iter().collect();
        let after: BTreeSet<&str> = after.into_iter().collect();
        let correct_before = before.iter().filter(|p| relevant.contains(**p)).count();
        let correct_after = after.iter().filter(|p| relevant.contains(**p)).count();
        Self {
            before: LabeledCounts::new(correct_before, before.len() - correct_before),
            after: LabeledCounts::new(correct_after, after.len() - correct_after),
            false_pos: correct_before.saturating_sub(correct_after),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NgdPurificationReport {
    pub concept: String,
    pub stages: Vec<StageCount>,
    pub labeled: Option<LabeledSummary>,
}

impl NgdPurificationReport {
    pub fn push_stage(&mut self, stage: &str, input: usize, kept: usize) {
        debug_assert!(kept <= input);
        self.stages.push(StageCount {
            stage: stage.to_string(),
            input,
            kept,
            removed: input - kept,
        });
    }

    /// Plain-text tables: per-stage counts, then the labeled
    /// correct/noisy/precision/false-pos row when labels were supplied.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Word-variation purification: {}", self.concept);
        let _ = writeln!(out, "{:<24}|{:>8} |{:>8} |{:>8}", "stage", "input", "kept", "removed");
        let _ = writeln!(out, "{}", "-".repeat(54));
        for s in &self.stages {
            let _ = writeln!(out, "{:<24}|{:>8} |{:>8} |{:>8}", s.stage, s.input, s.kept, s.removed);
        }
        if let Some(l) = &self.labeled {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<10}|{:^32}|{:^42}",
                "", "found word variations", "after NGD filtering"
            );
            let _ = writeln!(
                out,
                "{:<10}|{:>9} |{:>9} |{:>10} |{:>9} |{:>9} |{:>10} |{:>9}",
                "concept", "correct", "noisy", "precision", "correct", "noisy", "precision", "false pos"
            );
            let _ = writeln!(out, "{}", "-".repeat(86));
            let _ = writeln!(
                out,
                "{:<10}|{:>9} |{:>9} |{:>9.1}% |{:>9} |{:>9} |{:>9.1}% |{:>9}",
                self.concept,
                l.before.correct,
                l.before.noisy,
                l.before.precision * 100.0,
                l.after.correct,
                l.after.noisy,
                l.after.precision * 100.0,
                l.false_pos
            );
        }
        out
    }
}
