//! Serialized pipeline artifacts: the variation-stage output and the final
//! dataset manifest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::semantics::NgdPurificationReport;
use crate::vision::SaliencyReport;

/// A variation merged into a visual group, with its own semantic aliases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualAlias {
    pub name: String,
    pub semantic_aliases: Vec<String>,
    pub saliency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurifiedVariation {
    pub name: String,
    pub frequency: u64,
    pub center_distance: f64,
    pub saliency: f64,
    /// Other members of its synonym group.
    pub semantic_aliases: Vec<String>,
    /// Other representatives merged into its visual group.
    pub visual_aliases: Vec<VisualAlias>,
}

impl PurifiedVariation {
    /// Every phrase this variation stands for, itself first.
    pub fn all_names(&self) -> Vec<&str> {
        let mut names = vec![self.name.as_str()];
        names.extend(self.semantic_aliases.iter().map(String::as_str));
        for alias in &self.visual_aliases {
            names.push(&alias.name);
            names.extend(alias.semantic_aliases.iter().map(String::as_str));
        }
        names
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovedVariationEntry {
    pub phrase: String,
    /// Pipeline step that removed it.
    pub step: String,
    pub reason: String,
    /// Center distance or saliency score, when one was computed.
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Output of the variation stage; the input of the image stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationStageOutput {
    pub concept: String,
    pub config: PipelineConfig,
    pub discovered: usize,
    pub malformed_records: usize,
    /// Sorted by name.
    pub variations: Vec<PurifiedVariation>,
    pub removed: Vec<RemovedVariationEntry>,
    pub ngd_report: NgdPurificationReport,
    pub saliency_report: SaliencyReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeptImage {
    /// SHA-256 of the image bytes.
    pub id: String,
    pub locator: String,
    pub query: String,
    pub source_rank: usize,
    pub elda_rank: usize,
    pub elda_score: f64,
    pub rounds_survived: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalStage {
    /// Same bytes as an earlier image of the same variation.
    Duplicate,
    Undecodable,
    /// Outside the exemplar-LDA top list.
    Elda,
    Prune,
    /// The variation failed before the image could be judged.
    NotProcessed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovedImage {
    pub id: String,
    pub locator: String,
    pub query: String,
    pub source_rank: usize,
    pub stage: RemovalStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elda_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum VariationStatus {
    Ok { rounds: usize, stop: crate::purifier::StopReason },
    /// The image source could not serve the variation.
    SourceUnavailable { reason: String },
    /// No image survived (including when none were fetched).
    EmptySurvivorSet,
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationEntry {
    pub name: String,
    pub semantic_aliases: Vec<String>,
    pub visual_aliases: Vec<String>,
    pub queries: Vec<String>,
    pub status: VariationStatus,
    pub fetched: usize,
    pub kept: Vec<KeptImage>,
    pub removed: Vec<RemovedImage>,
}

impl VariationEntry {
    pub fn is_conserved(&self) -> bool {
        self.kept.len() + self.removed.len() == self.fetched
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub concept: String,
    pub seed: u64,
    pub config: PipelineConfig,
    /// Sorted by name.
    pub variations: Vec<VariationEntry>,
    pub removed_variations: Vec<RemovedVariationEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationSummary {
    pub fetched: usize,
    pub kept: usize,
    pub removed: usize,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Checks kept + removed = fetched per variation, and that every fetched
    /// image (identified by query and source rank) is listed exactly once.
    pub fn audit(&self) -> Result<ConservationSummary, String> {
        let mut total = ConservationSummary {
            fetched: 0,
            kept: 0,
            removed: 0,
        };
        for v in &self.variations {
            if !v.is_conserved() {
                return Err(format!(
                    "{}: kept {} + removed {} != fetched {}",
                    v.name,
                    v.kept.len(),
                    v.removed.len(),
                    v.fetched
                ));
            }
            let mut seen: BTreeMap<(&str, usize), usize> = BTreeMap::new();
            let keys = v
                .kept
                .iter()
                .map(|k| (k.query.as_str(), k.source_rank))
                .chain(v.removed.iter().map(|r| (r.query.as_str(), r.source_rank)));
            for key in keys {
                *seen.entry(key).or_default() += 1;
            }
            if let Some(((q, rank), n)) = seen.iter().find(|(_, &n)| n != 1) {
                return Err(format!("{}: image {q}#{rank} listed {n} times", v.name));
            }
            total.fetched += v.fetched;
            total.kept += v.kept.len();
            total.removed += v.removed.len();
        }
        Ok(total)
    }

    pub fn kept_count(&self) -> usize {
        self.variations.iter().map(|v| v.kept.len()).sum()
    }
}
