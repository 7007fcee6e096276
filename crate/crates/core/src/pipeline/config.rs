use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::Pos;
use crate::purifier::{ProviderSpec, PruneConfig};
use crate::semantics::{DEFAULT_CENTER_THRESHOLD, DEFAULT_SYNONYM_THRESHOLD};
use crate::vision::saliency::{DEFAULT_SALIENCY_THRESHOLD, DEFAULT_VISUAL_SLACK};
use crate::vision::{HogLayout, MergeMode, SplitSizes};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Center distances at or above this are pruned.
    pub center_distance: f64,
    /// Pair distances at or below this are merged as synonyms.
    pub synonym_distance: f64,
    /// Saliency scores at or below this are removed.
    pub saliency: f64,
    /// Slack in the visual merge rule `E_ij + slack >= V_j`.
    pub visual_slack: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            center_distance: DEFAULT_CENTER_THRESHOLD,
            synonym_distance: DEFAULT_SYNONYM_THRESHOLD,
            saliency: DEFAULT_SALIENCY_THRESHOLD,
            visual_slack: DEFAULT_VISUAL_SLACK,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Counts {
    pub images_per_variation: usize,
    pub elda_keep: usize,
    pub elda_top_k: usize,
    pub positives: SplitSizes,
    pub negatives: SplitSizes,
}

impl Default for Counts {
    fn default() -> Self {
        Self {
            images_per_variation: 120,
            elda_keep: 100,
            elda_top_k: 5,
            positives: SplitSizes {
                train: 75,
                validation: 25,
            },
            negatives: SplitSizes {
                train: 25,
                validation: 25,
            },
        }
    }
}

impl Counts {
    pub fn saliency_positives(&self) -> usize {
        self.positives.train + self.positives.validation
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupImages {
    /// Only the representative of a visual group is queried.
    #[default]
    Representative,
    /// Every member of a visual group is queried and the results pooled.
    Union,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSettings {
    /// Regularization strength; `None` resolves to
    /// `1 / (train positives + train negatives)`.
    pub lambda: Option<f64>,
    pub epochs: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        Self {
            lambda: None,
            epochs: 200,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub docs: Option<PathBuf>,
    pub images: Option<PathBuf>,
    /// Defaults to `<images>/_negatives`.
    pub negatives: Option<PathBuf>,
    /// Optional list of relevant variation phrases, one per line.
    pub labels: Option<PathBuf>,
    /// HTTP search endpoint with a `{query}` placeholder. When set it
    /// replaces the fixture directory as the image source.
    pub search_url: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub concept: String,
    pub seed: u64,
    pub allowed_pos: Vec<Pos>,
    pub thresholds: Thresholds,
    pub counts: Counts,
    pub merge_mode: MergeMode,
    pub group_images: GroupImages,
    /// Fetch the saliency positives separately instead of reusing the first
    /// images of the purification download.
    pub separate_saliency_fetch: bool,
    pub hog: HogLayout,
    pub svm: SvmSettings,
    pub prune: PruneConfig,
    pub provider: ProviderSpec,
    /// Size of the per-variation worker pool.
    pub workers: usize,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            concept: String::new(),
            seed: 0,
            allowed_pos: Pos::CONTENT.to_vec(),
            thresholds: Thresholds::default(),
            counts: Counts::default(),
            merge_mode: MergeMode::Either,
            group_images: GroupImages::Representative,
            separate_saliency_fetch: false,
            hog: HogLayout::default(),
            svm: SvmSettings::default(),
            prune: PruneConfig::default(),
            provider: ProviderSpec::default(),
            workers: 4,
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn svm_lambda(&self) -> f64 {
        self.svm
            .lambda
            .unwrap_or_else(|| 1.0 / (self.counts.positives.train + self.counts.negatives.train).max(1) as f64)
    }

    pub fn negatives_dir(&self) -> Option<PathBuf> {
        self.paths
            .negatives
            .clone()
            .or_else(|| self.paths.images.as_ref().map(|p| p.join("_negatives")))
    }

    /// Fills derived defaults so the echoed configuration is explicit, then
    /// validates it.
    pub fn resolved(mut self) -> Result<Self, PipelineError> {
        self.concept = self.concept.trim().to_lowercase();
        self.svm.lambda = Some(self.svm_lambda());
        if self.paths.negatives.is_none() {
            self.paths.negatives = self.negatives_dir();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.concept.is_empty() {
            return bad("concept is required".into());
        }
        if self.concept.contains(char::is_whitespace) {
            return bad(format!("concept must be a single token, got {:?}", self.concept));
        }
        let t = &self.thresholds;
        for (name, v) in [("center_distance", t.center_distance), ("synonym_distance", t.synonym_distance)] {
            if !(v >= 0.0) {
                return bad(format!("threshold {name} must be >= 0, got {v}"));
            }
        }
        for (name, v) in [("saliency", t.saliency), ("visual_slack", t.visual_slack)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("threshold {name} must be in [0, 1], got {v}"));
            }
        }
        let c = &self.counts;
        for (name, v) in [
            ("images_per_variation", c.images_per_variation),
            ("elda_keep", c.elda_keep),
            ("elda_top_k", c.elda_top_k),
            ("positives.train", c.positives.train),
            ("positives.validation", c.positives.validation),
            ("negatives.train", c.negatives.train),
            ("negatives.validation", c.negatives.validation),
            ("svm.epochs", self.svm.epochs),
            ("prune.max_rounds", self.prune.max_rounds),
            ("workers", self.workers),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.prune.min_removal_fraction) {
            return bad("prune.min_removal_fraction must be in [0, 1]".into());
        }
        if !(self.svm_lambda() > 0.0) {
            return bad("svm.lambda must be positive".into());
        }
        if self.hog.cell == 0 || self.hog.block == 0 || self.hog.stride == 0 || self.hog.bins == 0 {
            return bad("hog cell, block, stride and bins must be positive".into());
        }
        if self.hog.canvas < self.hog.cell * self.hog.block {
            return bad("hog canvas smaller than one block".into());
        }
        if self.allowed_pos.iter().any(|p| !Pos::CONTENT.contains(p)) {
            return bad("allowed_pos may only contain NOUN, VERB, ADJ, ADV".into());
        }
        Ok(())
    }
}
