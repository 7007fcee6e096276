//! The two pipeline stages: variation purification (text, then saliency and
//! visual merging) and per-variation image purification.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{GroupImages, PipelineConfig};
use super::manifest::{
    DatasetManifest, KeptImage, PurifiedVariation, RemovalStage, RemovedImage, RemovedVariationEntry,
    VariationEntry, VariationStageOutput, VariationStatus, VisualAlias,
};
use super::source::{fetch_images, FetchedImage, FixtureSource, ImageSource};
use super::PipelineError;
use crate::corpus::{discover_variations, read_document_file, read_ngram_file, CorpusError, CountIndex, NgramRecord};
use crate::purifier::{
    background_stats, elda_select, progressive_prune, train_detectors, BackgroundStats, ClassScorePair, PurifyError,
    PruneTrace,
};
use crate::rng::{stable_hash, SplitMix64};
use crate::semantics::{
    merge_synonyms, prune_by_center_distance, LabeledSummary, NgdPurificationReport, TextRemovalReason,
    VariationGraph,
};
use crate::vision::{
    extract_hog, filter_salient, merge_visual_groups, saliency_score, train_linear_classifier, FeatureVector,
    GrayImage, LinearClassifier, SaliencyReport, SvmConfig, VariationImageSplit, VisualGraph,
};

/// Thresholds listed in the saliency report when labels are available.
pub const SALIENCY_REPORT_THRESHOLDS: [f64; 5] = [0.6, 0.65, 0.7, 0.75, 0.8];

pub const STEP_DISCOVER: &str = "discover";
pub const STEP_CENTER: &str = "center-distance";
pub const STEP_SYNONYMS: &str = "synonym-merge";
pub const STEP_SALIENCY: &str = "saliency";
pub const STEP_VISUAL: &str = "visual-merge";

/// A synonym group after the text steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TextVariation {
    pub name: String,
    pub frequency: u64,
    pub center_distance: f64,
    pub semantic_aliases: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextStageResult {
    pub discovered: Vec<String>,
    /// Representatives in graph order (frequency descending).
    pub variations: Vec<TextVariation>,
    pub removed: Vec<RemovedVariationEntry>,
    pub report: NgdPurificationReport,
}

/// Steps 1-3: discover, prune by center distance, merge synonyms.
pub fn run_text_steps(
    config: &PipelineConfig,
    records: &[NgramRecord],
    counts: &CountIndex,
    relevant: Option<&BTreeSet<String>>,
) -> Result<TextStageResult, PipelineError> {
    let concept = config.concept.as_str();
    let no_survivors = |step: &str| PipelineError::NoSurvivingVariations { step: step.to_string() };
    let mut report = NgdPurificationReport {
        concept: concept.to_string(),
        ..Default::default()
    };

    let candidates = discover_variations(concept, records, &config.allowed_pos);
    let discovered: Vec<String> = candidates.iter().map(|c| c.phrase.clone()).collect();
    report.push_stage(STEP_DISCOVER, candidates.len(), candidates.len());
    if candidates.is_empty() {
        return Err(no_survivors(STEP_DISCOVER));
    }

    let graph = VariationGraph::build(concept, candidates, counts);
    let before = graph.len();
    let graph = prune_by_center_distance(graph, config.thresholds.center_distance);
    report.push_stage(STEP_CENTER, before, graph.len());
    if let Some(relevant) = relevant {
        report.labeled = Some(LabeledSummary::from_sets(
            discovered.iter().map(String::as_str),
            graph.nodes.iter().map(|n| n.candidate.phrase.as_str()),
            relevant,
        ));
    }
    let removed: Vec<RemovedVariationEntry> = graph
        .removed
        .iter()
        .map(|r| RemovedVariationEntry {
            phrase: r.phrase.clone(),
            step: STEP_CENTER.to_string(),
            reason: match r.reason {
                TextRemovalReason::CenterDistance => "center-distance".to_string(),
                TextRemovalReason::UndefinedDistance => "undefined-distance".to_string(),
            },
            value: r.center_distance.filter(|d| d.is_finite()),
            detail: None,
        })
        .collect();
    if graph.is_empty() {
        return Err(no_survivors(STEP_CENTER));
    }

    let graph = merge_synonyms(graph, config.thresholds.synonym_distance, counts);
    let groups = graph.groups();
    report.push_stage(STEP_SYNONYMS, graph.len(), groups.len());
    let variations = groups
        .iter()
        .map(|g| {
            let rep = &graph.nodes[g.representative];
            TextVariation {
                name: rep.candidate.phrase.clone(),
                frequency: rep.candidate.frequency,
                center_distance: rep.center_distance.unwrap_or(f64::NAN),
                semantic_aliases: g
                    .members
                    .iter()
                    .filter(|&&m| m != g.representative)
                    .map(|&m| graph.nodes[m].candidate.phrase.clone())
                    .collect(),
            }
        })
        .collect();

    Ok(TextStageResult {
        discovered,
        variations,
        removed,
        report,
    })
}

/// Loads the corpus, the count index and optional labels named in `config`.
pub fn load_text_inputs(
    config: &PipelineConfig,
) -> Result<(Vec<NgramRecord>, usize, CountIndex, Option<BTreeSet<String>>), PipelineError> {
    let corpus_path = required_path(&config.paths.corpus, "corpus")?;
    let docs_path = required_path(&config.paths.docs, "docs")?;
    let parsed = read_ngram_file(&corpus_path).map_err(|e| corpus_error(&corpus_path, e))?;
    if parsed.records.is_empty() {
        return Err(PipelineError::EmptyCorpus {
            path: corpus_path.display().to_string(),
        });
    }
    let counts = read_document_file(&docs_path).map_err(|e| corpus_error(&docs_path, e))?;
    let labels = match &config.paths.labels {
        None => None,
        Some(path) => Some(read_labels(path)?),
    };
    Ok((parsed.records, parsed.malformed, counts, labels))
}

fn required_path(path: &Option<PathBuf>, name: &str) -> Result<PathBuf, PipelineError> {
    path.clone()
        .ok_or_else(|| PipelineError::Config(format!("paths.{name} is required")))
}

fn corpus_error(path: &Path, e: CorpusError) -> PipelineError {
    match e {
        CorpusError::EmptyCorpus => PipelineError::EmptyCorpus {
            path: path.display().to_string(),
        },
        CorpusError::Io { path, source } => PipelineError::Io {
            path,
            message: source.to_string(),
        },
    }
}

/// Relevant phrases, one per line; blank lines and `#` comments skipped.
pub fn read_labels(path: &Path) -> Result<BTreeSet<String>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect())
}

/// Decodes and describes every image file of `dir`. Fails on the first file
/// that cannot be read or decoded.
pub fn load_negatives(config: &PipelineConfig) -> Result<Vec<FeatureVector>, PipelineError> {
    let dir = config
        .negatives_dir()
        .ok_or_else(|| PipelineError::Config("paths.images or paths.negatives is required".into()))?;
    let files = FixtureSource::image_files(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    if files.len() < 2 {
        return Err(PipelineError::Negatives {
            path: dir.display().to_string(),
            reason: format!("need at least 2 negative images, found {}", files.len()),
        });
    }
    files
        .iter()
        .map(|path| {
            let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
            let image = GrayImage::decode(&bytes).map_err(|e| PipelineError::Negatives {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            Ok(extract_hog(&image, &config.hog))
        })
        .collect()
}

fn worker_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

/// Decodes fetched images into HOG features; undecodable ones come back as
/// errors in place.
fn describe(images: &[FetchedImage], config: &PipelineConfig) -> Vec<Result<FeatureVector, String>> {
    images
        .iter()
        .map(|img| {
            GrayImage::decode(&img.bytes)
                .map(|g| extract_hog(&g, &config.hog))
                .map_err(|e| e.to_string())
        })
        .collect()
}

struct SaliencyFit {
    score: f64,
    classifier: LinearClassifier,
    split: VariationImageSplit,
}

fn fit_saliency(
    name: &str,
    index: usize,
    config: &PipelineConfig,
    source: &dyn ImageSource,
    negatives: &(Vec<FeatureVector>, Vec<FeatureVector>),
) -> Result<SaliencyFit, String> {
    let wanted = config.counts.saliency_positives();
    let k = if config.separate_saliency_fetch {
        wanted
    } else {
        config.counts.images_per_variation
    };
    let fetched = fetch_images(source, name, k).map_err(|e| e.to_string())?;
    let positives: Vec<FeatureVector> = describe(&fetched[..fetched.len().min(wanted)], config)
        .into_iter()
        .filter_map(Result::ok)
        .collect();
    let sizes = config.counts.positives.for_pool(positives.len()).map_err(|e| e.to_string())?;
    let mut rng = SplitMix64::new(config.seed.wrapping_add(index as u64));
    let split = VariationImageSplit::new(&positives, sizes, negatives, &mut rng).map_err(|e| e.to_string())?;
    let svm = SvmConfig {
        lambda: config.svm_lambda(),
        epochs: config.svm.epochs,
    };
    let classifier =
        train_linear_classifier(&split.train_positive, &split.train_negative, &svm).map_err(|e| e.to_string())?;
    Ok(SaliencyFit {
        score: saliency_score(&classifier, &split),
        classifier,
        split,
    })
}

/// Steps 4-5: saliency filter over the synonym-group representatives, then
/// visual merging of the survivors.
pub fn run_visual_steps(
    config: &PipelineConfig,
    text: TextStageResult,
    source: &dyn ImageSource,
    negatives: &[FeatureVector],
    relevant: Option<&BTreeSet<String>>,
) -> Result<(Vec<PurifiedVariation>, Vec<RemovedVariationEntry>, NgdPurificationReport, SaliencyReport), PipelineError>
{
    let TextStageResult {
        variations,
        mut removed,
        mut report,
        ..
    } = text;
    let negative_split = config
        .counts
        .negatives
        .split(negatives, &mut SplitMix64::for_stream(config.seed, "negatives"))
        .map_err(|e| PipelineError::Negatives {
            path: config.negatives_dir().map(|p| p.display().to_string()).unwrap_or_default(),
            reason: e.to_string(),
        })?;

    let fits: Vec<Result<SaliencyFit, String>> = worker_pool(config.workers).install(|| {
        variations
            .par_iter()
            .enumerate()
            .map(|(i, v)| fit_saliency(&v.name, i, config, source, &negative_split))
            .collect()
    });

    let mut scored = Vec::new();
    let mut scores = Vec::new();
    let mut report_scores = Vec::new();
    for (v, fit) in variations.into_iter().zip(fits) {
        match fit {
            Ok(fit) => {
                report_scores.push((v.name.clone(), fit.score));
                scores.push(fit.score);
                scored.push((v, fit));
            }
            Err(reason) => removed.push(RemovedVariationEntry {
                phrase: v.name,
                step: STEP_SALIENCY.to_string(),
                reason: "no-images".to_string(),
                value: None,
                detail: Some(reason),
            }),
        }
    }
    let input = scored.len() + removed.iter().filter(|r| r.step == STEP_SALIENCY).count();
    let (kept, dropped) = filter_salient(scored, &scores, config.thresholds.saliency);
    for ((v, _), s) in dropped {
        removed.push(RemovedVariationEntry {
            phrase: v.name,
            step: STEP_SALIENCY.to_string(),
            reason: "low-saliency".to_string(),
            value: Some(s),
            detail: None,
        });
    }
    report.push_stage(STEP_SALIENCY, input, kept.len());
    let saliency_report = SaliencyReport::new(
        &config.concept,
        report_scores,
        relevant,
        &SALIENCY_REPORT_THRESHOLDS,
    );
    if kept.is_empty() {
        return Err(PipelineError::NoSurvivingVariations {
            step: STEP_SALIENCY.to_string(),
        });
    }

    let (kept, fits): (Vec<TextVariation>, Vec<SaliencyFit>) = kept.into_iter().map(|(pair, _)| pair).unzip();
    let classifiers: Vec<LinearClassifier> = fits.iter().map(|f| f.classifier.clone()).collect();
    let splits: Vec<VariationImageSplit> = fits.into_iter().map(|f| f.split).collect();
    let graph = VisualGraph::from_classifiers(
        kept.iter().map(|v| v.name.clone()).collect(),
        kept.iter().map(|v| v.frequency).collect(),
        &classifiers,
        &splits,
    );
    let groups = merge_visual_groups(&graph, config.thresholds.visual_slack, config.merge_mode);
    report.push_stage(STEP_VISUAL, kept.len(), groups.len());

    let mut purified: Vec<PurifiedVariation> = groups
        .iter()
        .map(|g| {
            let rep = &kept[g.representative];
            PurifiedVariation {
                name: rep.name.clone(),
                frequency: rep.frequency,
                center_distance: rep.center_distance,
                saliency: graph.scores[g.representative],
                semantic_aliases: rep.semantic_aliases.clone(),
                visual_aliases: g
                    .members
                    .iter()
                    .filter(|&&m| m != g.representative)
                    .map(|&m| VisualAlias {
                        name: kept[m].name.clone(),
                        semantic_aliases: kept[m].semantic_aliases.clone(),
                        saliency: graph.scores[m],
                    })
                    .collect(),
            }
        })
        .collect();
    purified.sort_by(|a, b| a.name.cmp(&b.name));
    removed.sort_by(|a, b| a.phrase.cmp(&b.phrase));
    Ok((purified, removed, report, saliency_report))
}

/// The full variation stage from the paths in `config`.
pub fn run_variation_stage(config: &PipelineConfig, source: &dyn ImageSource) -> Result<VariationStageOutput, PipelineError> {
    let config = config.clone().resolved()?;
    let (records, malformed, counts, labels) = load_text_inputs(&config)?;
    let negatives = load_negatives(&config)?;
    variation_stage_from_parts(&config, &records, malformed, &counts, labels.as_ref(), source, &negatives)
}

/// The variation stage over already-loaded inputs. `config` must be resolved.
pub fn variation_stage_from_parts(
    config: &PipelineConfig,
    records: &[NgramRecord],
    malformed: usize,
    counts: &CountIndex,
    relevant: Option<&BTreeSet<String>>,
    source: &dyn ImageSource,
    negatives: &[FeatureVector],
) -> Result<VariationStageOutput, PipelineError> {
    let text = run_text_steps(config, records, counts, relevant)?;
    let discovered = text.discovered.len();
    let (variations, removed, ngd_report, saliency_report) =
        run_visual_steps(config, text, source, negatives, relevant)?;
    Ok(VariationStageOutput {
        concept: config.concept.clone(),
        config: config.clone(),
        discovered,
        malformed_records: malformed,
        variations,
        removed,
        ngd_report,
        saliency_report,
    })
}

/// One prune decision, as written to the trace logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub id: String,
    pub locator: String,
    pub scores: ClassScorePair,
    pub probability: f64,
    pub draw: f64,
    pub removed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeptFile {
    pub id: String,
    pub extension: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageStageOutput {
    pub manifest: DatasetManifest,
    /// Prune decisions per variation name.
    pub traces: BTreeMap<String, Vec<TraceRecord>>,
    /// Kept image files keyed by content hash.
    pub kept_files: BTreeMap<String, KeptFile>,
}

struct VariationResult {
    entry: VariationEntry,
    trace: Vec<TraceRecord>,
    files: Vec<KeptFile>,
}

/// Shared state for the image stage.
pub struct ImageContext<'a> {
    pub config: &'a PipelineConfig,
    pub source: &'a dyn ImageSource,
    pub negatives: &'a [FeatureVector],
    pub stats: &'a BackgroundStats,
}

fn queries_for(v: &PurifiedVariation, mode: GroupImages) -> Vec<String> {
    match mode {
        GroupImages::Representative => vec![v.name.clone()],
        GroupImages::Union => {
            let mut seen = BTreeSet::new();
            v.all_names()
                .into_iter()
                .filter(|n| seen.insert(n.to_string()))
                .map(str::to_string)
                .collect()
        }
    }
}

fn removed_image(img: &(String, FetchedImage), stage: RemovalStage) -> RemovedImage {
    RemovedImage {
        id: img.1.id.clone(),
        locator: img.1.locator.clone(),
        query: img.0.clone(),
        source_rank: img.1.rank,
        stage,
        elda_rank: None,
        round: None,
        probability: None,
        draw: None,
        detail: None,
    }
}

/// Fetch, exemplar-LDA selection and progressive pruning for one variation.
pub fn purify_variation(v: &PurifiedVariation, ctx: &ImageContext<'_>) -> (VariationEntry, Vec<TraceRecord>, Vec<KeptFile>) {
    let r = purify_variation_inner(v, ctx);
    (r.entry, r.trace, r.files)
}

fn purify_variation_inner(v: &PurifiedVariation, ctx: &ImageContext<'_>) -> VariationResult {
    let config = ctx.config;
    let queries = queries_for(v, config.group_images);
    let mut entry = VariationEntry {
        name: v.name.clone(),
        semantic_aliases: v.semantic_aliases.clone(),
        visual_aliases: v.visual_aliases.iter().map(|a| a.name.clone()).collect(),
        queries: queries.clone(),
        status: VariationStatus::EmptySurvivorSet,
        fetched: 0,
        kept: Vec::new(),
        removed: Vec::new(),
    };
    let mut trace = Vec::new();

    let mut fetched: Vec<(String, FetchedImage)> = Vec::new();
    for q in &queries {
        match fetch_images(ctx.source, q, config.counts.images_per_variation) {
            Ok(images) => fetched.extend(images.into_iter().map(|img| (q.clone(), img))),
            Err(e) => {
                // Nothing fetched for this variation is kept.
                entry.fetched = fetched.len();
                entry.removed = fetched
                    .iter()
                    .map(|img| removed_image(img, RemovalStage::NotProcessed))
                    .collect();
                entry.status = VariationStatus::SourceUnavailable { reason: e.to_string() };
                return VariationResult {
                    entry,
                    trace,
                    files: Vec::new(),
                };
            }
        }
    }
    entry.fetched = fetched.len();

    // Exact duplicates, then undecodable files.
    let mut seen = BTreeSet::new();
    let mut unique = Vec::new();
    for img in fetched {
        if seen.insert(img.1.id.clone()) {
            unique.push(img);
        } else {
            entry.removed.push(removed_image(&img, RemovalStage::Duplicate));
        }
    }
    let described = describe(&unique.iter().map(|(_, i)| i.clone()).collect::<Vec<_>>(), config);
    let mut images = Vec::new();
    let mut features = Vec::new();
    for (img, feat) in unique.into_iter().zip(described) {
        match feat {
            Ok(f) => {
                images.push(img);
                features.push(f);
            }
            Err(reason) => {
                let mut r = removed_image(&img, RemovalStage::Undecodable);
                r.detail = Some(reason);
                entry.removed.push(r);
            }
        }
    }
    if images.is_empty() {
        return VariationResult {
            entry,
            trace,
            files: Vec::new(),
        };
    }

    let detectors = match train_detectors(&features, ctx.stats) {
        Ok(d) => d,
        Err(e) => {
            for img in &images {
                entry.removed.push(removed_image(img, RemovalStage::NotProcessed));
            }
            entry.status = VariationStatus::Failed { reason: e.to_string() };
            return VariationResult {
                entry,
                trace,
                files: Vec::new(),
            };
        }
    };
    let selection = elda_select(&features, &detectors, config.counts.elda_keep, config.counts.elda_top_k);
    let mut elda_rank = vec![0usize; images.len()];
    let mut elda_score = vec![0.0; images.len()];
    for (rank, r) in selection.kept.iter().chain(&selection.dropped).enumerate() {
        elda_rank[r.index] = rank + 1;
        elda_score[r.index] = r.score;
    }
    for r in &selection.dropped {
        let mut removed = removed_image(&images[r.index], RemovalStage::Elda);
        removed.elda_rank = Some(elda_rank[r.index]);
        entry.removed.push(removed);
    }

    // Pruning sees the selected images in source order.
    let mut selected: Vec<usize> = selection.kept.iter().map(|r| r.index).collect();
    selected.sort_unstable();
    let subset: Vec<FeatureVector> = selected.iter().map(|&i| features[i].clone()).collect();
    let mut provider = config.provider.build();
    let seed = config.seed ^ stable_hash(&v.name);
    let outcome = progressive_prune(&subset, ctx.negatives, provider.as_mut(), seed, &config.prune);

    let record_trace = |trace: &mut Vec<TraceRecord>, t: &PruneTrace| {
        for round in &t.rounds {
            for d in &round.decisions {
                let img = &images[selected[d.image]].1;
                trace.push(TraceRecord {
                    round: round.round,
                    id: img.id.clone(),
                    locator: img.locator.clone(),
                    scores: d.scores,
                    probability: d.probability,
                    draw: d.draw,
                    removed: d.removed,
                });
            }
        }
    };
    let pruned = |entry: &mut VariationEntry, t: &PruneTrace| {
        for round in &t.rounds {
            for d in round.removed() {
                let i = selected[d.image];
                let mut r = removed_image(&images[i], RemovalStage::Prune);
                r.elda_rank = Some(elda_rank[i]);
                r.round = Some(round.round);
                r.probability = Some(d.probability);
                r.draw = Some(d.draw);
                entry.removed.push(r);
            }
        }
    };

    let mut files = Vec::new();
    match outcome {
        Ok(outcome) => {
            record_trace(&mut trace, &outcome.trace);
            pruned(&mut entry, &outcome.trace);
            let rounds = outcome.trace.rounds.len();
            for &k in &outcome.kept {
                let i = selected[k];
                let (query, img) = &images[i];
                entry.kept.push(KeptImage {
                    id: img.id.clone(),
                    locator: img.locator.clone(),
                    query: query.clone(),
                    source_rank: img.rank,
                    elda_rank: elda_rank[i],
                    elda_score: elda_score[i],
                    rounds_survived: rounds,
                });
                files.push(KeptFile {
                    id: img.id.clone(),
                    extension: img.extension().unwrap_or_else(|| "bin".to_string()),
                    bytes: img.bytes.clone(),
                });
            }
            entry.status = VariationStatus::Ok {
                rounds,
                stop: outcome.trace.stop,
            };
        }
        Err(PurifyError::EmptySurvivorSet(t)) => {
            record_trace(&mut trace, &t);
            pruned(&mut entry, &t);
            entry.status = VariationStatus::EmptySurvivorSet;
        }
        Err(e) => {
            for &i in &selected {
                let mut r = removed_image(&images[i], RemovalStage::NotProcessed);
                r.elda_rank = Some(elda_rank[i]);
                r.detail = Some(e.to_string());
                entry.removed.push(r);
            }
            entry.status = VariationStatus::Failed { reason: e.to_string() };
        }
    }
    entry.removed.sort_by(|a, b| (&a.query, a.source_rank).cmp(&(&b.query, b.source_rank)));
    VariationResult { entry, trace, files }
}

/// Image stage over the variation-stage output. `config` must be resolved.
pub fn run_image_stage(
    config: &PipelineConfig,
    stage1: &VariationStageOutput,
    source: &dyn ImageSource,
) -> Result<ImageStageOutput, PipelineError> {
    let negatives = load_negatives(config)?;
    image_stage_from_parts(config, stage1, source, &negatives)
}

pub fn image_stage_from_parts(
    config: &PipelineConfig,
    stage1: &VariationStageOutput,
    source: &dyn ImageSource,
    negatives: &[FeatureVector],
) -> Result<ImageStageOutput, PipelineError> {
    if stage1.variations.is_empty() {
        return Err(PipelineError::NoSurvivingVariations {
            step: STEP_VISUAL.to_string(),
        });
    }
    let stats = background_stats(negatives).map_err(|e| PipelineError::Negatives {
        path: config.negatives_dir().map(|p| p.display().to_string()).unwrap_or_default(),
        reason: e.to_string(),
    })?;
    let ctx = ImageContext {
        config,
        source,
        negatives,
        stats: &stats,
    };
    let mut results: Vec<VariationResult> = worker_pool(config.workers).install(|| {
        stage1
            .variations
            .par_iter()
            .map(|v| purify_variation_inner(v, &ctx))
            .collect()
    });
    results.sort_by(|a, b| a.entry.name.cmp(&b.entry.name));

    let mut traces = BTreeMap::new();
    let mut kept_files = BTreeMap::new();
    let mut variations = Vec::with_capacity(results.len());
    for r in results {
        traces.insert(r.entry.name.clone(), r.trace);
        for f in r.files {
            kept_files.entry(f.id.clone()).or_insert(f);
        }
        variations.push(r.entry);
    }
    Ok(ImageStageOutput {
        manifest: DatasetManifest {
            concept: config.concept.clone(),
            seed: config.seed,
            config: config.clone(),
            variations,
            removed_variations: stage1.removed.clone(),
        },
        traces,
        kept_files,
    })
}

/// Both stages end to end.
pub fn run_pipeline(
    config: &PipelineConfig,
    source: &dyn ImageSource,
) -> Result<(VariationStageOutput, ImageStageOutput), PipelineError> {
    let config = config.clone().resolved()?;
    let (records, malformed, counts, labels) = load_text_inputs(&config)?;
    let negatives = load_negatives(&config)?;
    let stage1 = variation_stage_from_parts(&config, &records, malformed, &counts, labels.as_ref(), source, &negatives)?;
    let stage2 = image_stage_from_parts(&config, &stage1, source, &negatives)?;
    Ok((stage1, stage2))
}
