//! Command-line front end. Exit status: 0 success, 1 usage error, 2 data
//! error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use super::config::{GroupImages, PipelineConfig};
use super::source::{HttpSource, ImageSource};
use super::stages::{image_stage_from_parts, load_negatives, load_text_inputs, variation_stage_from_parts};
use super::{
    read_manifest, read_reports, read_variation_stage, write_image_stage, write_variation_stage, FixtureSource,
    PipelineError, MANIFEST_FILE, VARIATIONS_FILE,
};
use crate::corpus::Pos;
use crate::purifier::ProviderSpec;
use crate::vision::MergeMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "purify", version, about = "Discover and purify word variations and their image sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Variation stage only: writes variations.json and the report tables.
    Variations(StageArgs),
    /// Image stage over a saved variation stage: writes manifest.json.
    Images {
        /// variations.json, or a directory containing it.
        #[arg(long)]
        variations: PathBuf,
        #[command(flatten)]
        args: StageArgs,
    },
    /// Both stages.
    Run(StageArgs),
    /// Print the report tables saved in an output directory or file.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProviderKind {
    Logistic,
    Command,
}

#[derive(Debug, Args)]
struct StageArgs {
    /// JSON configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    concept: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    negatives: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Search endpoint with a `{query}` placeholder; replaces the fixture source.
    #[arg(long)]
    search_url: Option<String>,
    /// Comma-separated subset of NOUN,VERB,ADJ,ADV.
    #[arg(long, value_delimiter = ',')]
    allowed_pos: Option<Vec<String>>,
    #[arg(long)]
    center_threshold: Option<f64>,
    #[arg(long)]
    synonym_threshold: Option<f64>,
    #[arg(long)]
    saliency_threshold: Option<f64>,
    #[arg(long)]
    visual_slack: Option<f64>,
    #[arg(long)]
    images_per_variation: Option<usize>,
    #[arg(long)]
    elda_keep: Option<usize>,
    #[arg(long)]
    elda_top_k: Option<usize>,
    #[arg(long)]
    train_positives: Option<usize>,
    #[arg(long)]
    validation_positives: Option<usize>,
    #[arg(long)]
    train_negatives: Option<usize>,
    #[arg(long)]
    validation_negatives: Option<usize>,
    #[arg(long, value_enum)]
    merge_mode: Option<MergeModeArg>,
    #[arg(long, value_enum)]
    group_images: Option<GroupImagesArg>,
    #[arg(long)]
    separate_saliency_fetch: Option<bool>,
    #[arg(long)]
    svm_lambda: Option<f64>,
    #[arg(long)]
    svm_epochs: Option<usize>,
    #[arg(long)]
    hog_canvas: Option<usize>,
    #[arg(long)]
    hog_cell: Option<usize>,
    #[arg(long)]
    hog_bins: Option<usize>,
    #[arg(long)]
    hog_block: Option<usize>,
    #[arg(long)]
    hog_stride: Option<usize>,
    #[arg(long)]
    hog_clip: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    min_removal_fraction: Option<f64>,
    #[arg(long, value_enum)]
    provider: Option<ProviderKind>,
    #[arg(long)]
    logistic_iterations: Option<usize>,
    #[arg(long)]
    logistic_step: Option<f64>,
    /// Program for the command provider.
    #[arg(long)]
    provider_program: Option<String>,
    #[arg(long = "provider-arg")]
    provider_args: Vec<String>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MergeModeArg {
    Either,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GroupImagesArg {
    Representative,
    Union,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl StageArgs {
    /// `base`, replaced by `--config` when given, then overridden by flags.
    fn config(&self, base: PipelineConfig) -> Result<PipelineConfig, PipelineError> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
                PipelineConfig::from_json(&text).map_err(|e| PipelineError::Format {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?
            }
            None => base,
        };
        set(&mut c.concept, self.concept.clone());
        set(&mut c.seed, self.seed);
        let p = &mut c.paths;
        for (slot, value) in [
            (&mut p.corpus, &self.corpus),
            (&mut p.docs, &self.docs),
            (&mut p.images, &self.images),
            (&mut p.negatives, &self.negatives),
            (&mut p.labels, &self.labels),
        ] {
            if value.is_some() {
                *slot = value.clone();
            }
        }
        if self.search_url.is_some() {
            p.search_url = self.search_url.clone();
        }
        if let Some(tags) = &self.allowed_pos {
            c.allowed_pos = tags
                .iter()
                .map(|t| match Pos::from_tag(&t.trim().to_uppercase()) {
                    Pos::Other | Pos::Untagged => Err(PipelineError::Config(format!("unknown part of speech {t:?}"))),
                    p => Ok(p),
                })
                .collect::<Result<_, _>>()?;
        }
        let t = &mut c.thresholds;
        set(&mut t.center_distance, self.center_threshold);
        set(&mut t.synonym_distance, self.synonym_threshold);
        set(&mut t.saliency, self.saliency_threshold);
        set(&mut t.visual_slack, self.visual_slack);
        let n = &mut c.counts;
        set(&mut n.images_per_variation, self.images_per_variation);
        set(&mut n.elda_keep, self.elda_keep);
        set(&mut n.elda_top_k, self.elda_top_k);
        set(&mut n.positives.train, self.train_positives);
        set(&mut n.positives.validation, self.validation_positives);
        set(&mut n.negatives.train, self.train_negatives);
        set(&mut n.negatives.validation, self.validation_negatives);
        if let Some(m) = self.merge_mode {
            c.merge_mode = match m {
                MergeModeArg::Either => MergeMode::Either,
                MergeModeArg::Both => MergeMode::Both,
            };
        }
        if let Some(g) = self.group_images {
            c.group_images = match g {
                GroupImagesArg::Representative => GroupImages::Representative,
                GroupImagesArg::Union => GroupImages::Union,
            };
        }
        set(&mut c.separate_saliency_fetch, self.separate_saliency_fetch);
        if self.svm_lambda.is_some() {
            c.svm.lambda = self.svm_lambda;
        }
        set(&mut c.svm.epochs, self.svm_epochs);
        set(&mut c.hog.canvas, self.hog_canvas);
        set(&mut c.hog.cell, self.hog_cell);
        set(&mut c.hog.bins, self.hog_bins);
        set(&mut c.hog.block, self.hog_block);
        set(&mut c.hog.stride, self.hog_stride);
        set(&mut c.hog.clip, self.hog_clip);
        set(&mut c.prune.max_rounds, self.max_rounds);
        set(&mut c.prune.min_removal_fraction, self.min_removal_fraction);
        set(&mut c.workers, self.workers);
        c.provider = self.provider_spec(c.provider)?;
        Ok(c)
    }

    fn provider_spec(&self, current: ProviderSpec) -> Result<ProviderSpec, PipelineError> {
        let kind = match (self.provider, &current) {
            (Some(k), _) => k,
            (None, ProviderSpec::Logistic { .. }) => ProviderKind::Logistic,
            (None, ProviderSpec::Command { .. }) => ProviderKind::Command,
        };
        Ok(match kind {
            ProviderKind::Logistic => {
                let (mut iterations, mut step) = match current {
                    ProviderSpec::Logistic { iterations, step } => (iterations, step),
                    _ => match ProviderSpec::default() {
                        ProviderSpec::Logistic { iterations, step } => (iterations, step),
                        _ => unreachable!(),
                    },
                };
                set(&mut iterations, self.logistic_iterations);
                set(&mut step, self.logistic_step);
                ProviderSpec::Logistic { iterations, step }
            }
            ProviderKind::Command => {
                let (program, args) = match current {
                    ProviderSpec::Command { program, args } => (Some(program), args),
                    _ => (None, Vec::new()),
                };
                let program = self
                    .provider_program
                    .clone()
                    .or(program)
                    .ok_or_else(|| PipelineError::Config("--provider command needs --provider-program".into()))?;
                let args = if self.provider_args.is_empty() {
                    args
                } else {
                    self.provider_args.clone()
                };
                ProviderSpec::Command { program, args }
            }
        })
    }

    fn out_dir(&self) -> Result<PathBuf, PipelineError> {
        self.out
            .clone()
            .ok_or_else(|| PipelineError::Config("--out is required".into()))
    }
}

/// HTTP search when `search_url` is set, otherwise the fixture directory.
pub fn image_source(config: &PipelineConfig) -> Result<Box<dyn ImageSource>, PipelineError> {
    if let Some(url) = &config.paths.search_url {
        return Ok(Box::new(HttpSource::new(url.clone())));
    }
    let root = config
        .paths
        .images
        .clone()
        .ok_or_else(|| PipelineError::Config("--images is required".into()))?;
    Ok(Box::new(FixtureSource::new(root)))
}

/// Resolves and validates the text/image paths a stage needs before any work.
fn require_paths(config: &PipelineConfig, text: bool) -> Result<(), PipelineError> {
    if text && config.paths.corpus.is_none() {
        return Err(PipelineError::Config("--corpus is required".into()));
    }
    if text && config.paths.docs.is_none() {
        return Err(PipelineError::Config("--docs is required".into()));
    }
    if config.paths.images.is_none() && config.paths.search_url.is_none() {
        return Err(PipelineError::Config("--images is required".into()));
    }
    if config.negatives_dir().is_none() {
        return Err(PipelineError::Config("--negatives is required with --search-url".into()));
    }
    Ok(())
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), PipelineError> {
    let mut say = |line: String| {
        let _ = writeln!(stdout, "{line}");
    };
    match command {
        Command::Variations(args) => {
            let config = args.config(PipelineConfig::default())?.resolved()?;
            require_paths(&config, true)?;
            let out = args.out_dir()?;
            say(format!("seed: {}", config.seed));
            let source = image_source(&config)?;
            let (records, malformed, counts, labels) = load_text_inputs(&config)?;
            let negatives = load_negatives(&config)?;
            let stage = variation_stage_from_parts(
                &config,
                &records,
                malformed,
                &counts,
                labels.as_ref(),
                source.as_ref(),
                &negatives,
            )?;
            write_variation_stage(&out, &stage)?;
            say(format!(
                "variations: {} kept, {} removed, {} discovered",
                stage.variations.len(),
                stage.removed.len(),
                stage.discovered
            ));
            say(format!("wrote {}", out.join(VARIATIONS_FILE).display()));
        }
        Command::Images { variations, args } => {
            let stage1 = read_variation_stage(&variations)?;
            let config = args.config(stage1.config.clone())?.resolved()?;
            require_paths(&config, false)?;
            let out = args.out_dir()?;
            say(format!("seed: {}", config.seed));
            let source = image_source(&config)?;
            let negatives = load_negatives(&config)?;
            let stage2 = image_stage_from_parts(&config, &stage1, source.as_ref(), &negatives)?;
            write_image_stage(&out, &stage2)?;
            summarize(&stage2.manifest, &mut say)?;
            say(format!("wrote {}", out.join(MANIFEST_FILE).display()));
        }
        Command::Run(args) => {
            let config = args.config(PipelineConfig::default())?.resolved()?;
            require_paths(&config, true)?;
            let out = args.out_dir()?;
            say(format!("seed: {}", config.seed));
            let source = image_source(&config)?;
            let (records, malformed, counts, labels) = load_text_inputs(&config)?;
            let negatives = load_negatives(&config)?;
            let stage1 = variation_stage_from_parts(
                &config,
                &records,
                malformed,
                &counts,
                labels.as_ref(),
                source.as_ref(),
                &negatives,
            )?;
            write_variation_stage(&out, &stage1)?;
            say(format!(
                "variations: {} kept, {} removed, {} discovered",
                stage1.variations.len(),
                stage1.removed.len(),
                stage1.discovered
            ));
            let stage2 = image_stage_from_parts(&config, &stage1, source.as_ref(), &negatives)?;
            write_image_stage(&out, &stage2)?;
            summarize(&stage2.manifest, &mut say)?;
            say(format!("wrote {}", out.join(MANIFEST_FILE).display()));
        }
        Command::Report { input } => {
            let reports = read_reports(&input)?;
            say(reports.render());
            if input.is_dir() && input.join(MANIFEST_FILE).is_file() {
                let manifest = read_manifest(&input)?;
                say(format!("seed: {}", manifest.seed));
                summarize(&manifest, &mut say)?;
            }
        }
    }
    Ok(())
}

fn summarize(manifest: &super::DatasetManifest, say: &mut dyn FnMut(String)) -> Result<(), PipelineError> {
    let totals = manifest.audit().map_err(|message| PipelineError::Format {
        path: MANIFEST_FILE.to_string(),
        message,
    })?;
    for v in &manifest.variations {
        say(format!(
            "  {:<32} fetched {:>4}  kept {:>4}  removed {:>4}",
            v.name,
            v.fetched,
            v.kept.len(),
            v.removed.len()
        ));
    }
    say(format!(
        "images: {} fetched, {} kept, {} removed",
        totals.fetched, totals.kept, totals.removed
    ));
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// status.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) if e.is_usage() => {
            let _ = writeln!(stderr, "error: {e}");
            let _ = writeln!(stderr, "{}", Cli::command().render_usage());
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}
