//! End-to-end orchestration, persistence and the command-line interface.
//!
//! Output directory layout:
//!
//! ```text
//! out/
//!   variations.json       variation-stage output (input of `images`)
//!   reports.json          both report tables as data
//!   ngd_report.txt
//!   saliency_report.txt
//!   manifest.json         dataset manifest
//!   traces/<variation>.jsonl   one prune decision per line
//!   images/<sha256>.<ext>      kept images, deduplicated by content
//! ```

pub mod cli;
pub mod config;
pub mod manifest;
pub mod source;
pub mod stages;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::config::{GroupImages, PipelineConfig};
pub use self::manifest::{DatasetManifest, VariationStageOutput};
pub use self::source::{fetch_images, FetchedImage, FixtureSource, HttpSource, ImageSource, SourceUnavailable};
pub use self::stages::{run_image_stage, run_pipeline, run_variation_stage, ImageStageOutput};

use crate::semantics::NgdPurificationReport;
use crate::vision::SaliencyReport;

pub const VARIATIONS_FILE: &str = "variations.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORTS_FILE: &str = "reports.json";
pub const NGD_REPORT_FILE: &str = "ngd_report.txt";
pub const SALIENCY_REPORT_FILE: &str = "saliency_report.txt";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: corpus contains no usable records")]
    EmptyCorpus { path: String },
    #[error("no variation survived the {step} step")]
    NoSurvivingVariations { step: String },
    #[error("negatives {path}: {reason}")]
    Negatives { path: String, reason: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl PipelineError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Configuration problems are usage errors; everything else concerns data.
    pub fn is_usage(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reports {
    pub ngd_report: NgdPurificationReport,
    pub saliency_report: SaliencyReport,
}

impl Reports {
    pub fn render(&self) -> String {
        format!("{}\n{}", self.ngd_report.render(), self.saliency_report.render())
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

/// File-name form of a variation name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

pub fn write_variation_stage(out: &Path, stage: &VariationStageOutput) -> Result<(), PipelineError> {
    let reports = Reports {
        ngd_report: stage.ngd_report.clone(),
        saliency_report: stage.saliency_report.clone(),
    };
    write(&out.join(VARIATIONS_FILE), to_json(stage))?;
    write(&out.join(REPORTS_FILE), to_json(&reports))?;
    write(&out.join(NGD_REPORT_FILE), stage.ngd_report.render())?;
    write(&out.join(SALIENCY_REPORT_FILE), stage.saliency_report.render())
}

pub fn write_image_stage(out: &Path, stage: &ImageStageOutput) -> Result<(), PipelineError> {
    write(&out.join(MANIFEST_FILE), stage.manifest.to_json())?;
    for (name, records) in &stage.traces {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("serializable"));
            text.push('\n');
        }
        write(&out.join("traces").join(format!("{}.jsonl", file_stem(name))), text)?;
    }
    for f in stage.kept_files.values() {
        write(&out.join("images").join(format!("{}.{}", f.id, f.extension)), &f.bytes)?;
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads a saved variation stage from a file or an output directory.
pub fn read_variation_stage(path: &Path) -> Result<VariationStageOutput, PipelineError> {
    if path.is_dir() {
        read_json(&path.join(VARIATIONS_FILE))
    } else {
        read_json(path)
    }
}

/// Reads saved reports from an output directory, a `reports.json` file or a
/// `variations.json` file.
pub fn read_reports(path: &Path) -> Result<Reports, PipelineError> {
    let file = if path.is_dir() { path.join(REPORTS_FILE) } else { path.to_path_buf() };
    match read_json::<Reports>(&file) {
        Ok(r) => Ok(r),
        Err(first) => match read_json::<VariationStageOutput>(&file) {
            Ok(stage) => Ok(Reports {
                ngd_report: stage.ngd_report,
                saliency_report: stage.saliency_report,
            }),
            Err(_) => Err(first),
        },
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, PipelineError> {
    if path.is_dir() {
        read_json(&path.join(MANIFEST_FILE))
    } else {
        read_json(path)
    }
}
