//! Python bindings for `purify-core`.
//!
//! Text and vision primitives are exposed as plain functions over lists and
//! floats. Whole stages take a config as a JSON string and return JSON.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use purify_core::corpus::{self, Pos};
use purify_core::pipeline::{self, cli::image_source, PipelineConfig, PipelineError};
use purify_core::purifier::{self, ClassScorePair};
use purify_core::semantics;
use purify_core::synth::{PlantedFixture, PlantedSpec};
use purify_core::vision::{self, FeatureVector, GrayImage, HogLayout, SvmConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    if e.is_usage() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn vectors(rows: Vec<Vec<f64>>) -> Vec<FeatureVector> {
    rows.into_iter().map(FeatureVector::new).collect()
}

#[pyclass(name = "NgramRecord", frozen)]
struct PyNgramRecord {
    inner: corpus::NgramRecord,
}

#[pymethods]
impl PyNgramRecord {
    /// `(surface, tag)` pairs; untagged tokens have an empty tag.
    #[getter]
    fn tokens(&self) -> Vec<(String, &'static str)> {
        self.inner
            .tokens
            .iter()
            .map(|t| (t.surface.clone(), t.pos.tag()))
            .collect()
    }

    #[getter]
    fn year(&self) -> i32 {
        self.inner.year
    }

    #[getter]
    fn match_count(&self) -> u64 {
        self.inner.match_count
    }

    #[getter]
    fn volume_count(&self) -> u64 {
        self.inner.volume_count
    }

    fn phrase(&self) -> String {
        self.inner.phrase()
    }

    fn __repr__(&self) -> String {
        format!("NgramRecord({:?}, year={})", self.inner.phrase(), self.inner.year)
    }
}

#[pyfunction]
fn parse_ngram_record(line: &str) -> PyResult<PyNgramRecord> {
    corpus::parse_ngram_record(line)
        .map(|inner| PyNgramRecord { inner })
        .map_err(value_err)
}

/// Returns `(phrase, frequency)` pairs, most frequent first.
#[pyfunction]
#[pyo3(signature = (concept, records, allowed_pos=None))]
fn discover_variations(
    concept: &str,
    records: Vec<PyRef<'_, PyNgramRecord>>,
    allowed_pos: Option<Vec<String>>,
) -> Vec<(String, u64)> {
    let allowed: Vec<Pos> = match allowed_pos {
        Some(tags) => tags.iter().map(|t| Pos::from_tag(t)).collect(),
        None => Pos::CONTENT.to_vec(),
    };
    corpus::discover_variations(concept, records.iter().map(|r| &r.inner), &allowed)
        .into_iter()
        .map(|c| (c.phrase, c.frequency))
        .collect()
}

/// Document-frequency index over whitespace-tokenized documents.
#[pyclass(name = "CountIndex", frozen)]
struct PyCountIndex {
    inner: corpus::CountIndex,
}

#[pymethods]
impl PyCountIndex {
    #[new]
    fn new(documents: Vec<String>) -> PyResult<Self> {
        corpus::build_count_index(&documents)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        corpus::read_document_file(&path)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[getter]
    fn total_docs(&self) -> u64 {
        self.inner.total_docs()
    }

    fn frequency(&self, phrase: &str) -> u64 {
        self.inner.frequency(phrase)
    }

    fn co_frequency(&self, x: &str, y: &str) -> u64 {
        self.inner.co_frequency(x, y)
    }
}

/// Raises `ValueError` when either term never occurs.
#[pyfunction]
fn ngd(x: &str, y: &str, index: &PyCountIndex) -> PyResult<f64> {
    semantics::ngd(x, y, &index.inner).map_err(value_err)
}

#[pyfunction]
fn symmetric_distance(x: &str, y: &str, index: &PyCountIndex) -> PyResult<f64> {
    semantics::symmetric_distance(x, y, &index.inner).map_err(value_err)
}

/// HOG descriptor of a row-major grayscale image with values in [0, 1].
#[pyfunction]
#[pyo3(signature = (width, height, pixels, layout_json=None))]
fn extract_hog(width: usize, height: usize, pixels: Vec<f64>, layout_json: Option<&str>) -> PyResult<Vec<f64>> {
    let image = GrayImage::new(width, height, pixels).map_err(value_err)?;
    let layout: HogLayout = match layout_json {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => HogLayout::default(),
    };
    Ok(vision::extract_hog(&image, &layout).into_inner())
}

/// HOG descriptor of an encoded image file (PNG or PNM).
#[pyfunction]
fn extract_hog_bytes(bytes: &[u8]) -> PyResult<Vec<f64>> {
    let image = GrayImage::decode(bytes).map_err(value_err)?;
    Ok(vision::extract_hog(&image, &HogLayout::default()).into_inner())
}

#[pyfunction]
fn removal_probability(positive: f64, negative: f64) -> PyResult<f64> {
    let pair = ClassScorePair::new(positive, negative).map_err(value_err)?;
    Ok(purifier::removal_probability(&pair))
}

/// Returns `(weights, bias)`.
#[pyfunction]
#[pyo3(signature = (positives, negatives, lambda_=0.01, epochs=200))]
fn train_linear_classifier(
    positives: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
    lambda_: f64,
    epochs: usize,
) -> PyResult<(Vec<f64>, f64)> {
    let config = SvmConfig { lambda: lambda_, epochs };
    let c = vision::train_linear_classifier(&vectors(positives), &vectors(negatives), &config).map_err(value_err)?;
    Ok((c.weights, c.bias))
}

/// Validated config JSON with every default filled in.
#[pyfunction]
#[pyo3(signature = (config_json=None))]
fn default_config(config_json: Option<&str>) -> PyResult<String> {
    let config = match config_json {
        Some(text) => PipelineConfig::from_json(text).map_err(pipeline_err)?,
        None => PipelineConfig::default(),
    };
    serde_json::to_string_pretty(&config).map_err(value_err)
}

/// Runs the variation stage; writes its files when `out_dir` is given.
/// Returns the stage output as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None))]
fn run_variation_stage(py: Python<'_>, config_json: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let config = PipelineConfig::from_json(config_json).map_err(pipeline_err)?;
    py.detach(|| {
        let source = image_source(&config)?;
        let stage = pipeline::run_variation_stage(&config, source.as_ref())?;
        if let Some(out) = &out_dir {
            pipeline::write_variation_stage(out, &stage)?;
        }
        Ok(serde_json::to_string_pretty(&stage).expect("stage output serializes"))
    })
    .map_err(pipeline_err)
}

/// Runs both stages; writes all outputs when `out_dir` is given.
/// Returns the dataset manifest as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None))]
fn run_pipeline(py: Python<'_>, config_json: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let config = PipelineConfig::from_json(config_json).map_err(pipeline_err)?;
    py.detach(|| {
        let source = image_source(&config)?;
        let (stage1, stage2) = pipeline::run_pipeline(&config, source.as_ref())?;
        if let Some(out) = &out_dir {
            pipeline::write_variation_stage(out, &stage1)?;
            pipeline::write_image_stage(out, &stage2)?;
        }
        Ok(stage2.manifest.to_json())
    })
    .map_err(pipeline_err)
}

/// Writes a synthetic corpus, documents and image pools under `root`.
/// Returns `(relevant phrases, config JSON pointing at the files)`.
#[pyfunction]
#[pyo3(signature = (root, seed=7, relevant=5, noise=10, hard_noise=2, images_per_variation=40))]
fn write_planted_fixture(
    root: PathBuf,
    seed: u64,
    relevant: usize,
    noise: usize,
    hard_noise: usize,
    images_per_variation: usize,
) -> PyResult<(Vec<String>, String)> {
    let fixture = PlantedFixture::generate(PlantedSpec {
        relevant,
        noise,
        hard_noise,
        synonym_pairs: 1,
        concept_docs: 120,
        noise_docs_each: 10,
        filler_docs: 200,
        images_per_variation,
        negatives: 30,
        seed,
        ..PlantedSpec::default()
    });
    let paths = fixture.write(&root).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let mut config = PipelineConfig::default();
    config.concept = fixture.spec.concept.clone();
    config.seed = seed;
    config.paths.corpus = Some(paths.corpus);
    config.paths.docs = Some(paths.docs);
    config.paths.images = Some(paths.images);
    let json = serde_json::to_string_pretty(&config).map_err(value_err)?;
    Ok((fixture.relevant_set().into_iter().collect(), json))
}

#[pymodule]
fn purify(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNgramRecord>()?;
    m.add_class::<PyCountIndex>()?;
    m.add_function(wrap_pyfunction!(parse_ngram_record, m)?)?;
    m.add_function(wrap_pyfunction!(discover_variations, m)?)?;
    m.add_function(wrap_pyfunction!(ngd, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_distance, m)?)?;
    m.add_function(wrap_pyfunction!(extract_hog, m)?)?;
    m.add_function(wrap_pyfunction!(extract_hog_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(removal_probability, m)?)?;
    m.add_function(wrap_pyfunction!(train_linear_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_variation_stage, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(write_planted_fixture, m)?)?;
    Ok(())
}
