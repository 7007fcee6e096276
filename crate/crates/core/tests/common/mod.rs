#![allow(dead_code)]

use std::path::Path;

use purify_core::pipeline::PipelineConfig;
use purify_core::synth::{FixturePaths, PlantedFixture, PlantedSpec};

/// A fixture small enough for many pipeline runs per test.
pub fn small_spec(seed: u64) -> PlantedSpec {
    PlantedSpec {
        relevant: 5,
        noise: 10,
        hard_noise: 2,
        synonym_pairs: 1,
        concept_docs: 120,
        noise_docs_each: 10,
        filler_docs: 200,
        images_per_variation: 40,
        negatives: 30,
        seed,
        ..PlantedSpec::default()
    }
}

pub fn write_fixture(dir: &Path, spec: PlantedSpec) -> (PlantedFixture, FixturePaths) {
    let fixture = PlantedFixture::generate(spec);
    let paths = fixture.write(dir).expect("fixture written");
    (fixture, paths)
}

pub fn config_for(paths: &FixturePaths, concept: &str, seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.concept = concept.to_string();
    c.seed = seed;
    c.paths.corpus = Some(paths.corpus.clone());
    c.paths.docs = Some(paths.docs.clone());
    c.paths.images = Some(paths.images.clone());
    c
}

/// Runs the CLI in-process; returns (status, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("purify").chain(args.iter().copied());
    let code = purify_core::pipeline::cli::run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}
