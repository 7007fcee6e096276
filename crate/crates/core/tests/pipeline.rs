mod common;

use std::collections::BTreeSet;
use std::fs;

use common::{config_for, small_spec, write_fixture};
use purify_core::pipeline::manifest::{RemovalStage, VariationStatus};
use purify_core::pipeline::stages::{image_stage_from_parts, load_negatives, run_text_steps};
use purify_core::pipeline::{run_pipeline, run_variation_stage, FixtureSource, PipelineConfig, PipelineError};
use purify_core::synth::{family_image, write_images, PlantedFixture, PlantedSpec, VisualFamily};
use purify_core::rng::SplitMix64;

#[test]
fn planted_fixture_keeps_relevant_and_drops_noise() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, paths) = write_fixture(dir.path(), PlantedSpec::default());
    let config = config_for(&paths, "horse", 7);
    let stage = run_variation_stage(&config, &FixtureSource::new(&paths.images)).unwrap();

    let surviving: BTreeSet<&str> = stage.variations.iter().flat_map(|v| v.all_names()).collect();
    let relevant = fixture.relevant_set();
    let planted_kept = relevant.iter().filter(|p| surviving.contains(p.as_str())).count();
    let noise_removed = fixture.noise().filter(|v| !surviving.contains(v.phrase.as_str())).count();
    assert!(planted_kept >= 18, "planted kept {planted_kept}");
    assert!(noise_removed >= 48, "noise removed {noise_removed}");

    // Every discovered phrase is accounted for exactly once.
    let removed: BTreeSet<&str> = stage.removed.iter().map(|r| r.phrase.as_str()).collect();
    assert!(surviving.is_disjoint(&removed));
    assert_eq!(surviving.len() + removed.len(), stage.discovered);
    assert_eq!(stage.ngd_report.stages.len(), 5);
}

#[test]
fn absent_concept_has_no_variations_at_discovery() {
    let dir = tempfile::tempdir().unwrap();
    let (_, paths) = write_fixture(dir.path(), small_spec(1));
    let config = config_for(&paths, "zebra", 1);
    match run_variation_stage(&config, &FixtureSource::new(&paths.images)) {
        Err(PipelineError::NoSurvivingVariations { step }) => assert_eq!(step, "discover"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn text_steps_merge_synonym_pairs() {
    let fixture = PlantedFixture::generate(small_spec(2));
    let config = PipelineConfig {
        concept: "horse".into(),
        ..PipelineConfig::default()
    };
    let text = run_text_steps(&config, &fixture.records(), &fixture.count_index(), None).unwrap();
    for (a, b) in &fixture.synonyms {
        let group = text
            .variations
            .iter()
            .find(|v| &v.name == a || &v.name == b)
            .expect("pair survives");
        let names: BTreeSet<&str> = std::iter::once(group.name.as_str())
            .chain(group.semantic_aliases.iter().map(String::as_str))
            .collect();
        assert!(names.contains(a.as_str()) && names.contains(b.as_str()));
    }
}

#[test]
fn end_to_end_manifest_is_conserved_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (_, paths) = write_fixture(dir.path(), small_spec(3));
    let config = config_for(&paths, "horse", 3);
    let (stage1, stage2) = run_pipeline(&config, &FixtureSource::new(&paths.images)).unwrap();
    let manifest = &stage2.manifest;
    assert_eq!(manifest.variations.len(), stage1.variations.len());
    let totals = manifest.audit().unwrap();
    assert_eq!(totals.kept + totals.removed, totals.fetched);
    for v in &manifest.variations {
        assert!(v.kept.len() <= 100);
        assert!(matches!(v.status, VariationStatus::Ok { .. }), "{:?}", v.status);
    }
    let names: Vec<&str> = manifest.variations.iter().map(|v| v.name.as_str()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);

    let json = manifest.to_json();
    let back = purify_core::pipeline::DatasetManifest::from_json(&json).unwrap();
    assert_eq!(&back, manifest);
    assert_eq!(back.to_json(), json);

    // The echoed config re-runs to the same manifest.
    let again = run_pipeline(&manifest.config, &FixtureSource::new(&paths.images)).unwrap().1;
    assert_eq!(again.manifest.to_json(), json);
}

/// Image stage over hand-made directories: duplicates, undecodable files,
/// a small pool, an empty pool and a missing one.
#[test]
fn image_stage_handles_awkward_sources() {
    let dir = tempfile::tempdir().unwrap();
    let (_, paths) = write_fixture(dir.path(), small_spec(4));
    let config = config_for(&paths, "horse", 4).resolved().unwrap();
    let source = FixtureSource::new(&paths.images);
    let negatives = load_negatives(&config).unwrap();
    let mut stage1 = run_variation_stage(&config, &source).unwrap();

    let template = stage1.variations[0].clone();
    let mut add = |name: &str| {
        let mut v = template.clone();
        v.name = name.to_string();
        v.semantic_aliases.clear();
        v.visual_aliases.clear();
        stage1.variations.push(v);
    };
    let mut rng = SplitMix64::new(40);
    let fam = VisualFamily::nth(3);
    write_images(&paths.images.join("small_horse"), 30, |_| family_image(&mut rng, &fam, 64)).unwrap();
    add("small horse");
    let messy = paths.images.join("messy_horse");
    write_images(&messy, 20, |_| family_image(&mut rng, &fam, 64)).unwrap();
    fs::copy(messy.join("0000.pgm"), messy.join("0000a.pgm")).unwrap();
    fs::write(messy.join("0001a.png"), b"not a png").unwrap();
    add("messy horse");
    fs::create_dir_all(paths.images.join("empty_horse")).unwrap();
    add("empty horse");
    add("missing horse");

    let out = image_stage_from_parts(&config, &stage1, &source, &negatives).unwrap();
    let m = &out.manifest;
    m.audit().unwrap();
    let entry = |name: &str| m.variations.iter().find(|v| v.name == name).unwrap();

    let small = entry("small horse");
    assert_eq!(small.fetched, 30);
    assert!(small.removed.iter().all(|r| r.stage != RemovalStage::Elda));
    assert_eq!(out.traces["small horse"].iter().filter(|t| t.round == 1).count(), 30);

    let messy = entry("messy horse");
    assert_eq!(messy.fetched, 22);
    assert_eq!(messy.removed.iter().filter(|r| r.stage == RemovalStage::Duplicate).count(), 1);
    assert_eq!(messy.removed.iter().filter(|r| r.stage == RemovalStage::Undecodable).count(), 1);

    let empty = entry("empty horse");
    assert_eq!(empty.fetched, 0);
    assert_eq!(empty.status, VariationStatus::EmptySurvivorSet);

    let missing = entry("missing horse");
    assert!(matches!(missing.status, VariationStatus::SourceUnavailable { .. }));
    assert!(missing.kept.is_empty() && missing.fetched == 0);
}

#[test]
fn elda_caps_large_pools_at_one_hundred() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PlantedSpec {
        images_per_variation: 130,
        ..small_spec(5)
    };
    let (_, paths) = write_fixture(dir.path(), spec);
    let config = config_for(&paths, "horse", 5);
    let (_, out) = run_pipeline(&config, &FixtureSource::new(&paths.images)).unwrap();
    for v in &out.manifest.variations {
        assert_eq!(v.fetched, 120);
        assert_eq!(v.removed.iter().filter(|r| r.stage == RemovalStage::Elda).count(), 20);
        assert!(v.kept.len() <= 100);
    }
}

#[test]
fn union_mode_queries_every_group_member() {
    let dir = tempfile::tempdir().unwrap();
    let (fixture, paths) = write_fixture(dir.path(), small_spec(6));
    let mut config = config_for(&paths, "horse", 6);
    config.group_images = purify_core::pipeline::GroupImages::Union;
    let (_, out) = run_pipeline(&config, &FixtureSource::new(&paths.images)).unwrap();
    let (a, b) = &fixture.synonyms[0];
    let v = out
        .manifest
        .variations
        .iter()
        .find(|v| &v.name == a || &v.name == b)
        .unwrap();
    assert_eq!(v.queries.len(), 2);
    assert_eq!(v.fetched, 80);
    out.manifest.audit().unwrap();
}
