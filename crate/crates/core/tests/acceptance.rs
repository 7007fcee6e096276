//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{cli, path_str};
use purify_core::corpus::{build_count_index, CountIndex};
use purify_core::pipeline::stages::run_text_steps;
use purify_core::pipeline::{read_manifest, DatasetManifest, PipelineConfig};
use purify_core::purifier::{
    background_stats, elda_select, progressive_prune, removal_probability, train_detectors, BackgroundStats,
    ClassScorePair, PruneConfig, PurifyError, ScoreProvider,
};
use purify_core::purifier::ProviderError;
use purify_core::rng::SplitMix64;
use purify_core::semantics::ngd;
use purify_core::synth::{blob_image, family_image, noise_image, PlantedFixture, PlantedSpec, VisualFamily};
use purify_core::vision::{
    extract_hog, filter_salient, merge_visual_groups, saliency_score, train_linear_classifier, FeatureVector,
    HogLayout, MergeMode, SplitSizes, SvmConfig, VariationImageSplit, VisualGraph,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

/// Counts by scanning document sets directly.
fn brute_counts(docs: &[BTreeSet<&str>], x: &str, y: &str) -> (u64, u64, u64) {
    let fx = docs.iter().filter(|d| d.contains(x)).count() as u64;
    let fy = docs.iter().filter(|d| d.contains(y)).count() as u64;
    let fxy = docs.iter().filter(|d| d.contains(x) && d.contains(y)).count() as u64;
    (fx, fy, fxy)
}

/// NGD from integer ratios: ln(max/fxy) / ln(N/min) in the given base.
fn oracle_ngd(fx: u64, fy: u64, fxy: u64, n: u64, log: fn(f64) -> f64) -> Option<f64> {
    if fx == 0 || fy == 0 {
        return None;
    }
    if fxy == 0 {
        return Some(f64::INFINITY);
    }
    let (hi, lo) = (fx.max(fy), fx.min(fy));
    if n <= lo {
        return Some(f64::INFINITY);
    }
    Some((log(hi as f64 / fxy as f64) / log(n as f64 / lo as f64)).max(0.0))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(101);
    let vocab: Vec<String> = (0..14).map(|i| format!("t{i}")).collect();
    let rates = [0.9, 0.7, 0.5, 0.5, 0.4, 0.3, 0.3, 0.2, 0.1, 0.1, 0.05, 0.02];
    let mut docs: Vec<String> = (0..97)
        .map(|_| {
            let words: Vec<&str> = vocab[..12]
                .iter()
                .zip(rates)
                .filter_map(|(w, r)| (rng.next_f64() < r).then_some(w.as_str()))
                .collect();
            format!("x {}", words.join(" "))
        })
        .collect();
    // t12 appears in every document; t13 never.
    for d in &mut docs {
        d.push_str(" t12");
    }
    let index: CountIndex = build_count_index(&docs).map_err(|e| e.to_string())?;
    let sets: Vec<BTreeSet<&str>> = docs.iter().map(|d| d.split_whitespace().collect()).collect();
    let n = docs.len() as u64;

    let mut worst = 0.0f64;
    let mut pairs = 0;
    for x in &vocab {
        for y in &vocab {
            let (fx, fy, fxy) = brute_counts(&sets, x, y);
            let got = ngd(x, y, &index).ok();
            for log in [f64::ln, f64::log2, f64::log10] {
                let want = oracle_ngd(fx, fy, fxy, n, log);
                match (got, want) {
                    (None, None) => {}
                    (Some(g), Some(w)) if g.is_infinite() || w.is_infinite() => {
                        check(g == w, format!("ngd({x},{y}) = {g}, oracle {w}"))?;
                    }
                    (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                    (g, w) => return Err(format!("ngd({x},{y}) = {g:?}, oracle {w:?}")),
                }
            }
            pairs += 1;
        }
        if let Ok(d) = ngd(x, x, &index) {
            if index.frequency(x) < n {
                check(d == 0.0, format!("ngd({x},{x}) = {d}"))?;
            }
        }
    }
    check(worst <= 1e-12, format!("max |ngd - oracle| = {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "{pairs} pairs over {n} docs, 3 log bases, max |err| {worst:.1e}, {:.2?}",
        start.elapsed()
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let fixture = PlantedFixture::generate(PlantedSpec::default());
    let relevant = fixture.relevant_set();
    let config = PipelineConfig {
        concept: "horse".into(),
        ..PipelineConfig::default()
    };
    let text = run_text_steps(&config, &fixture.records(), &fixture.count_index(), Some(&relevant))
        .map_err(|e| e.to_string())?;
    let labeled = text.report.labeled.clone().ok_or("no labeled summary")?;
    check(
        labeled.after.precision > labeled.before.precision,
        format!("precision {} -> {}", labeled.before.precision, labeled.after.precision),
    )?;
    let planted = relevant.len();
    check(
        labeled.after.correct * 10 >= planted * 9,
        format!("{} of {planted} planted survive", labeled.after.correct),
    )?;
    check(
        labeled.false_pos * 10 <= planted,
        format!("{} planted false removals", labeled.false_pos),
    )?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "precision {:.1}% -> {:.1}%, {}/{planted} planted kept, false pos {}, {:.2?}",
        100.0 * labeled.before.precision,
        100.0 * labeled.after.precision,
        labeled.after.correct,
        labeled.false_pos,
        start.elapsed()
    ))
}

/// Scores an image by its first feature: (x0, 1 - x0).
struct FirstComponent;

impl ScoreProvider for FirstComponent {
    fn train(&mut self, _: &[&FeatureVector], _: &[&FeatureVector]) -> Result<(), ProviderError> {
        Ok(())
    }
    fn score(&self, x: &FeatureVector) -> Result<ClassScorePair, ProviderError> {
        Ok(ClassScorePair::from_probability(x.as_slice()[0]))
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let values = [0.5, 0.52, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.95];
    let images: Vec<FeatureVector> = values.iter().map(|&v| FeatureVector::new(vec![v])).collect();
    let cfg = PruneConfig {
        max_rounds: 1,
        min_removal_fraction: 0.01,
    };
    let trials = 10_000u64;
    let mut removed = vec![0u64; values.len()];
    for seed in 0..trials {
        let trace = match progressive_prune(&images, &[], &mut FirstComponent, seed, &cfg) {
            Ok(o) => o.trace,
            Err(PurifyError::EmptySurvivorSet(t)) => *t,
            Err(e) => return Err(e.to_string()),
        };
        for d in trace.rounds[0].removed() {
            removed[d.image] += 1;
        }
    }
    let mut worst = 0.0f64;
    for (i, &v) in values.iter().enumerate() {
        let analytic = (2.0 - (2.0 * v - 1.0f64).abs().exp()).max(0.0);
        let empirical = removed[i] as f64 / trials as f64;
        worst = worst.max((empirical - analytic).abs());
    }
    check(worst <= 0.02, format!("max |empirical - analytic| = {worst}"))?;

    let p = |a: f64, b: f64| removal_probability(&ClassScorePair { positive: a, negative: b });
    check(p(0.5, 0.5) == 1.0 && p(0.3, 0.3) == 1.0, "P != 1 at zero gap")?;
    let ln2 = std::f64::consts::LN_2;
    for gap in [ln2, ln2 + 1e-12, 0.7, 0.8, 1.0] {
        let got = p(0.5 + gap / 2.0, 0.5 - gap / 2.0);
        check(got == 0.0, format!("P = {got} at gap {gap}"))?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "{trials} trials x {} images, max deviation {worst:.4}, {:.2?}",
        values.len(),
        start.elapsed()
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

fn hog_set(n: usize, seed: u64, mut make: impl FnMut(&mut SplitMix64) -> purify_core::vision::GrayImage) -> Vec<FeatureVector> {
    let layout = HogLayout::default();
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| extract_hog(&make(&mut rng), &layout)).collect()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    // Identity statistics: detectors are the exemplars themselves.
    let mut rng = SplitMix64::new(44);
    let xs: Vec<FeatureVector> = (0..60)
        .map(|_| FeatureVector::new((0..40).map(|_| rng.next_f64() * 2.0 - 1.0).collect()))
        .collect();
    let stats = BackgroundStats::identity(40);
    let detectors = train_detectors(&xs, &stats).map_err(|e| e.to_string())?;
    let selection = elda_select(&xs, &detectors, xs.len(), 5);
    let mut brute: Vec<(usize, f64)> = (0..xs.len())
        .map(|i| {
            let mut r: Vec<f64> = (0..xs.len())
                .filter(|&j| j != i)
                .map(|j| dot(xs[j].as_slice(), xs[i].as_slice()))
                .collect();
            r.sort_by(|a, b| b.total_cmp(a));
            (i, r[..5].iter().sum::<f64>() / 5.0)
        })
        .collect();
    brute.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let got: Vec<usize> = selection.kept.iter().map(|r| r.index).collect();
    let want: Vec<usize> = brute.iter().map(|r| r.0).collect();
    check(got == want, "identity ordering differs from brute-force dot products")?;

    // 110 coherent images and 10 white-noise outliers.
    let family = VisualFamily::nth(2);
    let mut images = hog_set(110, 45, |r| family_image(r, &family, 64));
    images.extend(hog_set(10, 46, |r| noise_image(r, 64)));
    let negatives = hog_set(50, 47, |r| blob_image(r, 64));
    let stats = background_stats(&negatives).map_err(|e| e.to_string())?;
    let detectors = train_detectors(&images, &stats).map_err(|e| e.to_string())?;
    let selection = elda_select(&images, &detectors, 100, 5);
    let leaked: Vec<usize> = selection.kept.iter().map(|r| r.index).filter(|&i| i >= 110).collect();
    check(leaked.is_empty(), format!("outliers in top 100: {leaked:?}"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "identity ordering exact over {} images; 0/10 outliers in top 100, {:.2?}",
        xs.len(),
        start.elapsed()
    ))
}

fn saliency_of(positives: &[FeatureVector], negatives: &[FeatureVector], seed: u64) -> Result<f64, String> {
    let neg_sizes = SplitSizes {
        train: 25,
        validation: 25,
    };
    let neg = neg_sizes
        .split(negatives, &mut SplitMix64::for_stream(seed, "negatives"))
        .map_err(|e| e.to_string())?;
    let pos_sizes = SplitSizes {
        train: 75,
        validation: 25,
    };
    let split = VariationImageSplit::new(positives, pos_sizes, &neg, &mut SplitMix64::new(seed))
        .map_err(|e| e.to_string())?;
    let c = train_linear_classifier(&split.train_positive, &split.train_negative, &SvmConfig::default())
        .map_err(|e| e.to_string())?;
    Ok(saliency_score(&c, &split))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let family = VisualFamily::nth(9);
    let positives = hog_set(100, 51, |r| family_image(r, &family, 64));
    let negatives = hog_set(50, 52, |r| blob_image(r, 64));
    let s = saliency_of(&positives, &negatives, 5)?;
    let (kept, _) = filter_salient(vec!["separable"], &[s], 0.7);
    check(s >= 0.9 && kept.len() == 1, format!("separable S = {s}"))?;

    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut pool: Vec<FeatureVector> = positives.iter().chain(&negatives).cloned().collect();
        SplitMix64::new(1000 + seed).shuffle(&mut pool);
        let (pos, neg) = pool.split_at(100);
        let s = saliency_of(pos, neg, seed)?;
        let (kept, removed) = filter_salient(vec!["shuffled"], &[s], 0.7);
        check(s <= 0.65 && kept.is_empty() && removed.len() == 1, format!("seed {seed}: shuffled S = {s}"))?;
        worst = worst.max(s);
    }
    let (kept, removed) = filter_salient(vec!["boundary"], &[0.70], 0.7);
    check(kept.is_empty() && removed.len() == 1, "S = 0.70 was kept")?;
    Ok(format!(
        "separable S = {s:.3} kept; shuffled max S = {worst:.3} over 20 seeds, removed; S = 0.70 removed, {:.2?}",
        start.elapsed()
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let names = ["tiger cubs", "small tiger", "baby tiger", "little tiger"];
    let family = VisualFamily::nth(4);
    let negatives = hog_set(50, 61, |r| blob_image(r, 64));
    let neg = SplitSizes {
        train: 25,
        validation: 25,
    }
    .split(&negatives, &mut SplitMix64::for_stream(6, "negatives"))
    .map_err(|e| e.to_string())?;
    let mut splits = Vec::new();
    let mut classifiers = Vec::new();
    for (i, _) in names.iter().enumerate() {
        let pos = hog_set(100, 600 + i as u64, |r| family_image(r, &family, 64));
        let split = VariationImageSplit::new(
            &pos,
            SplitSizes {
                train: 75,
                validation: 25,
            },
            &neg,
            &mut SplitMix64::new(6 + i as u64),
        )
        .map_err(|e| e.to_string())?;
        let c = train_linear_classifier(&split.train_positive, &split.train_negative, &SvmConfig::default())
            .map_err(|e| e.to_string())?;
        splits.push(split);
        classifiers.push(c);
    }
    let graph = VisualGraph::from_classifiers(
        names.iter().map(|s| s.to_string()).collect(),
        vec![10, 40, 30, 20],
        &classifiers,
        &splits,
    );
    for i in 0..names.len() {
        let independent = saliency_score(&classifiers[i], &splits[i]);
        check(
            graph.edges[i][i].to_bits() == graph.scores[i].to_bits() && graph.scores[i].to_bits() == independent.to_bits(),
            format!("E_ii != V_i for {}", names[i]),
        )?;
    }
    let groups = merge_visual_groups(&graph, 0.1, MergeMode::Either);
    check(groups.len() == 1, format!("{} groups", groups.len()))?;
    Ok(format!(
        "4 variations -> 1 group (representative {:?}); E_ii = V_i exactly, {:.2?}",
        names[groups[0].representative],
        start.elapsed()
    ))
}

fn run_args(fx: &purify_core::synth::FixturePaths, out: &std::path::Path, seed: &str) -> Vec<String> {
    [
        "run",
        "--concept",
        "horse",
        "--corpus",
        path_str(&fx.corpus),
        "--docs",
        path_str(&fx.docs),
        "--images",
        path_str(&fx.images),
        "--out",
        path_str(out),
        "--seed",
        seed,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run_cli_ok(args: &[String]) -> Result<(), String> {
    let (code, _, stderr) = cli(&args.iter().map(String::as_str).collect::<Vec<_>>());
    check(code == 0, format!("exit {code}: {stderr}"))
}

fn criterion_7(manifests: &mut Vec<(String, DatasetManifest)>) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = PlantedSpec {
        relevant: 5,
        noise: 5,
        hard_noise: 0,
        synonym_pairs: 0,
        concept_docs: 150,
        filler_docs: 300,
        images_per_variation: 120,
        seed: 77,
        ..PlantedSpec::default()
    };
    let fx = PlantedFixture::generate(spec).write(&dir.path().join("fx")).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    run_cli_ok(&run_args(&fx, &a, "7"))?;
    let first = start.elapsed();
    run_cli_ok(&run_args(&fx, &b, "7"))?;
    let bytes_a = fs::read(a.join("manifest.json")).map_err(|e| e.to_string())?;
    let bytes_b = fs::read(b.join("manifest.json")).map_err(|e| e.to_string())?;
    check(bytes_a == bytes_b, "manifests differ between identical runs")?;
    let manifest = read_manifest(&a).map_err(|e| e.to_string())?;
    check(
        manifest.variations.len() == 5 && manifest.variations.iter().all(|v| v.fetched == 120),
        format!("expected 5 variations x 120 images, got {}", manifest.variations.len()),
    )?;
    manifests.push(("determinism run a".into(), manifest));
    manifests.push(("determinism run b".into(), read_manifest(&b).map_err(|e| e.to_string())?));
    within(first, Duration::from_secs(60))?;
    Ok(format!(
        "manifests byte-identical ({} bytes); 5 x 120 pipeline in {first:.2?}",
        bytes_a.len()
    ))
}

fn criterion_8(mut manifests: Vec<(String, DatasetManifest)>) -> Outcome {
    // An extra run over a messy source: duplicates, corrupt files, union mode.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = PlantedFixture::generate(common::small_spec(88));
    let fx = fixture.write(&dir.path().join("fx")).map_err(|e| e.to_string())?;
    let first = fixture.relevant().next().ok_or("no relevant variation")?;
    let messy = fx.images.join(first.phrase.replace(' ', "_"));
    fs::copy(messy.join("0000.pgm"), messy.join("0000b.pgm")).map_err(|e| e.to_string())?;
    fs::write(messy.join("0002b.png"), b"corrupt").map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let mut args = run_args(&fx, &out, "8");
    args.extend(["--group-images".to_string(), "union".to_string()]);
    run_cli_ok(&args)?;
    manifests.push(("messy union run".into(), read_manifest(&out).map_err(|e| e.to_string())?));

    let mut fetched = 0;
    let mut variations = 0;
    for (label, m) in &manifests {
        let totals = m.audit().map_err(|e| format!("{label}: {e}"))?;
        check(totals.kept + totals.removed == totals.fetched, format!("{label}: totals"))?;
        fetched += totals.fetched;
        variations += m.variations.len();
    }
    Ok(format!(
        "{} manifests, {variations} variations, {fetched} images: kept + removed = fetched everywhere",
        manifests.len()
    ))
}

fn main() -> ExitCode {
    let mut manifests = Vec::new();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 NGD correctness", criterion_1()),
        ("2 purification direction", criterion_2()),
        ("3 removal sampling fidelity", criterion_3()),
        ("4 exemplar-LDA ranking", criterion_4()),
        ("5 saliency gate", criterion_5()),
        ("6 visual grouping", criterion_6()),
        ("7 end-to-end determinism", criterion_7(&mut manifests)),
        ("8 conservation audit", criterion_8(manifests)),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
