//! Synthetic fixtures with known ground truth: a planted n-gram corpus and
//! count-index documents, plus procedurally drawn images.
//!
//! Relevant modifiers co-occur with the concept in about half of the concept
//! documents. Plain noise modifiers almost never do; "hard" noise co-occurs
//! often enough to pass the text filter, but its images carry no visual
//! pattern. Each relevant variation gets its own visual family: an oriented
//! grating confined to one quadrant over a smooth random background.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::corpus::{build_count_index, parse_ngram_record, CountIndex, NgramRecord};
use crate::pipeline::source::query_dir_name;
use crate::rng::SplitMix64;
use crate::vision::GrayImage;

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ru", "te", "sa", "vo", "ne", "pi", "du", "ga", "fe", "zo", "ri", "ba", "no", "ve", "tu", "ma",
    "le", "si", "po", "da", "ki",
];

const CONTENT_TAGS: [&str; 4] = ["ADJ", "NOUN", "VERB", "ADV"];

/// Standard normal draw (Box-Muller).
pub fn normal(rng: &mut SplitMix64) -> f64 {
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Distinct pseudo-words, none of which is in `taken`.
fn pseudo_words(rng: &mut SplitMix64, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = 2 + rng.next_below(2);
        let word: String = (0..len).map(|_| SYLLABLES[rng.next_below(SYLLABLES.len())]).collect();
        if taken.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSpec {
    pub concept: String,
    pub relevant: usize,
    /// Noise variations in total, including the hard ones.
    pub noise: usize,
    pub hard_noise: usize,
    /// Relevant variations that get a synonym among the relevant ones; each
    /// pair counts twice towards `relevant`.
    pub synonym_pairs: usize,
    pub concept_docs: usize,
    pub noise_docs_each: usize,
    pub filler_docs: usize,
    pub images_per_variation: usize,
    pub negatives: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            concept: "horse".to_string(),
            relevant: 20,
            noise: 80,
            hard_noise: 16,
            synonym_pairs: 2,
            concept_docs: 200,
            noise_docs_each: 20,
            filler_docs: 800,
            images_per_variation: 120,
            negatives: 50,
            image_size: 64,
            seed: 7,
        }
    }
}

/// Oriented grating confined to one quadrant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisualFamily {
    pub angle: f64,
    pub period: f64,
    pub quadrant: usize,
}

impl VisualFamily {
    /// The `i`-th of 20 well-separated families: 5 orientations × 4
    /// quadrants.
    pub fn nth(i: usize) -> Self {
        let i = i % 20;
        Self {
            angle: (i % 5) as f64 * PI / 5.0,
            period: 7.0,
            quadrant: (i / 5 + i % 5) % 4,
        }
    }
}

fn blob_field(rng: &mut SplitMix64, size: usize) -> Vec<f64> {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.next_f64() * size as f64,
                rng.next_f64() * size as f64,
                size as f64 * (0.1 + 0.25 * rng.next_f64()),
                (rng.next_f64() - 0.5) * 0.8,
            )
        })
        .collect();
    let mut px = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let mut v = 0.5;
            for &(cx, cy, s, a) in &blobs {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                v += a * (-d2 / (2.0 * s * s)).exp();
            }
            px.push(v);
        }
    }
    px
}

fn finish(rng: &mut SplitMix64, size: usize, mut px: Vec<f64>, noise: f64) -> GrayImage {
    for p in &mut px {
        *p = (*p + noise * normal(rng)).clamp(0.0, 1.0);
    }
    GrayImage::new(size, size, px).expect("square image")
}

/// Smooth random background: the negative class and non-salient images.
pub fn blob_image(rng: &mut SplitMix64, size: usize) -> GrayImage {
    let px = blob_field(rng, size);
    finish(rng, size, px, 0.03)
}

/// A jittered member of `family`.
pub fn family_image(rng: &mut SplitMix64, family: &VisualFamily, size: usize) -> GrayImage {
    let mut px = blob_field(rng, size);
    let angle = family.angle + (rng.next_f64() - 0.5) * 0.12;
    let period = family.period * (0.9 + 0.2 * rng.next_f64());
    let phase = rng.next_f64() * 2.0 * PI;
    let half = size / 2;
    let (x0, y0) = ((family.quadrant % 2) * half, (family.quadrant / 2) * half);
    let (c, s) = (angle.cos(), angle.sin());
    for y in y0..y0 + half {
        for x in x0..x0 + half {
            let t = (x as f64 * c + y as f64 * s) / period;
            px[y * size + x] = 0.5 + 0.4 * (2.0 * PI * t + phase).sin();
        }
    }
    finish(rng, size, px, 0.03)
}

/// Uniform white noise.
pub fn noise_image(rng: &mut SplitMix64, size: usize) -> GrayImage {
    let px = (0..size * size).map(|_| rng.next_f64()).collect();
    GrayImage::new(size, size, px).expect("square image")
}

/// What a planted variation looks like.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlantedKind {
    Relevant { family: usize },
    HardNoise,
    Noise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedVariation {
    pub phrase: String,
    pub modifier: String,
    pub kind: PlantedKind,
}

#[derive(Clone, Debug)]
pub struct PlantedFixture {
    pub spec: PlantedSpec,
    pub variations: Vec<PlantedVariation>,
    /// (kept-representative-candidate, synonym) phrase pairs.
    pub synonyms: Vec<(String, String)>,
    pub ngram_lines: Vec<String>,
    pub documents: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub corpus: PathBuf,
    pub docs: PathBuf,
    pub labels: PathBuf,
    pub images: PathBuf,
    pub negatives: PathBuf,
}

impl PlantedFixture {
    pub fn generate(spec: PlantedSpec) -> Self {
        assert!(spec.hard_noise <= spec.noise);
        assert!(2 * spec.synonym_pairs <= spec.relevant);
        let mut rng = SplitMix64::new(spec.seed);
        let mut taken = BTreeSet::from([spec.concept.clone()]);
        let modifiers = pseudo_words(&mut rng, spec.relevant + spec.noise, &mut taken);
        let fillers = pseudo_words(&mut rng, 300, &mut taken);

        let phrase = |m: &str| format!("{m} {}", spec.concept);
        let mut variations = Vec::new();
        for (i, m) in modifiers.iter().enumerate() {
            let kind = if i < spec.relevant {
                // Synonym partners share the family of their pair leader.
                let family = if i < 2 * spec.synonym_pairs { i / 2 } else { i - spec.synonym_pairs };
                PlantedKind::Relevant { family }
            } else if i < spec.relevant + spec.hard_noise {
                PlantedKind::HardNoise
            } else {
                PlantedKind::Noise
            };
            variations.push(PlantedVariation {
                phrase: phrase(m),
                modifier: m.clone(),
                kind,
            });
        }
        let synonyms = (0..spec.synonym_pairs)
            .map(|p| (variations[2 * p].phrase.clone(), variations[2 * p + 1].phrase.clone()))
            .collect();

        let filler = |rng: &mut SplitMix64, n: usize| -> Vec<String> {
            (0..n).map(|_| fillers[rng.next_below(fillers.len())].clone()).collect()
        };

        // Concept documents.
        let mut concept_docs: Vec<Vec<String>> = (0..spec.concept_docs)
            .map(|_| {
                let mut d = vec![spec.concept.clone()];
                d.extend(filler(&mut rng, 6));
                d
            })
            .collect();
        for doc in &mut concept_docs {
            let mut leader_in = false;
            for (i, v) in variations.iter().enumerate() {
                let include = match v.kind {
                    PlantedKind::Relevant { .. } if i < 2 * spec.synonym_pairs && i % 2 == 1 => leader_in,
                    PlantedKind::Relevant { .. } => {
                        leader_in = rng.next_f64() < 0.5;
                        leader_in
                    }
                    PlantedKind::HardNoise => rng.next_f64() < 0.3,
                    PlantedKind::Noise => false,
                };
                if include {
                    doc.push(v.modifier.clone());
                }
            }
        }
        for v in variations.iter().filter(|v| v.kind == PlantedKind::Noise) {
            for _ in 0..rng.next_below(4) {
                let d = rng.next_below(concept_docs.len());
                concept_docs[d].push(v.modifier.clone());
            }
        }

        let mut documents: Vec<Vec<String>> = concept_docs;
        for v in &variations {
            let own = match v.kind {
                PlantedKind::Relevant { .. } => 5,
                _ => spec.noise_docs_each,
            };
            for _ in 0..own {
                let mut d = vec![v.modifier.clone()];
                d.extend(filler(&mut rng, 6));
                documents.push(d);
            }
        }
        for _ in 0..spec.filler_docs {
            documents.push(filler(&mut rng, 8));
        }
        // Deterministic interleaving so document order carries no signal.
        rng.shuffle(&mut documents);
        let documents = documents.into_iter().map(|d| d.join(" ")).collect();

        let mut ngram_lines = Vec::new();
        let c = &spec.concept;
        ngram_lines.push(format!("{c}_NOUN\t2000\t90000\t4000"));
        for v in &variations {
            let tag = CONTENT_TAGS[rng.next_below(CONTENT_TAGS.len())];
            for year in [2006, 2007, 2008].into_iter().take(1 + rng.next_below(3)) {
                let count = 40 + rng.next_below(4000);
                ngram_lines.push(format!("{}_{tag} {c}_NOUN\t{year}\t{count}\t{}", v.modifier, 1 + count / 10));
            }
        }
        for det in ["the", "a", "this"] {
            ngram_lines.push(format!("{det}_DET {c}_NOUN\t2008\t50000\t900"));
        }
        ngram_lines.push(format!("the_DET {}_ADJ {c}_NOUN\t2008\t700\t50", variations[0].modifier));

        Self {
            spec,
            variations,
            synonyms,
            ngram_lines,
            documents,
        }
    }

    pub fn relevant(&self) -> impl Iterator<Item = &PlantedVariation> {
        self.variations
            .iter()
            .filter(|v| matches!(v.kind, PlantedKind::Relevant { .. }))
    }

    pub fn noise(&self) -> impl Iterator<Item = &PlantedVariation> {
        self.variations
            .iter()
            .filter(|v| !matches!(v.kind, PlantedKind::Relevant { .. }))
    }

    pub fn relevant_set(&self) -> BTreeSet<String> {
        self.relevant().map(|v| v.phrase.clone()).collect()
    }

    pub fn records(&self) -> Vec<NgramRecord> {
        self.ngram_lines
            .iter()
            .map(|l| parse_ngram_record(l).expect("generated lines parse"))
            .collect()
    }

    pub fn count_index(&self) -> CountIndex {
        build_count_index(&self.documents).expect("non-empty")
    }

    /// Writes corpus, documents, labels and images under `root`. Images are
    /// written for relevant and hard-noise variations only; plain noise never
    /// reaches the image steps.
    pub fn write(&self, root: &Path) -> io::Result<FixturePaths> {
        let paths = FixturePaths {
            root: root.to_path_buf(),
            corpus: root.join("corpus.ngrams"),
            docs: root.join("docs.txt"),
            labels: root.join("labels.txt"),
            images: root.join("images"),
            negatives: root.join("images").join("_negatives"),
        };
        fs::create_dir_all(root)?;
        fs::write(&paths.corpus, lines(&self.ngram_lines))?;
        fs::write(&paths.docs, lines(&self.documents))?;
        fs::write(
            &paths.labels,
            lines(&self.relevant().map(|v| v.phrase.clone()).collect::<Vec<_>>()),
        )?;
        let size = self.spec.image_size;
        let n = self.spec.images_per_variation;
        for (i, v) in self.variations.iter().enumerate() {
            let mut rng = SplitMix64::for_stream(self.spec.seed.wrapping_add(i as u64), &v.phrase);
            match v.kind {
                PlantedKind::Relevant { family } => {
                    let fam = VisualFamily::nth(family);
                    write_images(&paths.images.join(query_dir_name(&v.phrase)), n, |_| {
                        family_image(&mut rng, &fam, size)
                    })?;
                }
                PlantedKind::HardNoise => {
                    write_images(&paths.images.join(query_dir_name(&v.phrase)), n, |_| blob_image(&mut rng, size))?;
                }
                PlantedKind::Noise => {}
            }
        }
        let mut rng = SplitMix64::for_stream(self.spec.seed, "negatives");
        write_images(&paths.negatives, self.spec.negatives, |_| blob_image(&mut rng, size))?;
        Ok(paths)
    }
}

fn lines(items: &[String]) -> String {
    let mut s = items.join("\n");
    s.push('\n');
    s
}

/// Writes `n` PGM files `0000.pgm`, `0001.pgm`, ... into `dir`.
pub fn write_images(dir: &Path, n: usize, mut make: impl FnMut(usize) -> GrayImage) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for i in 0..n {
        fs::write(dir.join(format!("{i:04}.pgm")), make(i).to_pgm())?;
    }
    Ok(())
}
