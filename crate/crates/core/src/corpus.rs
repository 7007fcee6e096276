//! N-gram corpus ingestion, word-variation discovery and the offline
//! document-count index.
//!
//! Records use the public tab-separated n-gram layout
//! `ngram TAB year TAB match_count TAB volume_count`, where the n-gram is a
//! space-separated token list and each token may carry a `_TAG` part-of-speech
//! suffix (`jumping_VERB horse_NOUN`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest variation considered: the concept plus two modifiers.
pub const MAX_VARIATION_TOKENS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
    Untagged,
}

impl Pos {
    /// The modifier classes allowed by default.
    pub const CONTENT: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv];

    /// Maps a corpus tag onto the collapsed tag set. Universal tags and the
    /// common Penn-style subtypes (`NNS`, `VBD`, `JJR`, ...) are recognised.
    pub fn from_tag(tag: &str) -> Pos {
        match tag {
            "NOUN" | "PROPN" => Pos::Noun,
            "VERB" => Pos::Verb,
            "ADJ" => Pos::Adj,
            "ADV" => Pos::Adv,
            t if t.starts_with("NN") => Pos::Noun,
            t if t.starts_with("VB") => Pos::Verb,
            t if t.starts_with("JJ") => Pos::Adj,
            t if t.starts_with("RB") => Pos::Adv,
            _ => Pos::Other,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Other => "X",
            Pos::Untagged => "",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramRecord {
    pub tokens: Vec<Token>,
    pub year: i32,
    pub match_count: u64,
    pub volume_count: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MalformedRecord {
    #[error("expected 4 tab-separated fields, found {0}")]
    FieldCount(usize),
    #[error("field `{field}` is not an integer: {value:?}")]
    NotAnInteger { field: &'static str, value: String },
    #[error("empty n-gram")]
    EmptyNgram,
    #[error("empty token surface in {0:?}")]
    EmptyToken(String),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus contains no documents")]
    EmptyCorpus,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Splits a trailing `_TAG` suffix off a token. A suffix is an underscore
/// followed by one or more uppercase ASCII letters (or `.` for punctuation).
fn split_tag(raw: &str) -> (&str, Option<&str>) {
    match raw.rfind('_') {
        Some(at) if at > 0 => {
            let tag = &raw[at + 1..];
            let is_tag = !tag.is_empty()
                && tag
                    .bytes()
                    .all(|b| b.is_ascii_uppercase() || b == b'.' || b == b'$');
            if is_tag {
                (&raw[..at], Some(tag))
            } else {
                (raw, None)
            }
        }
        _ => (raw, None),
    }
}

pub fn parse_ngram_record(line: &str) -> Result<NgramRecord, MalformedRecord> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(MalformedRecord::FieldCount(fields.len()));
    }
    let int = |field: &'static str, value: &str| {
        value
            .trim()
            .parse::<u64>()
            .map_err(|_| MalformedRecord::NotAnInteger {
                field,
                value: value.to_string(),
            })
    };
    let year = fields[1]
        .trim()
        .parse::<i32>()
        .map_err(|_| MalformedRecord::NotAnInteger {
            field: "year",
            value: fields[1].to_string(),
        })?;
    let match_count = int("match_count", fields[2])?;
    let volume_count = int("volume_count", fields[3])?;

    if fields[0].trim().is_empty() {
        return Err(MalformedRecord::EmptyNgram);
    }
    let mut tokens = Vec::new();
    for raw in fields[0].split(' ') {
        if raw.is_empty() {
            return Err(MalformedRecord::EmptyToken(fields[0].to_string()));
        }
        let (surface, tag) = split_tag(raw);
        let pos = tag.map_or(Pos::Untagged, Pos::from_tag);
        tokens.push(Token {
            surface: surface.to_lowercase(),
            pos,
        });
    }
    Ok(NgramRecord {
        tokens,
        year,
        match_count,
        volume_count,
    })
}

impl NgramRecord {
    pub fn phrase(&self) -> String {
        join_surfaces(self.tokens.iter().map(|t| t.surface.as_str()))
    }
}

impl fmt::Display for NgramRecord {
    /// Serializes back into the wire layout.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(&tok.surface)?;
            if tok.pos != Pos::Untagged {
                write!(f, "_{}", tok.pos.tag())?;
            }
        }
        write!(
            f,
            "\t{}\t{}\t{}",
            self.year, self.match_count, self.volume_count
        )
    }
}

fn join_surfaces<'a>(parts: impl Iterator<Item = &'a str>) -> String {
    parts.collect::<Vec<_>>().join(" ")
}

/// Records parsed from a stream plus the number of lines that were skipped.
#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub records: Vec<NgramRecord>,
    pub malformed: usize,
}

/// Parses every line of `reader`. Blank lines are ignored; malformed lines
/// and invalid UTF-8 are counted, never fatal.
pub fn parse_ngram_stream<R: BufRead>(mut reader: R) -> io::Result<ParsedCorpus> {
    let mut out = ParsedCorpus::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let Ok(line) = std::str::from_utf8(&buf) else {
            out.malformed += 1;
            continue;
        };
        if line.trim().is_empty() {
            continue;
        }
        match parse_ngram_record(line) {
            Ok(rec) => out.records.push(rec),
            Err(_) => out.malformed += 1,
        }
    }
    Ok(out)
}

/// Opens a possibly gzip-compressed text file (detected by magic bytes).
pub fn open_text(path: &Path) -> Result<Box<dyn BufRead>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = File::open(path).map_err(io_err)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(io_err)?;
    let file = File::open(path).map_err(io_err)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn read_ngram_file(path: &Path) -> Result<ParsedCorpus, CorpusError> {
    let reader = open_text(path)?;
    parse_ngram_stream(reader).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariationCandidate {
    pub phrase: String,
    pub pos_pattern: Vec<Pos>,
    pub frequency: u64,
    pub concept_position: usize,
}

impl VariationCandidate {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.phrase.split(' ')
    }
}

/// Finds multi-token phrases containing `concept` exactly once whose
/// modifier tokens all carry a tag in `allowed_pos`.
///
/// Frequencies are summed over years per distinct `(phrase, pos_pattern)`.
/// The result is ordered by frequency descending, then phrase, then pattern,
/// so it does not depend on record order. The bare concept is the graph
/// center and is never returned as a candidate.
pub fn discover_variations<'a, I>(
    concept: &str,
    records: I,
    allowed_pos: &[Pos],
) -> Vec<VariationCandidate>
where
    I: IntoIterator<Item = &'a NgramRecord>,
{
    let concept = concept.trim().to_lowercase();
    let allowed: BTreeSet<Pos> = allowed_pos
        .iter()
        .copied()
        .filter(|p| Pos::CONTENT.contains(p))
        .collect();

    let mut totals: BTreeMap<(String, Vec<Pos>), (u64, usize)> = BTreeMap::new();
    for rec in records {
        let n = rec.tokens.len();
        if !(2..=MAX_VARIATION_TOKENS).contains(&n) {
            continue;
        }
        let mut hits = rec
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.surface == concept);
        let (Some((position, _)), None) = (hits.next(), hits.next()) else {
            continue;
        };
        let modifiers_ok = rec
            .tokens
            .iter()
            .enumerate()
            .all(|(i, t)| i == position || allowed.contains(&t.pos));
        if !modifiers_ok {
            continue;
        }
        let key = (
            rec.phrase(),
            rec.tokens.iter().map(|t| t.pos).collect::<Vec<_>>(),
        );
        let entry = totals.entry(key).or_insert((0, position));
        entry.0 = entry.0.saturating_add(rec.match_count);
    }

    let mut out: Vec<VariationCandidate> = totals
        .into_iter()
        .filter(|(_, (freq, _))| *freq > 0)
        .map(|((phrase, pos_pattern), (frequency, concept_position))| VariationCandidate {
            phrase,
            pos_pattern,
            frequency,
            concept_position,
        })
        .collect();
    out.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then_with(|| a.phrase.cmp(&b.phrase))
            .then_with(|| a.pos_pattern.cmp(&b.pos_pattern))
    });
    out
}

/// Offline document-count oracle backing the semantic distance.
///
/// Stores one sorted posting list per term; phrase counts are computed on
/// demand by intersecting the postings of the phrase's tokens.
#[derive(Clone, Debug, Default)]
pub struct CountIndex {
    total_docs: u64,
    postings: HashMap<String, Vec<u32>>,
}

impl CountIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one document given as its tokens (duplicates are ignored).
    pub fn add_document<'a, I>(&mut self, tokens: I)
    where
        I: IntoIterator<Item = &'a str>,
    {
        let doc = u32::try_from(self.total_docs).expect("document count exceeds u32");
        let terms: BTreeSet<String> = tokens
            .into_iter()
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        for term in terms {
            self.postings.entry(term).or_default().push(doc);
        }
        self.total_docs += 1;
    }

    pub fn total_docs(&self) -> u64 {
        self.total_docs
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// Number of documents containing every token of every given phrase.
    pub fn count_all(&self, phrases: &[&str]) -> u64 {
        let mut terms: Vec<&str> = phrases
            .iter()
            .flat_map(|p| p.split(' '))
            .filter(|t| !t.is_empty())
            .collect();
        if terms.is_empty() {
            return 0;
        }
        terms.sort_unstable();
        terms.dedup();
        let mut lists = Vec::with_capacity(terms.len());
        for t in &terms {
            match self.postings.get(*t) {
                Some(list) => lists.push(list.as_slice()),
                None => return 0,
            }
        }
        lists.sort_by_key(|l| l.len());
        let (first, rest) = lists.split_first().expect("non-empty");
        first
            .iter()
            .filter(|doc| rest.iter().all(|l| l.binary_search(doc).is_ok()))
            .count() as u64
    }

    /// `f(x)`: documents containing every token of phrase `x`.
    pub fn frequency(&self, phrase: &str) -> u64 {
        self.count_all(&[phrase])
    }

    /// `f(x, y)`: documents containing both phrases.
    pub fn co_frequency(&self, x: &str, y: &str) -> u64 {
        self.count_all(&[x, y])
    }
}

/// Builds the index from documents given as token lists.
pub fn build_count_index<D, T>(documents: D) -> Result<CountIndex, CorpusError>
where
    D: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    let mut index = CountIndex::new();
    for doc in documents {
        index.add_document(doc.as_ref().split_whitespace());
    }
    if index.total_docs == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(index)
}

/// Reads a document fixture: one document per non-blank line, tokens
/// separated by whitespace. Gzip input is accepted.
pub fn read_document_file(path: &Path) -> Result<CountIndex, CorpusError> {
    let reader = open_text(path)?;
    let mut lines = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    build_count_index(lines)
}
