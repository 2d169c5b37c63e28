//! Word and n-gram frequency analysis over model replies, and seed-lexicon
//! expansion through embedding cosine similarity.
//!
//! Counts are per occurrence, not per document. N-grams never span two
//! documents.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The 19-word baseline list of words signalling missing information.
pub const DEFAULT_SEED_LEXICON: &str = include_str!("../data/seed_lexicon.txt");

pub fn default_seed_words() -> Vec<String> {
    DEFAULT_SEED_LEXICON.lines().map(str::trim).filter(|w| !w.is_empty()).map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub stopwords: Vec<String>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { lowercase: true, strip_punctuation: true, stopwords: Vec::new() }
    }
}

/// Splits on Unicode whitespace, then applies lowercasing, punctuation
/// stripping and stopword removal in that order.
///
/// Punctuation stripping trims leading and trailing non-alphanumeric
/// characters from each token and keeps interior ones, so `"It's the U.S."`
/// becomes `["it's", "the", "u.s"]`. Tokens left empty are dropped.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let stop: BTreeSet<String> = config
        .stopwords
        .iter()
        .map(|w| if config.lowercase { w.to_lowercase() } else { w.clone() })
        .collect();
    text.split_whitespace()
        .map(|raw| if config.lowercase { raw.to_lowercase() } else { raw.to_string() })
        .map(|tok| {
            if config.strip_punctuation {
                tok.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
            } else {
                tok
            }
        })
        .filter(|tok| !tok.is_empty() && !stop.contains(tok))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("n-gram order must be 1 or 2, got {0}")]
    InvalidN(usize),
    #[error("top_k must be positive")]
    InvalidTopK,
    #[error("seed list is empty")]
    EmptySeed,
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
}

/// Top terms by count; ties broken by lexicographic term order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub n: usize,
    pub documents: usize,
    pub total_grams: usize,
    pub entries: Vec<(String, usize)>,
}

impl FrequencyTable {
    fn from_counts(n: usize, documents: usize, total_grams: usize, counts: BTreeMap<String, usize>, top_k: usize) -> Self {
        let mut entries: Vec<(String, usize)> = counts.into_iter().collect();
        // BTreeMap order is already lexicographic, and the sort is stable.
        entries.sort_by_key(|e| core::cmp::Reverse(e.1));
        entries.truncate(top_k);
        Self { n, documents, total_grams, entries }
    }

    pub fn count_of(&self, term: &str) -> Option<usize> {
        self.entries.iter().find(|(t, _)| t == term).map(|(_, c)| *c)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,count\n");
        for (term, count) in &self.entries {
            let _ = writeln!(out, "{},{}", csv_field(term), count);
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Counts contiguous n-grams (n = 1 or 2) across `documents`, joined with a
/// single space, and keeps the `top_k` most frequent.
pub fn ngram_frequencies<S: AsRef<str>>(
    documents: &[S],
    n: usize,
    top_k: usize,
    config: &TokenizerConfig,
) -> Result<FrequencyTable, AnalysisError> {
    if n != 1 && n != 2 {
        return Err(AnalysisError::InvalidN(n));
    }
    if top_k == 0 {
        return Err(AnalysisError::InvalidTopK);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0;
    for doc in documents {
        let tokens = tokenize(doc.as_ref(), config);
        for window in tokens.windows(n) {
            *counts.entry(window.join(" ")).or_default() += 1;
            total += 1;
        }
    }
    Ok(FrequencyTable::from_counts(n, documents.len(), total, counts, top_k))
}

/// Unigram frequencies restricted to words of `lexicon` (case-insensitive).
pub fn uncertainty_term_frequencies<S: AsRef<str>>(
    documents: &[S],
    lexicon: &Lexicon,
    top_k: usize,
    config: &TokenizerConfig,
) -> Result<FrequencyTable, AnalysisError> {
    if lexicon.expanded.is_empty() {
        return Err(AnalysisError::EmptyLexicon);
    }
    if top_k == 0 {
        return Err(AnalysisError::InvalidTopK);
    }
    let words: BTreeSet<String> = lexicon.expanded.iter().map(|e| e.word.to_lowercase()).collect();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0;
    for doc in documents {
        for tok in tokenize(doc.as_ref(), config) {
            total += 1;
            let key = tok.to_lowercase();
            if words.contains(&key) {
                *counts.entry(key).or_default() += 1;
            }
        }
    }
    Ok(FrequencyTable::from_counts(1, documents.len(), total, counts, top_k))
}

/// Lays tables out side by side under their titles, one `term count` pair
/// of columns per panel.
pub fn render_panels(panels: &[(&str, &FrequencyTable)]) -> String {
    let rows = panels.iter().map(|(_, t)| t.entries.len()).max().unwrap_or(0);
    let widths: Vec<(usize, usize)> = panels
        .iter()
        .map(|(title, t)| {
            let term_w = t.entries.iter().map(|(w, _)| w.chars().count()).max().unwrap_or(0).max(4);
            let count_w = t.entries.iter().map(|(_, c)| digits(*c)).max().unwrap_or(0).max(5);
            let total = (term_w + 2 + count_w).max(title.chars().count());
            (total - count_w - 2, count_w)
        })
        .collect();
    let mut out = String::new();
    let push_row = |out: &mut String, cells: Vec<String>| {
        let line = cells.join(" | ");
        out.push_str(line.trim_end());
        out.push('\n');
    };
    push_row(
        &mut out,
        panels
            .iter()
            .zip(&widths)
            .map(|((title, _), (tw, cw))| format!("{:<w$}", title, w = tw + cw + 2))
            .collect(),
    );
    push_row(
        &mut out,
        widths.iter().map(|(tw, cw)| format!("{:<tw$}  {:>cw$}", "term", "count")).collect(),
    );
    for i in 0..rows {
        push_row(
            &mut out,
            panels
                .iter()
                .zip(&widths)
                .map(|((_, t), (tw, cw))| match t.entries.get(i) {
                    Some((term, count)) => format!("{:<tw$}  {:>cw$}", term, count),
                    None => format!("{:<w$}", "", w = tw + cw + 2),
                })
                .collect(),
        );
    }
    out
}

/// Long-form CSV of several panels: `panel,rank,term,count`.
pub fn panels_to_csv(panels: &[(&str, &FrequencyTable)]) -> String {
    let mut out = String::from("panel,rank,term,count\n");
    for (title, table) in panels {
        for (rank, (term, count)) in table.entries.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", csv_field(title), rank + 1, csv_field(term), count);
        }
    }
    out
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: unparsable component {value:?}")]
    BadNumber { line: usize, value: String },
    #[error("line {0}: word without a vector")]
    MissingVector(usize),
    #[error("no vectors in input")]
    Empty,
}

/// Dense word vectors of one fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    lowercase: bool,
    words: Vec<String>,
    vectors: Vec<f32>,
    index: BTreeMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, lowercase: bool) -> Self {
        Self { dim, lowercase, words: Vec::new(), vectors: Vec::new(), index: BTreeMap::new() }
    }

    /// Adds a word. Returns `false` (and keeps the earlier vector) when the
    /// normalized word is already present.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<bool, EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch { line: 0, expected: self.dim, found: vector.len() });
        }
        let key = self.normalize(word);
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        self.index.insert(key.clone(), self.words.len());
        self.words.push(key);
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    /// Parses the plain-text vector format: one `word v1 ... vN` per line.
    /// A leading `count dim` header line is skipped; the dimension comes
    /// from the first vector line.
    pub fn parse_text(text: &str, lowercase: bool) -> Result<Self, EmbeddingError> {
        let mut store: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            if store.is_none()
                && rest.len() == 1
                && word.parse::<usize>().is_ok()
                && rest[0].parse::<usize>().is_ok()
            {
                continue;
            }
            if rest.is_empty() {
                return Err(EmbeddingError::MissingVector(lineno));
            }
            let mut vector = Vec::with_capacity(rest.len());
            for v in &rest {
                let x = v
                    .parse::<f32>()
                    .map_err(|_| EmbeddingError::BadNumber { line: lineno, value: v.to_string() })?;
                vector.push(x);
            }
            let s = store.get_or_insert_with(|| Self::new(vector.len(), lowercase));
            s.insert(word, &vector).map_err(|_| EmbeddingError::DimensionMismatch {
                line: lineno,
                expected: s.dim,
                found: vector.len(),
            })?;
        }
        store.ok_or(EmbeddingError::Empty)
    }

    fn normalize(&self, word: &str) -> String {
        if self.lowercase {
            word.to_lowercase()
        } else {
            word.to_string()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        let &i = self.index.get(&self.normalize(word))?;
        Some(&self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Words in insertion order with their vectors.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.words.iter().zip(self.vectors.chunks_exact(self.dim.max(1))).map(|(w, v)| (w.as_str(), v))
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (libm::sqrt(na) * libm::sqrt(nb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    /// Highest similarity to any seed word (1.0 for seeds).
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub seed: Vec<String>,
    pub expanded: Vec<LexiconEntry>,
    pub threshold: f64,
    /// Seed words the embedding store does not know.
    pub missing_seeds: Vec<String>,
}

impl Lexicon {
    pub fn contains(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.expanded.iter().any(|e| e.word.to_lowercase() == w)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.expanded.iter().map(|e| e.word.as_str())
    }
}

/// Grows `seed` with every store word whose cosine similarity to some seed
/// word is strictly above `threshold`.
pub fn expand_seed_lexicon<S: AsRef<str>>(
    seed: &[S],
    store: &EmbeddingStore,
    threshold: f64,
) -> Result<Lexicon, AnalysisError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(AnalysisError::InvalidThreshold(threshold));
    }
    let mut seeds: Vec<String> = Vec::new();
    for s in seed {
        let w = s.as_ref().trim().to_lowercase();
        if !w.is_empty() && !seeds.contains(&w) {
            seeds.push(w);
        }
    }
    if seeds.is_empty() {
        return Err(AnalysisError::EmptySeed);
    }
    let mut present = Vec::new();
    let mut missing_seeds = Vec::new();
    for s in &seeds {
        match store.get(s) {
            Some(v) => present.push(v),
            None => missing_seeds.push(s.clone()),
        }
    }
    let seed_set: BTreeSet<&str> = seeds.iter().map(String::as_str).collect();
    let mut expanded: Vec<LexiconEntry> =
        seeds.iter().map(|w| LexiconEntry { word: w.clone(), similarity: 1.0 }).collect();
    for (word, vector) in store.iter() {
        if seed_set.contains(word.to_lowercase().as_str()) {
            continue;
        }
        let best = present.iter().map(|s| cosine(vector, s)).fold(f64::NEG_INFINITY, f64::max);
        if best > threshold {
            expanded.push(LexiconEntry { word: word.to_string(), similarity: best });
        }
    }
    expanded.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.word.cmp(&b.word)));
    Ok(Lexicon { seed: seeds, expanded, threshold, missing_seeds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tokenize_defaults() {
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize("Video Evidence!", &cfg), ["video", "evidence"]);
        assert!(tokenize("", &cfg).is_empty());
        assert_eq!(tokenize("It's the U.S.", &cfg), ["it's", "the", "u.s"]);
        let raw = TokenizerConfig { lowercase: false, strip_punctuation: false, stopwords: vec![] };
        assert_eq!(tokenize("It's the U.S.", &raw), ["It's", "the", "U.S."]);
        let stop = TokenizerConfig { stopwords: vec!["The".into()], ..TokenizerConfig::default() };
        assert_eq!(tokenize("The claim -- the END", &stop), ["claim", "end"]);
    }

    #[test]
    fn ngram_examples() {
        let cfg = TokenizerConfig::default();
        let t = ngram_frequencies(&["a b", "a c"], 1, 3, &cfg).unwrap();
        assert_eq!(t.entries, [("a".into(), 2), ("b".into(), 1), ("c".into(), 1)]);
        let t = ngram_frequencies(&["video evidence", "video evidence"], 2, 1, &cfg).unwrap();
        assert_eq!(t.entries, [("video evidence".into(), 2)]);
        assert_eq!(ngram_frequencies(&["x"], 3, 1, &cfg), Err(AnalysisError::InvalidN(3)));
        // No bigram across the document boundary.
        let t = ngram_frequencies(&["a", "b"], 2, 5, &cfg).unwrap();
        assert!(t.entries.is_empty());
    }

    fn store3() -> EmbeddingStore {
        EmbeddingStore::parse_text("evidence 1 0 0\nproof 1 0 0\nbanana 0 1 0\n", true).unwrap()
    }

    #[test]
    fn lexicon_identical_and_orthogonal() {
        let lex = expand_seed_lexicon(&["evidence"], &store3(), 0.5).unwrap();
        assert!(lex.contains("proof"));
        assert!(!lex.contains("banana"));
        assert_eq!(lex.expanded[0].similarity, 1.0);
        assert_eq!(expand_seed_lexicon::<&str>(&[], &store3(), 0.5), Err(AnalysisError::EmptySeed));
        let lex = expand_seed_lexicon(&["evidence", "absent"], &store3(), 0.99).unwrap();
        assert_eq!(lex.missing_seeds, ["absent"]);
        assert!(lex.contains("absent"));
    }

    #[test]
    fn uncertainty_terms() {
        let lex = expand_seed_lexicon(&["specific"], &EmbeddingStore::parse_text("specific 1 0\n", true).unwrap(), 0.5).unwrap();
        let t = uncertainty_term_frequencies(&["Specific specific", "be specific.", "nothing"], &lex, 5, &TokenizerConfig::default()).unwrap();
        assert_eq!(t.entries, [("specific".into(), 3)]);
        let t = uncertainty_term_frequencies(&["nothing"], &lex, 5, &TokenizerConfig::default()).unwrap();
        assert!(t.entries.is_empty());
    }

    #[test]
    fn parse_vectors() {
        let s = EmbeddingStore::parse_text("2 3\nA 1 2 3\nb 0.5 0 -1\n", true).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.get("a"), Some(&[1.0f32, 2.0, 3.0][..]));
        assert!(matches!(
            EmbeddingStore::parse_text("a 1 2\nb 1\n", true),
            Err(EmbeddingError::DimensionMismatch { line: 2, expected: 2, found: 1 })
        ));
        assert!(matches!(EmbeddingStore::parse_text("a 1 x\n", true), Err(EmbeddingError::BadNumber { line: 1, .. })));
        assert_eq!(EmbeddingStore::parse_text("\n", true), Err(EmbeddingError::Empty));
    }

    #[test]
    fn seeds_ship_with_19_words() {
        let seeds = default_seed_words();
        assert_eq!(seeds.len(), 19);
        assert_eq!(seeds.first().map(String::as_str), Some("context"));
        assert_eq!(seeds.last().map(String::as_str), Some("specific"));
    }

    #[test]
    fn panels_render() {
        let cfg = TokenizerConfig::default();
        let a = ngram_frequencies(&["video evidence", "photo evidence"], 1, 3, &cfg).unwrap();
        let b = ngram_frequencies(&["video evidence", "photo evidence"], 2, 3, &cfg).unwrap();
        let text = render_panels(&[("Keyword Prompt", &a), ("Keyword Prompt 2-grams", &b)]);
        assert!(text.lines().nth(2).unwrap().starts_with("evidence"));
        let csv = panels_to_csv(&[("k", &a)]);
        assert!(csv.starts_with("panel,rank,term,count\nk,1,evidence,2\n"));
    }
}
