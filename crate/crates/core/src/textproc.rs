//! Text preprocessing: sentence segmentation, tokenization, stopwords,
//! vocabulary construction, and corpus statistics.
//!
//! Everything here is a pure function with deterministic output; all
//! downstream modules (vector models, LDA, MMR, ROUGE) build on these
//! primitives.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Cluster;

/// Errors from text preprocessing.
#[derive(Debug, Error)]
pub enum TextError {
    /// Vocabulary construction filtered out every word.
    #[error("vocabulary is empty after stopword/min_df filtering")]
    EmptyVocabulary,
    /// Stopword override file could not be read.
    #[error("failed to read stopword file {path}")]
    StopwordFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One segmented sentence with provenance.
///
/// `model_id`/`doc_id` are attached by the pipeline once the sentence's
/// origin is known; raw segmentation leaves them unset.  `ordinal` is the
/// sentence's zero-based position within the text it was split from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub model_id: Option<String>,
    pub doc_id: Option<String>,
    pub ordinal: usize,
}

impl Sentence {
    /// Returns a copy with provenance filled in.
    pub fn with_source(mut self, model_id: &str, doc_id: Option<&str>) -> Sentence {
        self.model_id = Some(model_id.to_string());
        self.doc_id = doc_id.map(str::to_string);
        self
    }
}

/// An ordered list of normalized tokens.
///
/// Tokens never contain whitespace, so joining with single spaces and
/// re-tokenizing reproduces the list exactly.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenList(pub Vec<String>);

impl TokenList {
    pub fn new(tokens: Vec<String>) -> TokenList {
        TokenList(tokens)
    }

    /// Joins the tokens with single spaces.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenList {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl From<Vec<&str>> for TokenList {
    fn from(tokens: Vec<&str>) -> TokenList {
        TokenList(tokens.into_iter().map(str::to_string).collect())
    }
}

/// Bidirectional word ↔ index mapping with document frequencies.
///
/// Indices are dense in `[0, len)` and assigned in lexicographic word order,
/// so the mapping is independent of input document order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
    doc_freq: Vec<usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    /// Words in index order (lexicographic).
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Document frequency of the word at `index`.
    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }
}

/// A set of words excluded from vocabulary construction.
#[derive(Debug, Clone, Default)]
pub struct StopwordSet(HashSet<String>);

impl StopwordSet {
    /// The empty set (no filtering).
    pub fn empty() -> StopwordSet {
        StopwordSet(HashSet::new())
    }

    /// The built-in English list (~150 function words).
    pub fn builtin() -> StopwordSet {
        StopwordSet(BUILTIN_STOPWORDS.iter().map(|w| w.to_string()).collect())
    }

    /// Loads an override list: one word per line, UTF-8, blank lines ignored.
    pub fn from_file(path: &Path) -> Result<StopwordSet, TextError> {
        let body = fs::read_to_string(path).map_err(|source| TextError::StopwordFile {
            path: path.display().to_string(),
            source,
        })?;
        Ok(StopwordSet(
            body.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        ))
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> StopwordSet {
        StopwordSet(words.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Words whose trailing "." never ends a sentence.
const ABBREVIATIONS: [&str; 8] = ["dr.", "mr.", "mrs.", "ms.", "u.s.", "e.g.", "i.e.", "etc."];

/// Splits `text` into sentences.
///
/// Rule-based: a sentence ends at ".", "!" or "?" (plus trailing closing
/// quotes/brackets) followed by whitespace and an uppercase letter or digit,
/// except when the "." terminates a known abbreviation.  Text without any
/// terminator comes back as a single sentence.  Internal whitespace runs are
/// normalized to single spaces, so joining the results with single spaces
/// reproduces the input's non-whitespace content exactly.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;

    let push = |segment: &[char], out: &mut Vec<Sentence>| {
        let raw: String = segment.iter().collect();
        let normalized = raw.split_whitespace().collect::<Vec<_>>().join(" ");
        if !normalized.is_empty() {
            out.push(Sentence {
                text: normalized,
                model_id: None,
                doc_id: None,
                ordinal: out.len(),
            });
        }
    };

    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c == '.' || c == '!' || c == '?' {
            // Absorb closing quotes/brackets after the terminator.
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end], '"' | '\'' | '\u{2019}' | '\u{201d}' | ')' | ']') {
                end += 1;
            }
            let followed_by_gap = end < chars.len() && chars[end].is_whitespace();
            let mut next = end;
            while next < chars.len() && chars[next].is_whitespace() {
                next += 1;
            }
            let starts_new = next < chars.len()
                && (chars[next].is_uppercase() || chars[next].is_ascii_digit());
            if followed_by_gap && starts_new && !(c == '.' && ends_with_abbreviation(&chars[start..=i])) {
                push(&chars[start..end], &mut sentences);
                start = next;
                i = next;
                continue;
            }
        }
        i += 1;
    }
    if start < chars.len() {
        push(&chars[start..], &mut sentences);
    }
    sentences
}

/// True when the segment's final word (ending in ".") is a known abbreviation.
fn ends_with_abbreviation(segment: &[char]) -> bool {
    let mut word_start = segment.len();
    while word_start > 0 && !segment[word_start - 1].is_whitespace() {
        word_start -= 1;
    }
    let word: String = segment[word_start..].iter().collect::<String>().to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Tokenizes `text` by whitespace, optionally lowercasing and stripping
/// leading/trailing punctuation from each token.
///
/// Tokens that become empty after stripping are dropped.  The operation is
/// idempotent: tokenizing the space-joined output reproduces it.
pub fn tokenize(text: &str, lowercase: bool, strip_punct: bool) -> TokenList {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        let mut token = raw.to_string();
        if strip_punct {
            token = token
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_string();
        }
        if lowercase {
            token = token.to_lowercase();
        }
        if !token.is_empty() {
            tokens.push(token);
        }
    }
    TokenList(tokens)
}

/// Builds a vocabulary over `docs`, excluding stopwords and words whose
/// document frequency is below `min_df`.  Indices are lexicographic.
pub fn build_vocab(
    docs: &[TokenList],
    stopwords: &StopwordSet,
    min_df: usize,
) -> Result<Vocabulary, TextError> {
    debug_assert!(min_df >= 1, "min_df must be at least 1");
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for doc in docs {
        seen.clear();
        for token in doc.iter() {
            if seen.insert(token) {
                *freq.entry(token).or_insert(0) += 1;
            }
        }
    }

    let mut words = Vec::new();
    let mut doc_freq = Vec::new();
    for (word, df) in freq {
        if df >= min_df && !stopwords.contains(word) {
            words.push(word.to_string());
            doc_freq.push(df);
        }
    }
    if words.is_empty() {
        return Err(TextError::EmptyVocabulary);
    }
    let index = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    Ok(Vocabulary {
        words,
        index,
        doc_freq,
    })
}

/// Mean sentence count per document across the cluster.
pub fn avg_sentences_per_doc(cluster: &Cluster) -> f64 {
    if cluster.documents.is_empty() {
        return 0.0;
    }
    let total: usize = cluster
        .documents
        .iter()
        .map(|d| split_sentences(&d.text).len())
        .sum();
    total as f64 / cluster.documents.len() as f64
}

const BUILTIN_STOPWORDS: [&str; 155] = [
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "cannot", "could", "did", "do", "does", "doing", "down", "during", "each",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here",
    "hers", "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it",
    "its", "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now",
    "of", "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out",
    "over", "own", "said", "same", "she", "should", "so", "some", "such", "than", "that",
    "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this",
    "those", "through", "to", "too", "under", "until", "up", "very", "was", "we", "were",
    "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would",
    "you", "your", "yours", "yourself", "yourselves", "also", "back", "even", "get", "go",
    "goes", "got", "like", "made", "make", "many", "may", "might", "much", "must", "new",
    "one", "two", "three", "per", "since", "still", "take", "us", "way", "well", "yet",
];
