//! Similarity backends: TF-IDF with cosine similarity, trained DBOW document
//! embeddings, and word-vector tables for the WMD measure.

mod dbow;
mod tfidf;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::textproc::TextError;

pub use dbow::{infer_docvec, train_dbow, DbowModel, DbowParams, InferredVector};
pub use tfidf::{fit_tfidf, tfidf_vector, TfIdfModel};

/// Errors from vector-model fitting and word-vector loading.
#[derive(Debug, Error)]
pub enum VectorError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("failed to read {path}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    WordVectorParse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("word-vector file {path} contains no vectors")]
    EmptyWordVectors { path: String },
}

/// Sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<S: Scalar> {
    indices: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseVector<S> {
    /// Builds from `(index, value)` pairs sorted by index; zero values are
    /// dropped.
    pub fn from_sorted_pairs(pairs: Vec<(usize, S)>) -> SparseVector<S> {
        debug_assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0));
        let (indices, values) = pairs
            .into_iter()
            .filter(|(_, v)| *v != S::zero())
            .unzip();
        SparseVector { indices, values }
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, S)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, other: &SparseVector<S>) -> S {
        let mut sum = S::zero();
        let (mut i, mut j) = (0, 0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    pub fn norm(&self) -> S {
        self.values.iter().map(|v| *v * *v).sum::<S>().sqrt()
    }

    /// Scales to unit L2 norm; the zero vector is left unchanged.
    pub fn l2_normalize(&mut self) {
        let norm = self.norm();
        if norm > S::zero() {
            for v in &mut self.values {
                *v /= norm;
            }
        }
    }
}

/// Cosine similarity between dense vectors; 0 if either norm is 0.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len(), "cosine requires equal dimensions");
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        dot += *x * *y;
        na += *x * *x;
        nb += *y * *y;
    }
    if na == S::zero() || nb == S::zero() {
        return S::zero();
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Cosine similarity between sparse vectors; 0 if either norm is 0.
pub fn cosine_sparse<S: Scalar>(a: &SparseVector<S>, b: &SparseVector<S>) -> S {
    let na = a.norm();
    let nb = b.norm();
    if na == S::zero() || nb == S::zero() {
        return S::zero();
    }
    a.dot(b) / (na * nb)
}

/// Word → embedding map with a uniform dimension.
#[derive(Debug, Clone)]
pub struct WordVectors<S: Scalar> {
    dimension: usize,
    vectors: HashMap<String, Vec<S>>,
}

impl<S: Scalar> WordVectors<S> {
    pub fn new(dimension: usize) -> WordVectors<S> {
        WordVectors {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[S]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn insert(&mut self, word: String, vector: Vec<S>) {
        debug_assert_eq!(vector.len(), self.dimension);
        self.vectors.insert(word, vector);
    }

    /// Derives word vectors from a trained DBOW model's word output matrix.
    pub fn from_dbow(model: &DbowModel<S>) -> WordVectors<S> {
        let mut wv = WordVectors::new(model.dimension());
        for (index, word) in model.vocabulary().words().iter().enumerate() {
            wv.insert(word.clone(), model.word_output(index).to_vec());
        }
        wv
    }
}

/// Loads a plain-text word-vector file.
///
/// Format: a `<count> <dimension>` header line, then one
/// `<word> <v1> ... <vd>` line per vector.  A duplicated word keeps its last
/// occurrence (with a warning); a dimension mismatch is a parse error naming
/// the line.
pub fn load_word_vectors<S: Scalar>(path: &Path) -> Result<WordVectors<S>, VectorError> {
    let body = fs::read_to_string(path).map_err(|source| VectorError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();
    let parse_err = |line: usize, message: String| VectorError::WordVectorParse {
        path: path_str.clone(),
        line,
        message,
    };

    let mut lines = body.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| VectorError::EmptyWordVectors {
            path: path_str.clone(),
        })?;
    let mut header_parts = header.split_whitespace();
    let declared: usize = header_parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(1, "header must start with a vector count".into()))?;
    let dimension: usize = header_parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(1, "header must name the dimension".into()))?;
    if dimension == 0 {
        return Err(parse_err(1, "dimension must be positive".into()));
    }

    let mut wv = WordVectors::new(dimension);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line has a first token");
        let mut vector = Vec::with_capacity(dimension);
        for part in parts {
            let value: f64 = part
                .parse()
                .map_err(|e| parse_err(i + 1, format!("bad float {part:?}: {e}")))?;
            if !value.is_finite() {
                return Err(parse_err(i + 1, format!("non-finite component {part:?}")));
            }
            vector.push(S::from_config(value));
        }
        if vector.len() != dimension {
            return Err(parse_err(
                i + 1,
                format!(
                    "vector for {:?} has {} components, header says {}",
                    word,
                    vector.len(),
                    dimension
                ),
            ));
        }
        if wv.get(word).is_some() {
            log::warn!("duplicate word {word:?} in {path_str}; keeping the last occurrence");
        }
        wv.insert(word.to_string(), vector);
    }
    if wv.is_empty() {
        return Err(VectorError::EmptyWordVectors { path: path_str });
    }
    if wv.len() != declared {
        log::warn!(
            "{path_str}: header declares {declared} vectors, found {}",
            wv.len()
        );
    }
    Ok(wv)
}
