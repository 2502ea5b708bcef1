//! TF-IDF vectorization with the smoothed idf variant
//! `idf(w) = ln((1 + N) / (1 + df(w))) + 1`.

use crate::scalar::Scalar;
use crate::textproc::{build_vocab, StopwordSet, TokenList, Vocabulary};

use super::{SparseVector, VectorError};

/// Fitted TF-IDF model: vocabulary plus per-word inverse document frequency.
#[derive(Debug, Clone)]
pub struct TfIdfModel<S: Scalar> {
    vocabulary: Vocabulary,
    idf: Vec<S>,
    corpus_size: usize,
}

impl<S: Scalar> TfIdfModel<S> {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn idf(&self, index: usize) -> S {
        self.idf[index]
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    /// Vectorizes `doc`; see [`tfidf_vector`].
    pub fn vector(&self, doc: &TokenList) -> SparseVector<S> {
        tfidf_vector(self, doc)
    }
}

/// Fits a TF-IDF model over `docs` (full vocabulary, no stopword filtering —
/// similarity should see every word the summaries use).
pub fn fit_tfidf<S: Scalar>(docs: &[TokenList]) -> Result<TfIdfModel<S>, VectorError> {
    let vocabulary = build_vocab(docs, &StopwordSet::empty(), 1)?;
    let n = S::from_count(docs.len());
    let idf = (0..vocabulary.len())
        .map(|i| {
            let df = S::from_count(vocabulary.doc_freq(i));
            ((S::one() + n) / (S::one() + df)).ln() + S::one()
        })
        .collect();
    Ok(TfIdfModel {
        vocabulary,
        idf,
        corpus_size: docs.len(),
    })
}

/// Vectorizes `doc` against a fitted model: raw term counts weighted by idf,
/// L2-normalized.  Out-of-vocabulary words are ignored; a doc with no
/// in-vocabulary words yields the zero vector.
pub fn tfidf_vector<S: Scalar>(model: &TfIdfModel<S>, doc: &TokenList) -> SparseVector<S> {
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for token in doc.iter() {
        if let Some(index) = model.vocabulary.index_of(token) {
            *counts.entry(index).or_insert(0) += 1;
        }
    }
    let pairs = counts
        .into_iter()
        .map(|(index, tf)| (index, S::from_count(tf) * model.idf[index]))
        .collect();
    let mut vector = SparseVector::from_sorted_pairs(pairs);
    vector.l2_normalize();
    vector
}
