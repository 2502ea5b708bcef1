//! Similarity-measure registry and the cached provider that MMR selection
//! runs against.
//!
//! A [`SimilarityContext`] bundles the models fitted for one cluster; a
//! [`UnitSimilarities`] binds them to one set of text units plus a query and
//! memoizes every value, so a selection loop computes each representation
//! once and each pair at most once.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lda::QueryDocument;
use crate::mmr::PairSimilarity;
use crate::scalar::Scalar;
use crate::textproc::TokenList;
use crate::vectors::{cosine, cosine_sparse, DbowModel, SparseVector, TfIdfModel, WordVectors};
use crate::wmd::{nbow_distance, NbowDistribution, WmdMode};

/// The registered similarity measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasureKind {
    /// Cosine over L2-normalized TF-IDF vectors.
    #[serde(rename = "tfidf-cosine")]
    TfidfCosine,
    /// Cosine over inferred DBOW document vectors.
    #[serde(rename = "docembed-cosine")]
    DocembedCosine,
    /// Word Mover's Distance mapped through `1 / (1 + d)`.
    #[serde(rename = "wmd")]
    Wmd,
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MeasureKind::TfidfCosine => "tfidf-cosine",
            MeasureKind::DocembedCosine => "docembed-cosine",
            MeasureKind::Wmd => "wmd",
        };
        write!(f, "{name}")
    }
}

/// λ plus the relevance/diversity measure assignment for one MMR run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmrParams<S: Scalar> {
    pub lambda: S,
    /// Sim1: relevance to the query.
    pub sim1: MeasureKind,
    /// Sim2: similarity to already-selected items.
    pub sim2: MeasureKind,
}

/// Everything measures need for one cluster: the fitted models and the WMD
/// word vectors, plus inference settings.
#[derive(Clone, Copy)]
pub struct SimilarityContext<'a, S: Scalar> {
    pub tfidf: &'a TfIdfModel<S>,
    pub dbow: &'a DbowModel<S>,
    pub word_vectors: &'a WordVectors<S>,
    pub wmd_mode: WmdMode,
    /// Epochs for inferring unseen document vectors.
    pub infer_epochs: usize,
    /// Seed shared by every inference in this context, so identical texts
    /// infer to identical vectors.
    pub infer_seed: u64,
}

impl<'a, S: Scalar> SimilarityContext<'a, S> {
    /// Binds this context to `units` and `query` for one selection run.
    pub fn unit_sims(
        self,
        units: &'a [TokenList],
        query: &'a TokenList,
        sim1: MeasureKind,
        sim2: MeasureKind,
    ) -> UnitSimilarities<'a, S> {
        UnitSimilarities {
            ctx: self,
            units,
            query,
            sim1,
            sim2,
            tfidf_reps: None,
            dense_reps: None,
            nbow_reps: None,
            relevance_cache: vec![None; units.len()],
            pair_cache: HashMap::new(),
        }
    }
}

/// Per-measure unit representations: sparse TF-IDF, dense embeddings, or
/// nBOW distributions (absent for all-OOV units).
struct Reps<R> {
    units: Vec<R>,
    query: R,
}

/// Memoized similarities between one unit set and a query.
///
/// The last entry conceptually belongs to the query; unit indices follow the
/// input slice.  Implements [`PairSimilarity`], so it plugs straight into
/// [`crate::mmr::mmr_select`].
pub struct UnitSimilarities<'a, S: Scalar> {
    ctx: SimilarityContext<'a, S>,
    units: &'a [TokenList],
    query: &'a TokenList,
    sim1: MeasureKind,
    sim2: MeasureKind,
    tfidf_reps: Option<Reps<SparseVector<S>>>,
    dense_reps: Option<Reps<Vec<S>>>,
    nbow_reps: Option<Reps<Option<NbowDistribution<S>>>>,
    relevance_cache: Vec<Option<S>>,
    pair_cache: HashMap<(usize, usize), S>,
}

impl<'a, S: Scalar> UnitSimilarities<'a, S> {
    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    fn ensure_tfidf(&mut self) -> &Reps<SparseVector<S>> {
        if self.tfidf_reps.is_none() {
            self.tfidf_reps = Some(Reps {
                units: self.units.iter().map(|u| self.ctx.tfidf.vector(u)).collect(),
                query: self.ctx.tfidf.vector(self.query),
            });
        }
        self.tfidf_reps.as_ref().expect("just built")
    }

    fn ensure_dense(&mut self) -> &Reps<Vec<S>> {
        if self.dense_reps.is_none() {
            let infer = |tokens: &TokenList| {
                self.ctx
                    .dbow
                    .infer(tokens, self.ctx.infer_epochs, self.ctx.infer_seed)
                    .vector
            };
            self.dense_reps = Some(Reps {
                units: self.units.iter().map(infer).collect(),
                query: infer(self.query),
            });
        }
        self.dense_reps.as_ref().expect("just built")
    }

    fn ensure_nbow(&mut self) -> &Reps<Option<NbowDistribution<S>>> {
        if self.nbow_reps.is_none() {
            let build = |tokens: &TokenList| NbowDistribution::from_tokens(tokens, self.ctx.word_vectors);
            self.nbow_reps = Some(Reps {
                units: self.units.iter().map(build).collect(),
                query: build(self.query),
            });
        }
        self.nbow_reps.as_ref().expect("just built")
    }

    /// Similarity between unit `i` and either unit `j` or the query (`None`).
    fn measure(&mut self, kind: MeasureKind, i: usize, j: Option<usize>) -> S {
        match kind {
            MeasureKind::TfidfCosine => {
                let reps = self.ensure_tfidf();
                let b = j.map_or(&reps.query, |j| &reps.units[j]);
                cosine_sparse(&reps.units[i], b)
            }
            MeasureKind::DocembedCosine => {
                let reps = self.ensure_dense();
                let b = j.map_or(&reps.query, |j| &reps.units[j]);
                cosine(&reps.units[i], b)
            }
            MeasureKind::Wmd => {
                let mode = self.ctx.wmd_mode;
                let reps = self.ensure_nbow();
                let b = j.map_or(&reps.query, |j| &reps.units[j]);
                match (&reps.units[i], b) {
                    (Some(a), Some(b)) => S::one() / (S::one() + nbow_distance(a, b, mode)),
                    _ => {
                        log::debug!("wmd undefined for a unit pair; similarity 0");
                        S::zero()
                    }
                }
            }
        }
    }
}

impl<'a, S: Scalar> PairSimilarity<S> for UnitSimilarities<'a, S> {
    fn relevance(&mut self, candidate: usize) -> S {
        if let Some(cached) = self.relevance_cache[candidate] {
            return cached;
        }
        let value = self.measure(self.sim1, candidate, None);
        self.relevance_cache[candidate] = Some(value);
        value
    }

    fn between(&mut self, a: usize, b: usize) -> S {
        let key = (a.min(b), a.max(b));
        if let Some(&cached) = self.pair_cache.get(&key) {
            return cached;
        }
        let value = self.measure(self.sim2, key.0, Some(key.1));
        self.pair_cache.insert(key, value);
        value
    }
}

/// Convenience: query tokens of a [`QueryDocument`].
pub fn query_tokens(query: &QueryDocument) -> &TokenList {
    &query.tokens
}
