//! Latent Dirichlet Allocation via collapsed Gibbs sampling, plus the MMR
//! query document built from the top words of each topic.
//!
//! The sampler is deliberately plain: full sweeps in document/token order,
//! final-state counts (no burn-in averaging), one seeded RNG stream.  Query
//! construction only needs a stable topic-word ranking, not posterior
//! fidelity.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::textproc::{build_vocab, StopwordSet, TextError, TokenList, Vocabulary};

/// Words must appear in at least this many documents to enter the LDA
/// vocabulary; singletons destabilize the Gibbs assignments.
pub const LDA_MIN_DF: usize = 2;

/// Errors from topic-model fitting.
#[derive(Debug, Error)]
pub enum LdaError {
    #[error(transparent)]
    Text(#[from] TextError),
}

/// A fitted topic model: final-state Gibbs count matrices.
#[derive(Debug, Clone)]
pub struct LdaModel<S: Scalar> {
    topics: usize,
    alpha: S,
    beta: S,
    iterations: usize,
    seed: u64,
    vocabulary: Vocabulary,
    /// `topic_word[k][w]`: tokens of word `w` assigned to topic `k`.
    topic_word: Vec<Vec<usize>>,
    /// `doc_topic[d][k]`: tokens of document `d` assigned to topic `k`.
    doc_topic: Vec<Vec<usize>>,
    /// Row sums of `topic_word`.
    topic_totals: Vec<usize>,
}

/// The classic default document-topic prior, `50 / T`.
pub fn default_alpha<S: Scalar>(topics: usize) -> S {
    S::from_config(50.0) / S::from_count(topics)
}

impl<S: Scalar> LdaModel<S> {
    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn beta(&self) -> S {
        self.beta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn topic_word_count(&self, topic: usize, word: usize) -> usize {
        self.topic_word[topic][word]
    }

    pub fn doc_topic_count(&self, doc: usize, topic: usize) -> usize {
        self.doc_topic[doc][topic]
    }

    /// Total tokens assigned to `topic`.
    pub fn topic_total(&self, topic: usize) -> usize {
        self.topic_totals[topic]
    }
}

/// Fits an LDA model by collapsed Gibbs sampling.
///
/// `docs` should already be stopword-filtered; fitting applies the min_df=2
/// vocabulary cut on top.  Deterministic given the seed: assignments are
/// initialized and resampled in document/token order from one RNG stream.
pub fn fit_lda<S: Scalar>(
    docs: &[TokenList],
    topics: usize,
    alpha: S,
    beta: S,
    iterations: usize,
    seed: u64,
) -> Result<LdaModel<S>, LdaError> {
    debug_assert!(topics >= 1, "topic count must be at least 1");
    debug_assert!(iterations >= 1, "iteration count must be at least 1");
    debug_assert!(alpha > S::zero() && beta > S::zero(), "priors must be positive");
    let vocabulary = build_vocab(docs, &StopwordSet::empty(), LDA_MIN_DF)?;
    let v = vocabulary.len();

    let doc_words: Vec<Vec<usize>> = docs
        .iter()
        .map(|doc| doc.iter().filter_map(|t| vocabulary.index_of(t)).collect())
        .collect();

    let mut topic_word = vec![vec![0usize; v]; topics];
    let mut doc_topic = vec![vec![0usize; topics]; docs.len()];
    let mut topic_totals = vec![0usize; topics];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut assignments: Vec<Vec<usize>> = doc_words
        .iter()
        .enumerate()
        .map(|(d, words)| {
            words
                .iter()
                .map(|&w| {
                    let k = rng.random_range(0..topics);
                    topic_word[k][w] += 1;
                    doc_topic[d][k] += 1;
                    topic_totals[k] += 1;
                    k
                })
                .collect()
        })
        .collect();

    let v_beta = S::from_count(v) * beta;
    let mut weights = vec![S::zero(); topics];
    for _ in 0..iterations {
        for (d, words) in doc_words.iter().enumerate() {
            for (t, &w) in words.iter().enumerate() {
                let old = assignments[d][t];
                topic_word[old][w] -= 1;
                doc_topic[d][old] -= 1;
                topic_totals[old] -= 1;

                let mut total = S::zero();
                for k in 0..topics {
                    let p = (S::from_count(doc_topic[d][k]) + alpha)
                        * (S::from_count(topic_word[k][w]) + beta)
                        / (S::from_count(topic_totals[k]) + v_beta);
                    total += p;
                    weights[k] = total;
                }
                let u = S::from_config(rng.random::<f64>()) * total;
                let new = weights
                    .iter()
                    .position(|&cum| u < cum)
                    .unwrap_or(topics - 1);

                topic_word[new][w] += 1;
                doc_topic[d][new] += 1;
                topic_totals[new] += 1;
                assignments[d][t] = new;
            }
        }
    }

    Ok(LdaModel {
        topics,
        alpha,
        beta,
        iterations,
        seed,
        vocabulary,
        topic_word,
        doc_topic,
        topic_totals,
    })
}

/// The `w` highest-probability words of `topic` under the smoothed
/// topic-word distribution, ties broken lexicographically.
///
/// Asking for more words than the vocabulary holds returns the full ranking
/// with a warning.
pub fn top_words<S: Scalar>(model: &LdaModel<S>, topic: usize, w: usize) -> Vec<String> {
    debug_assert!(topic < model.topics, "topic index out of range");
    debug_assert!(w >= 1, "word count must be at least 1");
    let vocab = &model.vocabulary;
    if w > vocab.len() {
        log::warn!(
            "requested {w} words per topic but the vocabulary holds {}; returning all",
            vocab.len()
        );
    }
    // The per-topic normalizer is shared, so ranking by raw count suffices;
    // vocabulary indices are lexicographic, which supplies the tie order.
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(model.topic_word[topic][i]), i));
    order
        .into_iter()
        .take(w)
        .map(|i| vocab.word(i).to_string())
        .collect()
}

/// The LDA-generated word sequence serving as the MMR query document.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryDocument {
    pub tokens: TokenList,
    pub topics: usize,
    pub words_per_topic: usize,
    pub seed: u64,
    /// What the model was fitted on (e.g. a cluster id).
    pub scope: String,
}

/// Concatenates the top `w` words of topics `0..t` in topic-major order.
/// Repeated words across topics are kept.
pub fn build_query<S: Scalar>(model: &LdaModel<S>, t: usize, w: usize, scope: &str) -> QueryDocument {
    debug_assert!(t <= model.topics, "asked for more topics than were fitted");
    let mut tokens = Vec::with_capacity(t * w);
    for topic in 0..t {
        tokens.extend(top_words(model, topic, w));
    }
    QueryDocument {
        tokens: TokenList(tokens),
        topics: t,
        words_per_topic: w,
        seed: model.seed,
        scope: scope.to_string(),
    }
}
