//! Distributed bag-of-words (DBOW) document embeddings.
//!
//! Each document owns a trainable vector that is optimized to predict the
//! words appearing in the document via negative sampling — no word order, no
//! context window.  Training is single-threaded and fully determined by
//! `(corpus, params, seed)`; there is no frequency subsampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::textproc::{build_vocab, StopwordSet, TokenList, Vocabulary};

use super::VectorError;

/// DBOW training hyperparameters.
#[derive(Debug, Clone)]
pub struct DbowParams {
    pub dimension: usize,
    pub epochs: usize,
    /// Negative samples per target word.
    pub negatives: usize,
    pub initial_lr: f64,
    pub final_lr: f64,
    pub seed: u64,
}

impl Default for DbowParams {
    fn default() -> DbowParams {
        DbowParams {
            dimension: 64,
            epochs: 40,
            negatives: 5,
            initial_lr: 0.025,
            final_lr: 0.0001,
            seed: 1,
        }
    }
}

/// A trained DBOW model: per-document vectors plus the word output matrix
/// shared with inference.
#[derive(Debug, Clone)]
pub struct DbowModel<S: Scalar> {
    params: DbowParams,
    vocabulary: Vocabulary,
    /// Output vector per vocabulary word, indexed like the vocabulary.
    word_output: Vec<Vec<S>>,
    /// Trained vector per input document, in input order.
    doc_vectors: Vec<Vec<S>>,
    /// Cumulative unigram^0.75 weights for negative sampling.
    noise_cdf: Vec<f64>,
}

impl<S: Scalar> DbowModel<S> {
    pub fn dimension(&self) -> usize {
        self.params.dimension
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn doc_vector(&self, doc: usize) -> &[S] {
        &self.doc_vectors[doc]
    }

    pub fn doc_count(&self) -> usize {
        self.doc_vectors.len()
    }

    pub fn word_output(&self, word: usize) -> &[S] {
        &self.word_output[word]
    }

    /// Infers a vector for `doc`; see [`infer_docvec`].
    pub fn infer(&self, doc: &TokenList, infer_epochs: usize, seed: u64) -> InferredVector<S> {
        infer_docvec(self, doc, infer_epochs, seed)
    }
}

/// An inferred document vector.  `oov` is set when the document had no
/// in-vocabulary words, in which case the vector is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct InferredVector<S: Scalar> {
    pub vector: Vec<S>,
    pub oov: bool,
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Small deterministic init, matching word2vec's `(rand - 0.5) / dim`.
fn init_vector<S: Scalar>(dimension: usize, rng: &mut ChaCha8Rng) -> Vec<S> {
    (0..dimension)
        .map(|_| S::from_config((rng.random::<f64>() - 0.5) / dimension as f64))
        .collect()
}

/// Draws one word index from the unigram^0.75 noise distribution.
fn sample_noise(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cdf.last().expect("non-empty vocabulary");
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// One negative-sampling SGD step: pushes `doc_vec` toward predicting
/// `target` and away from `negatives`-many noise words.  Word output rows are
/// updated only when `train_outputs` is set (training, not inference).
#[allow(clippy::too_many_arguments)]
fn sgd_step<S: Scalar>(
    doc_vec: &mut [S],
    word_output: &mut [Vec<S>],
    target: usize,
    negatives: usize,
    lr: S,
    cdf: &[f64],
    rng: &mut ChaCha8Rng,
    train_outputs: bool,
) {
    let dimension = doc_vec.len();
    let mut doc_grad = vec![S::zero(); dimension];
    let mut labels = Vec::with_capacity(negatives + 1);
    labels.push((target, S::one()));
    for _ in 0..negatives {
        let noise = sample_noise(cdf, rng);
        if noise != target {
            labels.push((noise, S::zero()));
        }
    }
    for (word, label) in labels {
        let row = &mut word_output[word];
        let mut dot = S::zero();
        for d in 0..dimension {
            dot += doc_vec[d] * row[d];
        }
        let g = (label - sigmoid(dot)) * lr;
        for d in 0..dimension {
            doc_grad[d] += g * row[d];
            if train_outputs {
                row[d] += g * doc_vec[d];
            }
        }
    }
    for d in 0..dimension {
        doc_vec[d] += doc_grad[d];
    }
}

/// Linearly decayed learning rate at `step` of `total` steps.
fn lr_at<S: Scalar>(params: &DbowParams, step: usize, total: usize) -> S {
    let progress = if total <= 1 {
        0.0
    } else {
        step as f64 / (total - 1) as f64
    };
    let lr = params.initial_lr + (params.final_lr - params.initial_lr) * progress;
    S::from_config(lr.max(params.final_lr))
}

/// Trains a DBOW model over `docs`.
///
/// Deterministic: a fixed `(docs, params)` pair always yields bit-identical
/// vectors.  Documents with no in-vocabulary words keep their random init.
pub fn train_dbow<S: Scalar>(
    docs: &[TokenList],
    params: &DbowParams,
) -> Result<DbowModel<S>, VectorError> {
    debug_assert!(params.dimension >= 2, "dimension must be at least 2");
    debug_assert!(params.epochs >= 1, "epochs must be at least 1");
    let vocabulary = build_vocab(docs, &StopwordSet::empty(), 1)?;

    let mut counts = vec![0usize; vocabulary.len()];
    let doc_words: Vec<Vec<usize>> = docs
        .iter()
        .map(|doc| {
            doc.iter()
                .filter_map(|t| vocabulary.index_of(t))
                .inspect(|&w| counts[w] += 1)
                .collect()
        })
        .collect();

    let mut noise_cdf = Vec::with_capacity(vocabulary.len());
    let mut acc = 0.0;
    for &c in &counts {
        acc += (c as f64).powf(0.75);
        noise_cdf.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut doc_vectors: Vec<Vec<S>> = (0..docs.len())
        .map(|_| init_vector(params.dimension, &mut rng))
        .collect();
    let mut word_output: Vec<Vec<S>> = vec![vec![S::zero(); params.dimension]; vocabulary.len()];

    let tokens_per_epoch: usize = doc_words.iter().map(Vec::len).sum();
    let total_steps = params.epochs * tokens_per_epoch;
    let mut step = 0usize;
    for _ in 0..params.epochs {
        for (d, words) in doc_words.iter().enumerate() {
            for &target in words {
                let lr = lr_at::<S>(params, step, total_steps);
                sgd_step(
                    &mut doc_vectors[d],
                    &mut word_output,
                    target,
                    params.negatives,
                    lr,
                    &noise_cdf,
                    &mut rng,
                    true,
                );
                step += 1;
            }
        }
    }

    Ok(DbowModel {
        params: params.clone(),
        vocabulary,
        word_output,
        doc_vectors,
        noise_cdf,
    })
}

/// Infers a vector for an unseen document against frozen word outputs.
///
/// A fresh vector is gradient-descended with the same objective as training;
/// deterministic given `(doc, infer_epochs, seed)`.
pub fn infer_docvec<S: Scalar>(
    model: &DbowModel<S>,
    doc: &TokenList,
    infer_epochs: usize,
    seed: u64,
) -> InferredVector<S> {
    let words: Vec<usize> = doc
        .iter()
        .filter_map(|t| model.vocabulary.index_of(t))
        .collect();
    if words.is_empty() {
        return InferredVector {
            vector: vec![S::zero(); model.params.dimension],
            oov: true,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vector = init_vector(model.params.dimension, &mut rng);
    // Inference never touches the model, but sgd_step needs `&mut` rows.
    let mut outputs = model.word_output.clone();
    let total_steps = infer_epochs * words.len();
    let mut step = 0usize;
    for _ in 0..infer_epochs {
        for &target in &words {
            let lr = lr_at::<S>(&model.params, step, total_steps);
            sgd_step(
                &mut vector,
                &mut outputs,
                target,
                model.params.negatives,
                lr,
                &model.noise_cdf,
                &mut rng,
                false,
            );
            step += 1;
        }
    }
    InferredVector {
        vector,
        oov: false,
    }
}
