//! Deterministic fusion of multi-document summarization outputs.
//!
//! The library combines the summaries that several upstream models produced
//! for a document cluster into a single fused summary.  The best model's
//! output anchors the result and a Maximal Marginal Relevance (MMR) pass
//! appends the most relevant, least redundant sentences drawn from the other
//! models.  Relevance is measured against a query document assembled from the
//! top words of an LDA topic model fitted on the cluster itself.
//!
//! The numeric kernels ([`vectors`], [`wmd`], [`lda`], [`mmr`], [`rouge`])
//! are generic over the scalar type through the [`Scalar`] trait; the
//! orchestration layers ([`pipeline`], [`corpus`], [`tuner`]) work in `f64`.
//! Concrete `f64` aliases for the generic types live at the crate root.
//!
//! Every run is reproducible: all randomness flows from a single master seed
//! through [`pipeline::derive_seed`], and no output file contains clocks,
//! thread ids, or iteration-order artifacts.

pub mod corpus;
pub mod lda;
pub mod mmr;
pub mod pipeline;
pub mod rouge;
pub mod scalar;
pub mod similarity;
pub mod textproc;
pub mod tuner;
pub mod vectors;
pub mod wmd;

pub use scalar::Scalar;

/// TF-IDF model over `f64`, the scalar the pipeline runs on.
pub type TfIdfModel = vectors::TfIdfModel<f64>;
/// Sparse vector over `f64`.
pub type SparseVector = vectors::SparseVector<f64>;
/// Distributed bag-of-words document embedding model over `f64`.
pub type DbowModel = vectors::DbowModel<f64>;
/// Word-vector table over `f64`.
pub type WordVectors = vectors::WordVectors<f64>;
/// Fitted LDA topic model over `f64`.
pub type LdaModel = lda::LdaModel<f64>;
/// ROUGE precision/recall/F1 triple over `f64`.
pub type RougeScore = rouge::RougeScore<f64>;
/// One MMR selection step over `f64`.
pub type MmrStep = mmr::MmrStep<f64>;
