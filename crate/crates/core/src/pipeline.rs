//! The fusion pipeline: configuration, per-cluster orchestration, and the
//! parallel corpus driver.
//!
//! A cluster run proceeds in fixed stages:
//!
//! 1. Fit an LDA topic model on the cluster's documents and concatenate the
//!    top words per topic into the query document.
//! 2. Fit the similarity models (TF-IDF and DBOW) over every document
//!    sentence, every candidate-summary sentence, and the query tokens.
//! 3. Keep at most `docs_per_cluster` documents (MMR over full-document
//!    texts when the cluster is larger).
//! 4. Build one output per model: concatenate its summaries or keep them as
//!    separate units, then MMR-reduce each non-pretrained unit.
//! 5. Anchor on the best model's output and append MMR-selected sentences
//!    from the pooled remainder until the length law is met.
//!
//! Every random stage draws its seed from [`derive_seed`], so results depend
//! only on the master seed and the cluster id — never on thread scheduling
//! or cluster order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::SystemTime;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AggregateRouge, CandidateSummary, Cluster, RunError, RunRecord, Scope};
use crate::lda::{build_query, default_alpha, fit_lda, QueryDocument};
use crate::mmr::{mmr_reduce, mmr_select, PairSimilarity};
use crate::rouge::{evaluate_corpus, RougeError};
use crate::similarity::{MeasureKind, SimilarityContext};
use crate::textproc::{
    avg_sentences_per_doc, split_sentences, tokenize, Sentence, StopwordSet, TokenList,
};
use crate::vectors::{fit_tfidf, train_dbow, DbowModel, DbowParams, TfIdfModel, WordVectors};
use crate::wmd::WmdMode;

/// Errors from configuration and fusion.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cluster {cluster_id:?} has no candidates from best model {model_id:?}")]
    MissingBestModel {
        cluster_id: String,
        model_id: String,
    },
    #[error("cluster {cluster_id:?}: {message}")]
    Cluster { cluster_id: String, message: String },
    #[error("corpus-scope query failed: {0}")]
    CorpusQuery(String),
    #[error("all {count} clusters failed; first error: {first}")]
    AllClustersFailed { count: usize, first: String },
}

fn cluster_err(cluster_id: &str, message: impl std::fmt::Display) -> PipelineError {
    PipelineError::Cluster {
        cluster_id: cluster_id.to_string(),
        message: message.to_string(),
    }
}

/// How the per-model outputs are formed before anchoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// One unit per model: MDS output first, then the per-document summaries
    /// in document order (capped at the cluster's average document length).
    Concatenate,
    /// One unit per summary; the best model's most query-relevant unit
    /// becomes the anchor.
    Select,
}

/// Whether the query topic model sees one cluster or the whole corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LdaScope {
    Cluster,
    Corpus,
}

fn d_lambda() -> f64 {
    0.975
}
fn d_mmr_percentage() -> f64 {
    0.107
}
fn d_reduction_percentage() -> f64 {
    0.01
}
fn d_docs_per_cluster() -> usize {
    10
}
fn d_lda_topics() -> usize {
    3
}
fn d_lda_words_per_topic() -> usize {
    7
}
fn d_lda_scope() -> LdaScope {
    LdaScope::Cluster
}
fn d_lda_beta() -> f64 {
    0.01
}
fn d_lda_iterations() -> usize {
    500
}
fn d_measure() -> MeasureKind {
    MeasureKind::TfidfCosine
}
fn d_reduction_min_sentences() -> usize {
    3
}
fn d_embed_dimension() -> usize {
    64
}
fn d_embed_epochs() -> usize {
    40
}
fn d_embed_negatives() -> usize {
    5
}
fn d_wmd_mode() -> WmdMode {
    WmdMode::Exact
}
fn d_seed() -> u64 {
    1
}

/// Full parameterization of one fusion run.
///
/// Config files are JSON objects mirroring these field names; only
/// `best_model_id` and `mode` are required.  Unknown keys are rejected so
/// typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    /// MMR trade-off: 1 is pure relevance, 0 pure anti-redundancy.
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    /// Appended-sentence budget as a fraction of the anchor length (`p`).
    #[serde(default = "d_mmr_percentage")]
    pub mmr_percentage: f64,
    /// Fraction of each summary removed during reduction (`R`).
    #[serde(default = "d_reduction_percentage")]
    pub reduction_percentage: f64,
    /// Largest number of documents fused per cluster (`k`).
    #[serde(default = "d_docs_per_cluster")]
    pub docs_per_cluster: usize,
    /// Topics fitted and concatenated into the query (`T`).
    #[serde(default = "d_lda_topics")]
    pub lda_topics: usize,
    /// Top words taken from each topic (`W`).
    #[serde(default = "d_lda_words_per_topic")]
    pub lda_words_per_topic: usize,
    #[serde(default = "d_lda_scope")]
    pub lda_scope: LdaScope,
    /// Dirichlet document-topic prior; defaults to `50 / lda_topics`.
    #[serde(default)]
    pub lda_alpha: Option<f64>,
    #[serde(default = "d_lda_beta")]
    pub lda_beta: f64,
    #[serde(default = "d_lda_iterations")]
    pub lda_iterations: usize,
    /// Measure for picking the anchor among `select`-mode units.
    #[serde(default = "d_measure")]
    pub sim0: MeasureKind,
    /// Measure for relevance to the query (Sim1).
    #[serde(default = "d_measure")]
    pub sim1: MeasureKind,
    /// Measure for redundancy against selected items (Sim2).
    #[serde(default = "d_measure")]
    pub sim2: MeasureKind,
    /// Per-model measure overrides applied during summary reduction; the
    /// override replaces both Sim1 and Sim2 for that model's units.
    #[serde(default)]
    pub model_sim_overrides: BTreeMap<String, MeasureKind>,
    /// Model whose output anchors the fused summary.
    pub best_model_id: String,
    pub mode: FusionMode,
    /// Units shorter than this skip reduction entirely.
    #[serde(default = "d_reduction_min_sentences")]
    pub reduction_min_sentences: usize,
    #[serde(default = "d_embed_dimension")]
    pub embed_dimension: usize,
    #[serde(default = "d_embed_epochs")]
    pub embed_epochs: usize,
    #[serde(default = "d_embed_negatives")]
    pub embed_negatives: usize,
    /// Epochs for inferring unseen vectors; defaults to `embed_epochs`.
    #[serde(default)]
    pub infer_epochs: Option<usize>,
    #[serde(default = "d_wmd_mode")]
    pub wmd_mode: WmdMode,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl FusionConfig {
    /// A config with every default filled in; callers set the required
    /// fields explicitly.
    pub fn with_best_model(best_model_id: &str, mode: FusionMode) -> FusionConfig {
        FusionConfig {
            lambda: d_lambda(),
            mmr_percentage: d_mmr_percentage(),
            reduction_percentage: d_reduction_percentage(),
            docs_per_cluster: d_docs_per_cluster(),
            lda_topics: d_lda_topics(),
            lda_words_per_topic: d_lda_words_per_topic(),
            lda_scope: d_lda_scope(),
            lda_alpha: None,
            lda_beta: d_lda_beta(),
            lda_iterations: d_lda_iterations(),
            sim0: d_measure(),
            sim1: d_measure(),
            sim2: d_measure(),
            model_sim_overrides: BTreeMap::new(),
            best_model_id: best_model_id.to_string(),
            mode,
            reduction_min_sentences: d_reduction_min_sentences(),
            embed_dimension: d_embed_dimension(),
            embed_epochs: d_embed_epochs(),
            embed_negatives: d_embed_negatives(),
            infer_epochs: None,
            wmd_mode: d_wmd_mode(),
            seed: d_seed(),
        }
    }

    /// Reads and validates a JSON config file.
    pub fn from_file(path: &Path) -> Result<FusionConfig, PipelineError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let config: FusionConfig = serde_json::from_str(&raw)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every bound, reporting all violations at once.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut problems = Vec::new();
        if !(self.lambda >= 0.0 && self.lambda <= 1.0) {
            problems.push(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            ));
        }
        if !(self.mmr_percentage > 0.0 && self.mmr_percentage <= 1.0) {
            problems.push(format!(
                "mmr_percentage must lie in (0, 1], got {}",
                self.mmr_percentage
            ));
        }
        if !(self.reduction_percentage > 0.0 && self.reduction_percentage <= 1.0) {
            problems.push(format!(
                "reduction_percentage must lie in (0, 1], got {}",
                self.reduction_percentage
            ));
        }
        if self.docs_per_cluster == 0 {
            problems.push("docs_per_cluster must be at least 1".to_string());
        }
        if self.lda_topics == 0 {
            problems.push("lda_topics must be at least 1".to_string());
        }
        if self.lda_words_per_topic == 0 {
            problems.push("lda_words_per_topic must be at least 1".to_string());
        }
        if let Some(alpha) = self.lda_alpha {
            if !(alpha > 0.0) {
                problems.push(format!("lda_alpha must be positive, got {alpha}"));
            }
        }
        if !(self.lda_beta > 0.0) {
            problems.push(format!("lda_beta must be positive, got {}", self.lda_beta));
        }
        if self.lda_iterations == 0 {
            problems.push("lda_iterations must be at least 1".to_string());
        }
        if self.best_model_id.is_empty() {
            problems.push("best_model_id must not be empty".to_string());
        }
        if self.embed_dimension < 2 {
            problems.push(format!(
                "embed_dimension must be at least 2, got {}",
                self.embed_dimension
            ));
        }
        if self.embed_epochs == 0 {
            problems.push("embed_epochs must be at least 1".to_string());
        }
        if let Some(epochs) = self.infer_epochs {
            if epochs == 0 {
                problems.push("infer_epochs must be at least 1".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(problems.join("; ")))
        }
    }

    fn alpha(&self) -> f64 {
        self.lda_alpha
            .unwrap_or_else(|| default_alpha(self.lda_topics))
    }

    fn infer_epochs(&self) -> usize {
        self.infer_epochs.unwrap_or(self.embed_epochs)
    }
}

/// Derives a stage seed from the master seed and a stage label such as
/// `"lda/cluster-7"`.  FNV-1a hashes the label; a splitmix64 finalizer mixes
/// in the master seed.  Stable across runs and platforms by construction.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in stage.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Marker for anchor sentences in serialized output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnchorTag {
    #[serde(rename = "anchor")]
    Anchor,
}

/// How a sentence earned its place: an MMR score, or membership in the
/// anchor.  Serializes as either a number or the string `"anchor"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SelectionScore {
    Mmr(f64),
    Anchor(AnchorTag),
}

impl SelectionScore {
    pub fn anchor() -> SelectionScore {
        SelectionScore::Anchor(AnchorTag::Anchor)
    }

    pub fn is_anchor(&self) -> bool {
        matches!(self, SelectionScore::Anchor(_))
    }
}

/// One sentence of a fused summary, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedSentence {
    pub text: String,
    /// Model whose summary contributed this sentence.
    pub model_id: String,
    /// Source document for SDS-scoped sentences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    /// Position within the candidate summary it came from.
    pub source_ordinal: usize,
    /// Position within the fused summary.
    pub rank: usize,
    pub score: SelectionScore,
}

/// A fused summary: `anchor_len` anchor sentences followed by
/// `appended_len` MMR picks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedSummary {
    pub cluster_id: String,
    pub text: String,
    pub anchor_len: usize,
    pub appended_len: usize,
    pub sentences: Vec<FusedSentence>,
}

/// Run-wide inputs that are not part of the config: the stopword list used
/// for topic modelling and optional pretrained word vectors for WMD.
#[derive(Debug, Default)]
pub struct RunResources {
    pub stopwords: Option<StopwordSet>,
    pub word_vectors: Option<WordVectors<f64>>,
}

impl RunResources {
    fn stopwords(&self) -> StopwordSet {
        self.stopwords.clone().unwrap_or_else(StopwordSet::builtin)
    }
}

/// Everything fitted for one cluster: the query document plus the models
/// backing the similarity measures.
pub struct ClusterModels<'a> {
    pub query: QueryDocument,
    tfidf: TfIdfModel<f64>,
    dbow: DbowModel<f64>,
    /// Word vectors derived from the DBOW output layer, used when no
    /// pretrained vectors are supplied.
    derived_wv: WordVectors<f64>,
    external_wv: Option<&'a WordVectors<f64>>,
    wmd_mode: WmdMode,
    infer_epochs: usize,
    infer_seed: u64,
}

impl<'a> ClusterModels<'a> {
    pub fn context(&self) -> SimilarityContext<'_, f64> {
        SimilarityContext {
            tfidf: &self.tfidf,
            dbow: &self.dbow,
            word_vectors: self.external_wv.unwrap_or(&self.derived_wv),
            wmd_mode: self.wmd_mode,
            infer_epochs: self.infer_epochs,
            infer_seed: self.infer_seed,
        }
    }
}

/// Similarity tokenization is fixed: lowercased, punctuation stripped.
fn sim_tokens(text: &str) -> TokenList {
    tokenize(text, true, true)
}

/// Tokenizes one document for topic modelling: similarity tokenization
/// minus stopwords.
fn lda_tokens(text: &str, stopwords: &StopwordSet) -> TokenList {
    TokenList(
        sim_tokens(text)
            .0
            .into_iter()
            .filter(|t| !stopwords.contains(t))
            .collect(),
    )
}

fn fit_query(
    docs: &[TokenList],
    config: &FusionConfig,
    scope: &str,
) -> Result<QueryDocument, crate::lda::LdaError> {
    let model = fit_lda::<f64>(
        docs,
        config.lda_topics,
        config.alpha(),
        config.lda_beta,
        config.lda_iterations,
        derive_seed(config.seed, &format!("lda/{scope}")),
    )?;
    Ok(build_query(
        &model,
        config.lda_topics,
        config.lda_words_per_topic,
        scope,
    ))
}

/// Fits and returns the topic-model query document for one cluster,
/// exactly as `fuse_cluster` computes it under cluster-scope topic
/// modelling: same tokenization, same derived seed.
pub fn cluster_query(
    cluster: &Cluster,
    config: &FusionConfig,
    resources: &RunResources,
) -> Result<QueryDocument, PipelineError> {
    let id = cluster.cluster_id.as_str();
    let stopwords = resources.stopwords();
    let docs: Vec<TokenList> = cluster
        .documents
        .iter()
        .map(|d| lda_tokens(&d.text, &stopwords))
        .collect();
    fit_query(&docs, config, id).map_err(|e| cluster_err(id, e))
}

/// Fits the query (unless a corpus-scope one is supplied) and the
/// similarity models for one cluster.
///
/// The similarity fit corpus is every document sentence, every candidate
/// sentence, and the query tokens, in that order.
pub fn fit_cluster_models<'a>(
    cluster: &Cluster,
    candidates: &[&CandidateSummary],
    config: &FusionConfig,
    resources: &'a RunResources,
    shared_query: Option<&QueryDocument>,
) -> Result<ClusterModels<'a>, PipelineError> {
    let id = cluster.cluster_id.as_str();
    let query = match shared_query {
        Some(q) => q.clone(),
        None => cluster_query(cluster, config, resources)?,
    };

    let mut fit_corpus: Vec<TokenList> = Vec::new();
    for doc in &cluster.documents {
        for sentence in split_sentences(&doc.text) {
            fit_corpus.push(sim_tokens(&sentence.text));
        }
    }
    for cand in candidates {
        for sentence in split_sentences(&cand.text) {
            fit_corpus.push(sim_tokens(&sentence.text));
        }
    }
    fit_corpus.push(query.tokens.clone());

    let tfidf = fit_tfidf(&fit_corpus).map_err(|e| cluster_err(id, e))?;
    let dbow = train_dbow(
        &fit_corpus,
        &DbowParams {
            dimension: config.embed_dimension,
            epochs: config.embed_epochs,
            negatives: config.embed_negatives,
            seed: derive_seed(config.seed, &format!("dbow/{id}")),
            ..DbowParams::default()
        },
    )
    .map_err(|e| cluster_err(id, e))?;

    // Deriving vectors from the DBOW output layer is only worth the copy
    // when some measure actually runs WMD without pretrained vectors.
    let needs_derived = resources.word_vectors.is_none()
        && [config.sim0, config.sim1, config.sim2]
            .into_iter()
            .chain(config.model_sim_overrides.values().copied())
            .any(|m| m == MeasureKind::Wmd);
    let derived_wv = if needs_derived {
        WordVectors::from_dbow(&dbow)
    } else {
        WordVectors::new(config.embed_dimension)
    };

    Ok(ClusterModels {
        query,
        tfidf,
        dbow,
        derived_wv,
        external_wv: resources.word_vectors.as_ref(),
        wmd_mode: config.wmd_mode,
        infer_epochs: config.infer_epochs(),
        infer_seed: derive_seed(config.seed, &format!("infer/{id}")),
    })
}

/// Keeps at most `docs_per_cluster` documents, by MMR over full-document
/// texts when the cluster is larger.  Returns ascending document indices.
pub fn select_k_documents(
    cluster: &Cluster,
    config: &FusionConfig,
    models: &ClusterModels<'_>,
) -> Result<Vec<usize>, PipelineError> {
    let n_docs = cluster.documents.len();
    if n_docs <= config.docs_per_cluster {
        return Ok((0..n_docs).collect());
    }
    let units: Vec<TokenList> = cluster
        .documents
        .iter()
        .map(|d| sim_tokens(&d.text))
        .collect();
    let mut sims = models
        .context()
        .unit_sims(&units, &models.query.tokens, config.sim1, config.sim2);
    let result = mmr_select(
        n_docs,
        config.docs_per_cluster,
        config.lambda,
        &[],
        &mut sims,
    )
    .map_err(|e| cluster_err(&cluster.cluster_id, e))?;
    let mut kept: Vec<usize> = result.selected.iter().map(|s| s.index).collect();
    kept.sort_unstable();
    Ok(kept)
}

/// One model's contribution: units of provenance-tagged sentences, after
/// any reduction.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub model_id: String,
    pub units: Vec<Vec<Sentence>>,
    pub pretrained: bool,
}

fn split_tagged(cand: &CandidateSummary) -> Vec<Sentence> {
    split_sentences(&cand.text)
        .into_iter()
        .map(|s| s.with_source(&cand.model_id, cand.doc_id.as_deref()))
        .collect()
}

/// Builds one model's output for a cluster.
///
/// In `concatenate` mode the MDS summary (if any) is followed by the
/// selected documents' summaries in document order; when more than
/// `max(1, ⌊avg sentences per document⌋)` per-document summaries exist, MMR
/// keeps the best of them first.  In `select` mode every summary stays its
/// own unit, MDS first.  Non-pretrained units of at least
/// `reduction_min_sentences` sentences are then MMR-reduced.
///
/// Returns `None` when the model contributed nothing for the selected
/// documents.
pub fn build_model_output(
    cluster: &Cluster,
    model_id: &str,
    candidates: &[&CandidateSummary],
    selected_docs: &[usize],
    config: &FusionConfig,
    models: &ClusterModels<'_>,
) -> Result<Option<ModelOutput>, PipelineError> {
    let id = cluster.cluster_id.as_str();
    let mds = candidates.iter().find(|c| c.scope == Scope::Mds);
    let mut sds: Vec<&CandidateSummary> = Vec::new();
    for &doc_idx in selected_docs {
        let doc_id = cluster.documents[doc_idx].doc_id.as_str();
        if let Some(cand) = candidates
            .iter()
            .find(|c| c.scope == Scope::Sds && c.doc_id.as_deref() == Some(doc_id))
        {
            sds.push(cand);
        }
    }
    if mds.is_none() && sds.is_empty() {
        return Ok(None);
    }

    let mut used: Vec<&CandidateSummary> = Vec::new();
    let mut units: Vec<Vec<Sentence>> = Vec::new();
    match config.mode {
        FusionMode::Concatenate => {
            let cap = (avg_sentences_per_doc(cluster).floor() as usize).max(1);
            let chosen: Vec<&CandidateSummary> = if sds.len() > cap {
                let texts: Vec<TokenList> = sds.iter().map(|c| sim_tokens(&c.text)).collect();
                let mut sims = models.context().unit_sims(
                    &texts,
                    &models.query.tokens,
                    config.sim1,
                    config.sim2,
                );
                let result = mmr_select(sds.len(), cap, config.lambda, &[], &mut sims)
                    .map_err(|e| cluster_err(id, e))?;
                let mut keep: Vec<usize> = result.selected.iter().map(|s| s.index).collect();
                keep.sort_unstable();
                keep.into_iter().map(|i| sds[i]).collect()
            } else {
                sds
            };
            let mut unit = Vec::new();
            if let Some(cand) = mds {
                unit.extend(split_tagged(cand));
                used.push(cand);
            }
            for cand in chosen {
                unit.extend(split_tagged(cand));
                used.push(cand);
            }
            units.push(unit);
        }
        FusionMode::Select => {
            if let Some(cand) = mds {
                units.push(split_tagged(cand));
                used.push(cand);
            }
            for cand in sds {
                units.push(split_tagged(cand));
                used.push(cand);
            }
        }
    }

    let pretrained = used.iter().any(|c| c.pretrained_on_dataset);
    if !pretrained {
        let (sim1, sim2) = match config.model_sim_overrides.get(model_id) {
            Some(&m) => (m, m),
            None => (config.sim1, config.sim2),
        };
        for unit in &mut units {
            if unit.len() < config.reduction_min_sentences {
                continue;
            }
            let texts: Vec<TokenList> = unit.iter().map(|s| sim_tokens(&s.text)).collect();
            let mut sims = models
                .context()
                .unit_sims(&texts, &models.query.tokens, sim1, sim2);
            let kept = mmr_reduce(
                unit.len(),
                config.reduction_percentage,
                config.lambda,
                &mut sims,
            )
            .map_err(|e| cluster_err(id, e))?;
            *unit = kept.into_iter().map(|i| unit[i].clone()).collect();
        }
    }

    Ok(Some(ModelOutput {
        model_id: model_id.to_string(),
        units,
        pretrained,
    }))
}

/// Picks the anchor unit from the best model's output: the unit most
/// similar to the query under `sim0`, first index on ties.
pub fn pick_best_anchor(
    cluster_id: &str,
    output: &ModelOutput,
    config: &FusionConfig,
    models: &ClusterModels<'_>,
) -> Result<usize, PipelineError> {
    match output.units.len() {
        0 => Err(cluster_err(
            cluster_id,
            format!("model {:?} produced no units", output.model_id),
        )),
        1 => Ok(0),
        _ => {
            let texts: Vec<TokenList> = output
                .units
                .iter()
                .map(|unit| {
                    let joined: Vec<&str> = unit.iter().map(|s| s.text.as_str()).collect();
                    sim_tokens(&joined.join(" "))
                })
                .collect();
            let mut sims = models.context().unit_sims(
                &texts,
                &models.query.tokens,
                config.sim0,
                config.sim0,
            );
            let mut best = 0usize;
            let mut best_score = sims.relevance(0);
            for i in 1..texts.len() {
                let score = sims.relevance(i);
                if score > best_score {
                    best = i;
                    best_score = score;
                }
            }
            Ok(best)
        }
    }
}

/// Appends `l = max(1, ⌊anchor_len · mmr_percentage⌋)` MMR-selected pool
/// sentences to the anchor and assembles the fused summary.
///
/// The pool is first deduplicated against the anchor and itself by exact
/// normalized text.  When fewer sentences survive than the law asks for,
/// the budget shrinks to what is available (with a warning).
pub fn assemble_final(
    cluster_id: &str,
    anchor: &[Sentence],
    pool: &[Sentence],
    config: &FusionConfig,
    models: &ClusterModels<'_>,
) -> Result<FusedSummary, PipelineError> {
    let anchor_texts: HashSet<&str> = anchor.iter().map(|s| s.text.as_str()).collect();
    let mut seen = HashSet::new();
    let pool: Vec<&Sentence> = pool
        .iter()
        .filter(|s| !anchor_texts.contains(s.text.as_str()) && seen.insert(s.text.as_str()))
        .collect();

    let n = anchor.len();
    let mut l = ((n as f64) * config.mmr_percentage).floor().max(1.0) as usize;
    if pool.len() < l {
        log::warn!(
            "cluster {cluster_id}: pool has {} sentences after deduplication, \
             appending that many instead of {l}",
            pool.len()
        );
        l = pool.len();
    }

    let picks = if l == 0 {
        Vec::new()
    } else {
        let units: Vec<TokenList> = anchor
            .iter()
            .map(|s| sim_tokens(&s.text))
            .chain(pool.iter().map(|s| sim_tokens(&s.text)))
            .collect();
        let preselected: Vec<usize> = (0..n).collect();
        let mut sims = models
            .context()
            .unit_sims(&units, &models.query.tokens, config.sim1, config.sim2);
        mmr_select(units.len(), l, config.lambda, &preselected, &mut sims)
            .map_err(|e| cluster_err(cluster_id, e))?
            .selected
    };

    let mut sentences = Vec::with_capacity(n + picks.len());
    let fused_sentence = |s: &Sentence, rank: usize, score: SelectionScore| FusedSentence {
        text: s.text.clone(),
        model_id: s
            .model_id
            .clone()
            .expect("pipeline sentences carry model provenance"),
        doc_id: s.doc_id.clone(),
        source_ordinal: s.ordinal,
        rank,
        score,
    };
    for (rank, s) in anchor.iter().enumerate() {
        sentences.push(fused_sentence(s, rank, SelectionScore::anchor()));
    }
    for (offset, step) in picks.iter().enumerate() {
        let s = pool[step.index - n];
        sentences.push(fused_sentence(s, n + offset, SelectionScore::Mmr(step.score)));
    }

    let text = sentences
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    Ok(FusedSummary {
        cluster_id: cluster_id.to_string(),
        text,
        anchor_len: n,
        appended_len: picks.len(),
        sentences,
    })
}

fn fuse_cluster_inner(
    cluster: &Cluster,
    candidates: &[&CandidateSummary],
    config: &FusionConfig,
    resources: &RunResources,
    shared_query: Option<&QueryDocument>,
) -> Result<FusedSummary, PipelineError> {
    let id = cluster.cluster_id.as_str();
    if !candidates
        .iter()
        .any(|c| c.model_id == config.best_model_id)
    {
        return Err(PipelineError::MissingBestModel {
            cluster_id: id.to_string(),
            model_id: config.best_model_id.clone(),
        });
    }

    let models = fit_cluster_models(cluster, candidates, config, resources, shared_query)?;
    let selected = select_k_documents(cluster, config, &models)?;

    let mut by_model: BTreeMap<&str, Vec<&CandidateSummary>> = BTreeMap::new();
    for cand in candidates {
        by_model.entry(cand.model_id.as_str()).or_default().push(cand);
    }

    let mut outputs: Vec<ModelOutput> = Vec::new();
    for (model_id, cands) in &by_model {
        if let Some(output) =
            build_model_output(cluster, model_id, cands, &selected, config, &models)?
        {
            outputs.push(output);
        }
    }

    let best_idx = outputs
        .iter()
        .position(|o| o.model_id == config.best_model_id)
        .ok_or_else(|| {
            cluster_err(
                id,
                format!(
                    "best model {:?} contributed no output for the selected documents",
                    config.best_model_id
                ),
            )
        })?;
    let anchor_unit = pick_best_anchor(id, &outputs[best_idx], config, &models)?;
    let anchor = outputs[best_idx].units[anchor_unit].clone();

    let mut pool: Vec<Sentence> = Vec::new();
    for (oi, output) in outputs.iter().enumerate() {
        for (ui, unit) in output.units.iter().enumerate() {
            if oi == best_idx && ui == anchor_unit {
                continue;
            }
            pool.extend(unit.iter().cloned());
        }
    }

    assemble_final(id, &anchor, &pool, config, &models)
}

/// Fuses one cluster.  `candidates` may span the whole corpus; entries for
/// other clusters are ignored.
///
/// Note: with [`LdaScope::Corpus`] the shared query can only be fitted by
/// [`fuse_corpus`]; called directly, this function always fits a
/// cluster-scope query.
pub fn fuse_cluster(
    cluster: &Cluster,
    candidates: &[CandidateSummary],
    config: &FusionConfig,
    resources: &RunResources,
) -> Result<FusedSummary, PipelineError> {
    config.validate()?;
    let mine: Vec<&CandidateSummary> = candidates
        .iter()
        .filter(|c| c.cluster_id == cluster.cluster_id)
        .collect();
    fuse_cluster_inner(cluster, &mine, config, resources, None)
}

/// Fuses every cluster, in parallel, and evaluates ROUGE where references
/// exist.
///
/// Individual cluster failures are collected into the record's error list;
/// the call fails only when no cluster succeeds.  Results are identical for
/// any thread count because every seed is derived per cluster.
pub fn fuse_corpus(
    clusters: &[Cluster],
    candidates: &[CandidateSummary],
    config: &FusionConfig,
    resources: &RunResources,
) -> Result<RunRecord, PipelineError> {
    config.validate()?;
    let started_at = SystemTime::now();

    let shared_query = match config.lda_scope {
        LdaScope::Cluster => None,
        LdaScope::Corpus => {
            let stopwords = resources.stopwords();
            let docs: Vec<TokenList> = clusters
                .iter()
                .flat_map(|c| c.documents.iter())
                .map(|d| lda_tokens(&d.text, &stopwords))
                .collect();
            Some(fit_query(&docs, config, "corpus").map_err(|e| {
                PipelineError::CorpusQuery(e.to_string())
            })?)
        }
    };

    let mut by_cluster: HashMap<&str, Vec<&CandidateSummary>> = HashMap::new();
    for cand in candidates {
        by_cluster
            .entry(cand.cluster_id.as_str())
            .or_default()
            .push(cand);
    }
    let empty = Vec::new();

    let results: Vec<Result<FusedSummary, PipelineError>> = clusters
        .par_iter()
        .map(|cluster| {
            let mine = by_cluster
                .get(cluster.cluster_id.as_str())
                .unwrap_or(&empty);
            fuse_cluster_inner(cluster, mine, config, resources, shared_query.as_ref())
        })
        .collect();

    let mut fused = Vec::new();
    let mut errors = Vec::new();
    for (cluster, result) in clusters.iter().zip(results) {
        match result {
            Ok(summary) => fused.push(summary),
            Err(e) => {
                log::warn!("cluster {} failed: {e}", cluster.cluster_id);
                errors.push(RunError {
                    cluster_id: cluster.cluster_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    if fused.is_empty() && !clusters.is_empty() {
        return Err(PipelineError::AllClustersFailed {
            count: clusters.len(),
            first: errors[0].message.clone(),
        });
    }

    let (scores, aggregate) = if fused.is_empty() {
        (Vec::new(), None)
    } else {
        match evaluate_corpus(&fused, clusters) {
            Ok(report) => (
                report.per_cluster,
                Some(AggregateRouge {
                    means: report.means,
                    evaluated: report.evaluated,
                    skipped: report.skipped,
                }),
            ),
            Err(RougeError::NoEvaluableClusters) => {
                log::warn!("no cluster has a reference summary; skipping evaluation");
                (Vec::new(), None)
            }
            Err(e) => {
                log::warn!("evaluation failed: {e}; continuing without scores");
                (Vec::new(), None)
            }
        }
    };

    Ok(RunRecord {
        config: config.clone(),
        seed: config.seed,
        fused,
        scores,
        aggregate,
        errors,
        cluster_count: clusters.len(),
        started_at: Some(started_at),
        finished_at: Some(SystemTime::now()),
    })
}
