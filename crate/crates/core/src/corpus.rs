//! Dataset and candidate data model, file ingestion/validation, candidate
//! fetching from an external summarizer endpoint, and run-artifact
//! persistence.
//!
//! Clusters and candidates are stored as line-delimited JSON (one record per
//! line).  Ingestion validates every structural invariant up front so later
//! pipeline stages never see degenerate inputs.  Run artifacts are written
//! deterministically: the same [`RunRecord`] always produces byte-identical
//! files.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, SystemTime};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{FusedSummary, FusionConfig};
use crate::rouge::{ClusterRouge, RougeTriple};

/// One source article inside a cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

/// A multi-document input unit with an optional gold summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: String,
    pub documents: Vec<Document>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_summary: Option<String>,
}

/// Whether a candidate summarizes the whole cluster or a single document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Multi-document summary of the flattened cluster.
    Mds,
    /// Single-document summary; `doc_id` names the source document.
    Sds,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Mds => write!(f, "mds"),
            Scope::Sds => write!(f, "sds"),
        }
    }
}

/// One model's summary for a cluster (or one of its documents).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub cluster_id: String,
    pub model_id: String,
    pub scope: Scope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    pub text: String,
    pub pretrained_on_dataset: bool,
}

/// Errors from ingestion, fetching, and artifact persistence.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Invalid {
        path: String,
        line: usize,
        message: String,
    },
    #[error("fetch from {endpoint} failed after {attempts} attempt(s): {message}")]
    Transport {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("non-conforming fetch response from {endpoint}: {message}")]
    Protocol { endpoint: String, message: String },
}

/// Reads a line-delimited JSON file into raw `(line_number, json)` pairs.
fn read_jsonl(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let body = fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: path.display().to_string(),
        source,
    })?;
    Ok(body
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.to_string()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

/// Semantic checks for one cluster record.  `seen` tracks cluster ids across
/// the file.  Returns a human-readable message on the first violation.
fn check_cluster(cluster: &Cluster, seen: &mut HashSet<String>) -> Result<(), String> {
    if cluster.cluster_id.trim().is_empty() {
        return Err("cluster_id is empty".into());
    }
    if !seen.insert(cluster.cluster_id.clone()) {
        return Err(format!("duplicate cluster_id {:?}", cluster.cluster_id));
    }
    if cluster.documents.is_empty() {
        return Err(format!("cluster {:?} has no documents", cluster.cluster_id));
    }
    let mut doc_ids = HashSet::new();
    for doc in &cluster.documents {
        if doc.doc_id.trim().is_empty() {
            return Err(format!("cluster {:?} has a document with empty doc_id", cluster.cluster_id));
        }
        if !doc_ids.insert(doc.doc_id.as_str()) {
            return Err(format!(
                "cluster {:?} repeats doc_id {:?}",
                cluster.cluster_id, doc.doc_id
            ));
        }
        if doc.text.trim().is_empty() {
            return Err(format!(
                "cluster {:?} document {:?} has empty text",
                cluster.cluster_id, doc.doc_id
            ));
        }
    }
    Ok(())
}

/// Uniqueness key for a candidate: SDS scope is distinguished per document.
type CandidateKey = (String, String, Scope, Option<String>);

/// Semantic checks for one candidate record against loaded clusters.
fn check_candidate(
    cand: &CandidateSummary,
    clusters: &[Cluster],
    seen: &mut HashSet<CandidateKey>,
) -> Result<(), String> {
    if cand.model_id.trim().is_empty() {
        return Err("model_id is empty".into());
    }
    if cand.text.trim().is_empty() {
        return Err(format!(
            "candidate ({:?}, {:?}) has empty text",
            cand.cluster_id, cand.model_id
        ));
    }
    let cluster = clusters
        .iter()
        .find(|c| c.cluster_id == cand.cluster_id)
        .ok_or_else(|| format!("candidate references unknown cluster_id {:?}", cand.cluster_id))?;
    match cand.scope {
        Scope::Sds => {
            let doc_id = cand
                .doc_id
                .as_deref()
                .ok_or_else(|| format!("sds candidate for cluster {:?} is missing doc_id", cand.cluster_id))?;
            if !cluster.documents.iter().any(|d| d.doc_id == doc_id) {
                return Err(format!(
                    "candidate references unknown doc_id {:?} in cluster {:?}",
                    doc_id, cand.cluster_id
                ));
            }
        }
        Scope::Mds => {
            if cand.doc_id.is_some() {
                return Err(format!(
                    "mds candidate for cluster {:?} must not carry a doc_id",
                    cand.cluster_id
                ));
            }
        }
    }
    let key = (
        cand.cluster_id.clone(),
        cand.model_id.clone(),
        cand.scope,
        cand.doc_id.clone(),
    );
    if !seen.insert(key) {
        return Err(format!(
            "duplicate candidate ({:?}, {:?}, {}, {:?})",
            cand.cluster_id, cand.model_id, cand.scope, cand.doc_id
        ));
    }
    Ok(())
}

/// Loads and validates a clusters file, preserving file order.
pub fn load_clusters(path: &Path) -> Result<Vec<Cluster>, CorpusError> {
    let mut clusters = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in read_jsonl(path)? {
        let cluster: Cluster = serde_json::from_str(&raw).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        check_cluster(&cluster, &mut seen).map_err(|message| CorpusError::Invalid {
            path: path.display().to_string(),
            line,
            message,
        })?;
        clusters.push(cluster);
    }
    Ok(clusters)
}

/// Loads and validates a candidates file against already-loaded clusters.
pub fn load_candidates(
    path: &Path,
    clusters: &[Cluster],
) -> Result<Vec<CandidateSummary>, CorpusError> {
    let mut candidates = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in read_jsonl(path)? {
        let cand: CandidateSummary = serde_json::from_str(&raw).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        check_candidate(&cand, clusters, &mut seen).map_err(|message| CorpusError::Invalid {
            path: path.display().to_string(),
            line,
            message,
        })?;
        candidates.push(cand);
    }
    Ok(candidates)
}

/// Outcome of a lenient validation pass over both input files.
#[derive(Debug, Default)]
pub struct ValidationReport {
    pub cluster_count: usize,
    pub candidate_count: usize,
    /// One `file:line: message` entry per violation, in file order.
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Validates both files, collecting every problem instead of stopping at the
/// first.  Only unreadable files are hard errors.
pub fn validate_files(
    clusters_path: &Path,
    candidates_path: &Path,
) -> Result<ValidationReport, CorpusError> {
    let mut report = ValidationReport::default();
    let mut clusters = Vec::new();
    let mut seen_clusters = HashSet::new();
    let cpath = clusters_path.display().to_string();
    for (line, raw) in read_jsonl(clusters_path)? {
        match serde_json::from_str::<Cluster>(&raw) {
            Ok(cluster) => match check_cluster(&cluster, &mut seen_clusters) {
                Ok(()) => {
                    report.cluster_count += 1;
                    clusters.push(cluster);
                }
                Err(msg) => report.problems.push(format!("{cpath}:{line}: {msg}")),
            },
            Err(e) => report
                .problems
                .push(format!("{cpath}:{line}: parse error: {e}")),
        }
    }

    let mut seen_candidates = HashSet::new();
    let kpath = candidates_path.display().to_string();
    for (line, raw) in read_jsonl(candidates_path)? {
        match serde_json::from_str::<CandidateSummary>(&raw) {
            Ok(cand) => match check_candidate(&cand, &clusters, &mut seen_candidates) {
                Ok(()) => report.candidate_count += 1,
                Err(msg) => report.problems.push(format!("{kpath}:{line}: {msg}")),
            },
            Err(e) => report
                .problems
                .push(format!("{kpath}:{line}: parse error: {e}")),
        }
    }
    Ok(report)
}

/// Options for [`fetch_candidates`].
#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub timeout: Duration,
    /// Extra attempts after the first, on transport errors only.
    pub retries: u32,
}

impl Default for FetchOptions {
    fn default() -> FetchOptions {
        FetchOptions {
            timeout: Duration::from_secs(10),
            retries: 2,
        }
    }
}

#[derive(Serialize)]
struct FetchRequest<'a> {
    cluster_id: &'a str,
    model_id: &'a str,
    scope: Scope,
    documents: &'a [Document],
}

#[derive(Deserialize)]
struct FetchResponse {
    candidates: Vec<CandidateSummary>,
}

/// True for errors worth retrying (connection-level failures, timeouts).
fn is_transport_error(err: &ureq::Error) -> bool {
    matches!(
        err,
        ureq::Error::Io(_)
            | ureq::Error::Timeout(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound
    )
}

/// Requests candidate summaries for one cluster from an external summarizer
/// endpoint and validates the response like a candidates file.
///
/// An SDS request must yield exactly one candidate per cluster document
/// (returned in cluster document order); an MDS request exactly one
/// whole-cluster candidate.  Transport failures are retried up to
/// `options.retries` times; malformed responses are not.
pub fn fetch_candidates(
    endpoint: &str,
    cluster: &Cluster,
    model_id: &str,
    scope: Scope,
    options: &FetchOptions,
) -> Result<Vec<CandidateSummary>, CorpusError> {
    let config = ureq::Agent::config_builder()
        .timeout_global(Some(options.timeout))
        .build();
    let agent: ureq::Agent = config.into();
    let request = FetchRequest {
        cluster_id: &cluster.cluster_id,
        model_id,
        scope,
        documents: &cluster.documents,
    };

    let max_attempts = options.retries + 1;
    let mut attempt = 0;
    let response: FetchResponse = loop {
        attempt += 1;
        let outcome = agent
            .post(endpoint)
            .send_json(&request)
            .and_then(|mut resp| resp.body_mut().read_json::<FetchResponse>());
        match outcome {
            Ok(body) => break body,
            Err(err) if is_transport_error(&err) && attempt < max_attempts => {
                log::warn!(
                    "fetch attempt {attempt}/{max_attempts} for cluster {} failed: {err}; retrying",
                    cluster.cluster_id
                );
            }
            Err(err) if is_transport_error(&err) => {
                return Err(CorpusError::Transport {
                    endpoint: endpoint.to_string(),
                    attempts: attempt,
                    message: err.to_string(),
                });
            }
            Err(err) => {
                return Err(CorpusError::Protocol {
                    endpoint: endpoint.to_string(),
                    message: err.to_string(),
                });
            }
        }
    };

    let protocol_err = |message: String| CorpusError::Protocol {
        endpoint: endpoint.to_string(),
        message,
    };
    let clusters = std::slice::from_ref(cluster);
    let mut seen = HashSet::new();
    for cand in &response.candidates {
        if cand.cluster_id != cluster.cluster_id {
            return Err(protocol_err(format!(
                "candidate names cluster {:?}, requested {:?}",
                cand.cluster_id, cluster.cluster_id
            )));
        }
        if cand.model_id != model_id {
            return Err(protocol_err(format!(
                "candidate names model {:?}, requested {:?}",
                cand.model_id, model_id
            )));
        }
        if cand.scope != scope {
            return Err(protocol_err(format!(
                "candidate has scope {}, requested {}",
                cand.scope, scope
            )));
        }
        check_candidate(cand, clusters, &mut seen).map_err(protocol_err)?;
    }

    match scope {
        Scope::Mds => {
            if response.candidates.len() != 1 {
                return Err(protocol_err(format!(
                    "mds request must yield exactly 1 candidate, got {}",
                    response.candidates.len()
                )));
            }
            Ok(response.candidates)
        }
        Scope::Sds => {
            // Exactly one summary per document, reordered to document order.
            let mut by_doc = Vec::with_capacity(cluster.documents.len());
            for doc in &cluster.documents {
                let cand = response
                    .candidates
                    .iter()
                    .find(|c| c.doc_id.as_deref() == Some(doc.doc_id.as_str()))
                    .ok_or_else(|| {
                        protocol_err(format!("missing sds candidate for doc_id {:?}", doc.doc_id))
                    })?;
                by_doc.push(cand.clone());
            }
            if response.candidates.len() != cluster.documents.len() {
                return Err(protocol_err(format!(
                    "sds request over {} documents yielded {} candidates",
                    cluster.documents.len(),
                    response.candidates.len()
                )));
            }
            Ok(by_doc)
        }
    }
}

/// A cluster that failed during fusion, recorded in the run manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunError {
    pub cluster_id: String,
    pub message: String,
}

/// Aggregate ROUGE block of the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRouge {
    #[serde(flatten)]
    pub means: RougeTriple<f64>,
    /// Clusters with references, included in the means.
    pub evaluated: usize,
    /// Clusters without references, excluded from the means.
    pub skipped: usize,
}

/// Everything one fusion run produced.
///
/// Timestamps are kept in memory for operators but never serialized, so the
/// persisted artifacts stay byte-reproducible.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: FusionConfig,
    pub seed: u64,
    pub fused: Vec<FusedSummary>,
    pub scores: Vec<ClusterRouge<f64>>,
    pub aggregate: Option<AggregateRouge>,
    pub errors: Vec<RunError>,
    pub cluster_count: usize,
    pub started_at: Option<SystemTime>,
    pub finished_at: Option<SystemTime>,
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    clusters: usize,
    fused: usize,
    errors: Vec<RunError>,
    aggregate: Option<AggregateRouge>,
    config: FusionConfig,
    seed: u64,
}

/// Writes `fused.jsonl`, `scores.jsonl`, and `report.json` into `out_dir`.
///
/// Output bytes depend only on the record contents; writing the same record
/// twice produces identical files.
pub fn write_run(record: &RunRecord, out_dir: &Path) -> Result<(), CorpusError> {
    let write_err = |path: &Path, source: std::io::Error| CorpusError::Write {
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;

    let fused_path = out_dir.join("fused.jsonl");
    let mut fused_body = Vec::new();
    for summary in &record.fused {
        serde_json::to_writer(&mut fused_body, summary).expect("fused summary serializes");
        fused_body.push(b'\n');
    }
    fs::write(&fused_path, &fused_body).map_err(|e| write_err(&fused_path, e))?;

    let scores_path = out_dir.join("scores.jsonl");
    let mut scores_body = Vec::new();
    for score in &record.scores {
        serde_json::to_writer(&mut scores_body, score).expect("cluster score serializes");
        scores_body.push(b'\n');
    }
    fs::write(&scores_path, &scores_body).map_err(|e| write_err(&scores_path, e))?;

    let report = ReportFile {
        clusters: record.cluster_count,
        fused: record.fused.len(),
        errors: record.errors.clone(),
        aggregate: record.aggregate.clone(),
        config: record.config.clone(),
        seed: record.seed,
    };
    let report_path = out_dir.join("report.json");
    let mut report_body =
        serde_json::to_vec_pretty(&report).expect("report serializes");
    report_body.push(b'\n');
    fs::write(&report_path, &report_body).map_err(|e| write_err(&report_path, e))?;
    Ok(())
}

/// Reads a run directory back into a [`RunRecord`] (timestamps unset).
pub fn load_run(dir: &Path) -> Result<RunRecord, CorpusError> {
    let report_path = dir.join("report.json");
    let report_raw = fs::read_to_string(&report_path).map_err(|source| CorpusError::Read {
        path: report_path.display().to_string(),
        source,
    })?;
    let report: ReportFile = serde_json::from_str(&report_raw).map_err(|e| CorpusError::Parse {
        path: report_path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;

    let mut fused = Vec::new();
    let fused_path = dir.join("fused.jsonl");
    for (line, raw) in read_jsonl(&fused_path)? {
        let summary: FusedSummary = serde_json::from_str(&raw).map_err(|e| CorpusError::Parse {
            path: fused_path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        fused.push(summary);
    }

    let mut scores = Vec::new();
    let scores_path = dir.join("scores.jsonl");
    for (line, raw) in read_jsonl(&scores_path)? {
        let score: ClusterRouge<f64> =
            serde_json::from_str(&raw).map_err(|e| CorpusError::Parse {
                path: scores_path.display().to_string(),
                line,
                message: e.to_string(),
            })?;
        scores.push(score);
    }

    Ok(RunRecord {
        config: report.config,
        seed: report.seed,
        fused,
        scores,
        aggregate: report.aggregate,
        errors: report.errors,
        cluster_count: report.clusters,
        started_at: None,
        finished_at: None,
    })
}

/// Loads just the fused summaries from a `fused.jsonl` file.
pub fn load_fused(path: &Path) -> Result<Vec<FusedSummary>, CorpusError> {
    let mut fused = Vec::new();
    for (line, raw) in read_jsonl(path)? {
        let summary: FusedSummary = serde_json::from_str(&raw).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        fused.push(summary);
    }
    Ok(fused)
}

/// Writes clusters back out as JSONL (fixture tooling and tests).
pub fn write_clusters(clusters: &[Cluster], path: &Path) -> Result<(), CorpusError> {
    let mut body = Vec::new();
    for cluster in clusters {
        serde_json::to_writer(&mut body, cluster).expect("cluster serializes");
        body.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|source| CorpusError::Write {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&body).map_err(|source| CorpusError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Writes candidates back out as JSONL (fixture tooling and tests).
pub fn write_candidates(candidates: &[CandidateSummary], path: &Path) -> Result<(), CorpusError> {
    let mut body = Vec::new();
    for cand in candidates {
        serde_json::to_writer(&mut body, cand).expect("candidate serializes");
        body.push(b'\n');
    }
    fs::write(path, &body).map_err(|source| CorpusError::Write {
        path: path.display().to_string(),
        source,
    })
}
