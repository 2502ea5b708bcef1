//! ROUGE-1, ROUGE-2, and ROUGE-L precision/recall/F-measure, plus
//! corpus-level aggregation.
//!
//! Tokenization is fixed (lowercase, punctuation stripped, no stemming, no
//! stopword removal) regardless of how pipeline similarity is configured, so
//! evaluation stays stable while parameters are tuned.  ROUGE-L uses the
//! summary-level form: union-LCS per reference sentence with hit counts
//! clipped against remaining token counts on both sides.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Cluster;
use crate::pipeline::FusedSummary;
use crate::scalar::Scalar;
use crate::textproc::{split_sentences, tokenize, TokenList};

/// Errors from evaluation.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RougeError {
    #[error("reference summary is empty")]
    EmptyReference,
    #[error("fused summary references unknown cluster {cluster_id:?}")]
    UnknownCluster { cluster_id: String },
    #[error("no cluster has a reference summary; nothing to evaluate")]
    NoEvaluableClusters,
}

/// A precision/recall/F1 triple, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore<S: Scalar> {
    pub precision: S,
    pub recall: S,
    pub f1: S,
}

impl<S: Scalar> RougeScore<S> {
    fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> RougeScore<S> {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                S::zero()
            } else {
                S::from_count(num) / S::from_count(den)
            }
        };
        let precision = ratio(overlap, candidate_total);
        let recall = ratio(overlap, reference_total);
        RougeScore {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }

    fn zero() -> RougeScore<S> {
        RougeScore {
            precision: S::zero(),
            recall: S::zero(),
            f1: S::zero(),
        }
    }
}

fn harmonic_mean<S: Scalar>(p: S, r: S) -> S {
    if p + r > S::zero() {
        S::from_count(2) * p * r / (p + r)
    } else {
        S::zero()
    }
}

/// The fixed evaluation tokenization.
fn rouge_tokens(text: &str) -> TokenList {
    tokenize(text, true, true)
}

/// Boundary marker appended for n ≥ 2 gram counting.  Tokenization strips
/// non-alphanumeric edges, so no real token can collide with it.
const BOUNDARY: &str = "\u{0}";

/// ROUGE-N via clipped n-gram multiset overlap.
///
/// For n ≥ 2 both texts contribute a terminal boundary gram (grams are taken
/// over the tokens plus an end-of-text marker), so each text with L ≥ n
/// tokens yields L − n + 2 grams and identical texts still score exactly 1.
/// E.g. "the cat sat" vs "the cat ran" at n=2: only "the cat" of each
/// side's three grams matches, giving P = R = F = 1/3.
pub fn rouge_n<S: Scalar>(
    candidate: &str,
    reference: &str,
    n: usize,
) -> Result<RougeScore<S>, RougeError> {
    debug_assert!(n >= 1, "gram size must be at least 1");
    if reference.trim().is_empty() {
        return Err(RougeError::EmptyReference);
    }
    let mut cand = rouge_tokens(candidate);
    let mut reference = rouge_tokens(reference);
    if cand.len() < n || reference.len() < n {
        return Ok(RougeScore::zero());
    }
    if n >= 2 {
        cand.0.push(BOUNDARY.to_string());
        reference.0.push(BOUNDARY.to_string());
    }

    fn grams(tokens: &[String], n: usize) -> HashMap<Vec<&str>, usize> {
        let mut counts: HashMap<Vec<&str>, usize> = HashMap::new();
        for window in tokens.windows(n) {
            let gram: Vec<&str> = window.iter().map(String::as_str).collect();
            *counts.entry(gram).or_insert(0) += 1;
        }
        counts
    }
    let cand_grams = grams(&cand, n);
    let ref_grams = grams(&reference, n);
    let overlap: usize = cand_grams
        .iter()
        .map(|(gram, &count)| count.min(*ref_grams.get(gram).unwrap_or(&0)))
        .sum();
    let cand_total = cand.len() - n + 1;
    let ref_total = reference.len() - n + 1;
    Ok(RougeScore::from_counts(overlap, cand_total, ref_total))
}

/// LCS dynamic program returning the matched positions in `a`.
fn lcs_match_positions(a: &[String], b: &[String]) -> Vec<usize> {
    let (la, lb) = (a.len(), b.len());
    let mut dp = vec![vec![0usize; lb + 1]; la + 1];
    for i in 1..=la {
        for j in 1..=lb {
            dp[i][j] = if a[i - 1] == b[j - 1] {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }
    let mut positions = Vec::with_capacity(dp[la][lb]);
    let (mut i, mut j) = (la, lb);
    while i > 0 && j > 0 {
        if a[i - 1] == b[j - 1] {
            positions.push(i - 1);
            i -= 1;
            j -= 1;
        } else if dp[i - 1][j] >= dp[i][j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    positions.reverse();
    positions
}

/// Summary-level ROUGE-L.
///
/// For each reference sentence, the LCS match positions against every
/// candidate sentence are unioned; the unioned tokens then score hits clipped
/// by each token's remaining count in both texts, which keeps precision and
/// recall inside `[0, 1]` even when candidate text is reused across
/// reference sentences.
pub fn rouge_l<S: Scalar>(candidate: &str, reference: &str) -> Result<RougeScore<S>, RougeError> {
    if reference.trim().is_empty() {
        return Err(RougeError::EmptyReference);
    }
    let ref_sentences: Vec<TokenList> = split_sentences(reference)
        .iter()
        .map(|s| rouge_tokens(&s.text))
        .collect();
    let cand_sentences: Vec<TokenList> = split_sentences(candidate)
        .iter()
        .map(|s| rouge_tokens(&s.text))
        .collect();
    let m: usize = ref_sentences.iter().map(|t| t.len()).sum();
    let n: usize = cand_sentences.iter().map(|t| t.len()).sum();
    if m == 0 || n == 0 {
        return Ok(RougeScore::zero());
    }

    let mut ref_budget: HashMap<&str, usize> = HashMap::new();
    for token in ref_sentences.iter().flat_map(|t| t.iter()) {
        *ref_budget.entry(token).or_insert(0) += 1;
    }
    let mut cand_budget: HashMap<&str, usize> = HashMap::new();
    for token in cand_sentences.iter().flat_map(|t| t.iter()) {
        *cand_budget.entry(token).or_insert(0) += 1;
    }

    let mut hits = 0usize;
    for ref_sentence in &ref_sentences {
        let mut matched = vec![false; ref_sentence.len()];
        for cand_sentence in &cand_sentences {
            for pos in lcs_match_positions(ref_sentence, cand_sentence) {
                matched[pos] = true;
            }
        }
        for (pos, hit) in matched.iter().enumerate() {
            if !hit {
                continue;
            }
            let token = ref_sentence[pos].as_str();
            let r = ref_budget.get_mut(token).expect("token counted above");
            let c = cand_budget.entry(token).or_insert(0);
            if *r > 0 && *c > 0 {
                *r -= 1;
                *c -= 1;
                hits += 1;
            }
        }
    }
    Ok(RougeScore::from_counts(hits, n, m))
}

/// Per-cluster R1/R2/RL block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple<S: Scalar> {
    pub rouge1: RougeScore<S>,
    pub rouge2: RougeScore<S>,
    pub rouge_l: RougeScore<S>,
}

/// One evaluated cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRouge<S: Scalar> {
    pub cluster_id: String,
    #[serde(flatten)]
    pub scores: RougeTriple<S>,
}

/// Corpus-level evaluation: per-cluster scores plus arithmetic means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RougeReport<S: Scalar> {
    pub per_cluster: Vec<ClusterRouge<S>>,
    pub means: RougeTriple<S>,
    /// Clusters included in the means.
    pub evaluated: usize,
    /// Clusters skipped for lacking a reference summary.
    pub skipped: usize,
}

/// Scores one candidate text against one reference.
pub fn score_pair<S: Scalar>(candidate: &str, reference: &str) -> Result<RougeTriple<S>, RougeError> {
    Ok(RougeTriple {
        rouge1: rouge_n(candidate, reference, 1)?,
        rouge2: rouge_n(candidate, reference, 2)?,
        rouge_l: rouge_l(candidate, reference)?,
    })
}

/// Evaluates fused summaries against their clusters' reference summaries.
///
/// Clusters without references are skipped with a warning and excluded from
/// the means; evaluation fails only when nothing is evaluable.
pub fn evaluate_corpus(
    fused: &[FusedSummary],
    clusters: &[Cluster],
) -> Result<RougeReport<f64>, RougeError> {
    let references: HashMap<&str, Option<&str>> = clusters
        .iter()
        .map(|c| (c.cluster_id.as_str(), c.reference_summary.as_deref()))
        .collect();

    let mut per_cluster = Vec::new();
    let mut skipped = 0usize;
    for summary in fused {
        let reference = references
            .get(summary.cluster_id.as_str())
            .ok_or_else(|| RougeError::UnknownCluster {
                cluster_id: summary.cluster_id.clone(),
            })?;
        match reference {
            Some(reference) => per_cluster.push(ClusterRouge {
                cluster_id: summary.cluster_id.clone(),
                scores: score_pair(&summary.text, reference)?,
            }),
            None => {
                log::warn!(
                    "cluster {} has no reference summary; skipping evaluation",
                    summary.cluster_id
                );
                skipped += 1;
            }
        }
    }
    if per_cluster.is_empty() {
        return Err(RougeError::NoEvaluableClusters);
    }

    let evaluated = per_cluster.len();
    let mean = |pick: &dyn Fn(&RougeTriple<f64>) -> RougeScore<f64>| {
        let count = evaluated as f64;
        let mut sum = RougeScore::<f64>::zero();
        for entry in &per_cluster {
            let s = pick(&entry.scores);
            sum.precision += s.precision;
            sum.recall += s.recall;
            sum.f1 += s.f1;
        }
        RougeScore {
            precision: sum.precision / count,
            recall: sum.recall / count,
            f1: sum.f1 / count,
        }
    };
    let means = RougeTriple {
        rouge1: mean(&|t| t.rouge1),
        rouge2: mean(&|t| t.rouge2),
        rouge_l: mean(&|t| t.rouge_l),
    };
    Ok(RougeReport {
        per_cluster,
        means,
        evaluated,
        skipped,
    })
}
