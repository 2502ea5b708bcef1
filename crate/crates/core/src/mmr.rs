//! Maximal Marginal Relevance: greedy selection balancing query relevance
//! against redundancy with already-selected items, plus the MMR-based
//! sentence reduction procedure.
//!
//! The module is measure-agnostic: callers supply similarities through
//! [`PairSimilarity`], which also owns any caching.  Scores follow
//!
//! ```text
//! score(i) = λ·Sim1(i, Q) − (1−λ)·max_{j ∈ S} Sim2(i, j)
//! ```
//!
//! with the diversity term dropped while `S` is empty, so the first pick is
//! pure relevance.

use thiserror::Error;

use crate::scalar::Scalar;

/// Similarity provider for one selection run.
///
/// `relevance(i)` is Sim1 between candidate `i` and the query; `between`
/// is Sim2 between two candidates.  Implementations are expected to cache:
/// the selection loop asks for the same values repeatedly.
pub trait PairSimilarity<S: Scalar> {
    fn relevance(&mut self, candidate: usize) -> S;
    fn between(&mut self, a: usize, b: usize) -> S;
}

/// Errors from selection.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MmrError {
    #[error("cannot select {requested} items: only {available} candidate(s) available")]
    BudgetTooLarge { requested: usize, available: usize },
}

/// One greedy pick: the chosen candidate and its MMR score at selection time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmrStep<S: Scalar> {
    pub index: usize,
    pub score: S,
}

/// Result of a selection run.
///
/// `selected` is in greedy pick order.  `remaining` holds every candidate
/// that was not emitted — including preselected indices, which seed the
/// diversity set `S` but are never re-emitted — so the two lists partition
/// the input.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult<S: Scalar> {
    pub selected: Vec<MmrStep<S>>,
    pub remaining: Vec<usize>,
}

/// Greedily selects `m` of `n_candidates` candidates.
///
/// Ties in the argmax break toward the lowest candidate index.  Preselected
/// indices join `S` before the first pick.
pub fn mmr_select<S: Scalar>(
    n_candidates: usize,
    m: usize,
    lambda: S,
    preselected: &[usize],
    sims: &mut impl PairSimilarity<S>,
) -> Result<SelectionResult<S>, MmrError> {
    debug_assert!(m >= 1, "selection budget must be at least 1");
    debug_assert!(lambda >= S::zero() && lambda <= S::one(), "λ must lie in [0,1]");
    debug_assert!(
        preselected.iter().all(|&p| p < n_candidates),
        "preselected index out of range"
    );
    let available = n_candidates - preselected.len();
    if m > available {
        return Err(MmrError::BudgetTooLarge {
            requested: m,
            available,
        });
    }

    let mut in_s = vec![false; n_candidates];
    let mut emitted = vec![false; n_candidates];
    let mut s_members: Vec<usize> = preselected.to_vec();
    for &p in preselected {
        debug_assert!(!in_s[p], "preselected indices must be distinct");
        in_s[p] = true;
    }

    let one = S::one();
    let mut selected = Vec::with_capacity(m);
    for _ in 0..m {
        let mut best: Option<MmrStep<S>> = None;
        for i in 0..n_candidates {
            if in_s[i] {
                continue;
            }
            let rel = if lambda > S::zero() {
                lambda * sims.relevance(i)
            } else {
                S::zero()
            };
            let score = if lambda < one && !s_members.is_empty() {
                let mut max_div = S::neg_infinity();
                for &j in &s_members {
                    let d = sims.between(i, j);
                    if d > max_div {
                        max_div = d;
                    }
                }
                rel - (one - lambda) * max_div
            } else {
                rel
            };
            // Strict > keeps the lowest index on ties.
            if best.map_or(true, |b| score > b.score) {
                best = Some(MmrStep { index: i, score });
            }
        }
        let pick = best.expect("budget was validated against available candidates");
        in_s[pick.index] = true;
        emitted[pick.index] = true;
        s_members.push(pick.index);
        selected.push(pick);
    }

    let remaining = (0..n_candidates).filter(|&i| !emitted[i]).collect();
    Ok(SelectionResult {
        selected,
        remaining,
    })
}

/// Keep count for reducing a `d`-sentence summary by percentage `r_pct`:
/// `max(1, d − max(1, ceil(d·R)))`.
pub fn reduction_keep_count<S: Scalar>(d: usize, r_pct: S) -> usize {
    debug_assert!(r_pct > S::zero() && r_pct <= S::one(), "R must lie in (0,1]");
    let r = (S::from_count(d) * r_pct)
        .ceil()
        .to_usize()
        .unwrap_or(d)
        .max(1);
    d.saturating_sub(r).max(1)
}

/// Reduces `d` sentences by MMR, keeping `max(1, d − max(1, ceil(d·R)))`.
///
/// Returns the kept indices in ascending (original) order, preserving the
/// summary's readability rather than the MMR pick order.
pub fn mmr_reduce<S: Scalar>(
    d: usize,
    r_pct: S,
    lambda: S,
    sims: &mut impl PairSimilarity<S>,
) -> Result<Vec<usize>, MmrError> {
    debug_assert!(d >= 1, "cannot reduce an empty summary");
    let keep = reduction_keep_count(d, r_pct);
    if keep >= d {
        return Ok((0..d).collect());
    }
    let result = mmr_select(d, keep, lambda, &[], sims)?;
    let mut kept: Vec<usize> = result.selected.iter().map(|s| s.index).collect();
    kept.sort_unstable();
    Ok(kept)
}
