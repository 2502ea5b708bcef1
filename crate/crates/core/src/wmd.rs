//! Word Mover's Distance between token lists over word embeddings.
//!
//! Documents become normalized bag-of-words distributions (nBOW) over their
//! in-vocabulary words; the distance is the optimal-transport cost between
//! the two distributions under Euclidean ground distance.  Small instances
//! (support ≤ 64 per side) are solved exactly with the transportation
//! simplex; larger ones fall back to the relaxed lower bound (max of the two
//! one-sided nearest-neighbor relaxations).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::textproc::TokenList;
use crate::vectors::WordVectors;

/// Largest per-side support solved exactly; beyond this the relaxed bound is
/// used regardless of the requested mode.
pub const MAX_EXACT_SUPPORT: usize = 64;

/// Solver selection for [`wmd_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WmdMode {
    /// Transportation-simplex optimum (forced to relaxed above
    /// [`MAX_EXACT_SUPPORT`]).
    Exact,
    /// Max of the two one-sided relaxed lower bounds.
    Relaxed,
}

/// Errors from the WMD measure.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WmdError {
    /// One side has no in-vocabulary words, so no distribution exists.
    #[error("word mover's distance is undefined: a side has no in-vocabulary words")]
    Undefined,
}

/// Normalized bag-of-words distribution over in-vocabulary words.
///
/// Support words are ordered lexicographically, so the distribution — and
/// every computation over it — is independent of token order.
#[derive(Debug, Clone)]
pub struct NbowDistribution<S: Scalar> {
    vectors: Vec<Vec<S>>,
    masses: Vec<S>,
}

impl<S: Scalar> NbowDistribution<S> {
    /// Builds the distribution for `tokens`, or `None` when no token is in
    /// the vocabulary.
    pub fn from_tokens(tokens: &TokenList, wv: &WordVectors<S>) -> Option<NbowDistribution<S>> {
        let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
        for token in tokens.iter() {
            if wv.get(token).is_some() {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        if counts.is_empty() {
            return None;
        }
        let total = S::from_count(counts.values().sum());
        let mut vectors = Vec::with_capacity(counts.len());
        let mut masses = Vec::with_capacity(counts.len());
        for (word, count) in counts {
            vectors.push(wv.get(word).expect("counted word is in vocabulary").to_vec());
            masses.push(S::from_count(count) / total);
        }
        Some(NbowDistribution { vectors, masses })
    }

    pub fn support(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[S] {
        &self.masses
    }
}

fn euclidean<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum::<S>()
        .sqrt()
}

/// Ground-distance matrix between two supports, row-major `a × b`.
fn cost_matrix<S: Scalar>(a: &NbowDistribution<S>, b: &NbowDistribution<S>) -> Vec<S> {
    let mut cost = Vec::with_capacity(a.support() * b.support());
    for va in &a.vectors {
        for vb in &b.vectors {
            cost.push(euclidean(va, vb));
        }
    }
    cost
}

/// One-sided relaxed lower bound: every source mass moves wholly to its
/// nearest target.  `max` of both directions is the relaxed WMD.
fn relaxed_bound<S: Scalar>(supply: &[S], cost: &[S], rows: usize, cols: usize) -> S {
    let mut bound = S::zero();
    for i in 0..rows {
        let mut best = S::infinity();
        for j in 0..cols {
            let c = cost[i * cols + j];
            if c < best {
                best = c;
            }
        }
        bound += supply[i] * best;
    }
    bound
}

/// Exact optimal-transport cost via the transportation simplex.
///
/// Determinism: northwest-corner start, Bland's entering rule (first cell in
/// row-major order with negative reduced cost), first-encountered leaving
/// cell on ties.  Degenerate (zero-flow) basis cells are kept, so the basis
/// is always a spanning tree of the bipartite support graph.
fn transport_simplex<S: Scalar>(supply: &[S], demand: &[S], cost: &[S]) -> S {
    let m = supply.len();
    let n = demand.len();
    debug_assert_eq!(cost.len(), m * n);
    let max_cost = cost.iter().copied().fold(S::zero(), S::max);
    let tol = S::epsilon() * S::from_count(100) * (S::one() + max_cost);

    // Northwest-corner initial basis: exactly m + n − 1 cells.
    let mut a = supply.to_vec();
    let mut b = demand.to_vec();
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut flow: Vec<S> = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let f = a[i].min(b[j]);
        basis.push((i, j));
        flow.push(f);
        a[i] -= f;
        b[j] -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 {
            i += 1;
        } else if i == m - 1 {
            j += 1;
        } else if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let mut in_basis = vec![false; m * n];
    for &(r, c) in &basis {
        in_basis[r * n + c] = true;
    }

    // Node ids: rows are 0..m, columns are m..m+n.  Bland's rule terminates
    // on its own; the cap only guards against float pathologies.
    let max_pivots = 100 * (m + n) + 5000;
    for pivot in 0.. {
        if pivot >= max_pivots {
            log::error!("transportation simplex hit the pivot cap; returning current basis cost");
            break;
        }

        // Dual potentials from the basis tree: u[i] + v[j] = c[i][j].
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + n];
        for (cell, &(r, c)) in basis.iter().enumerate() {
            adjacency[r].push((m + c, cell));
            adjacency[m + c].push((r, cell));
        }
        let mut potential = vec![None::<S>; m + n];
        potential[0] = Some(S::zero());
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            let p = potential[node].expect("visited nodes have potentials");
            for &(next, cell) in &adjacency[node] {
                if potential[next].is_none() {
                    let (r, c) = basis[cell];
                    potential[next] = Some(cost[r * n + c] - p);
                    stack.push(next);
                }
            }
        }

        // Bland's rule: first improving cell in row-major order.
        let mut entering = None;
        'scan: for r in 0..m {
            let u = potential[r].expect("basis tree spans all rows");
            for c in 0..n {
                if in_basis[r * n + c] {
                    continue;
                }
                let v = potential[m + c].expect("basis tree spans all columns");
                if cost[r * n + c] - u - v < -tol {
                    entering = Some((r, c));
                    break 'scan;
                }
            }
        }
        let Some((er, ec)) = entering else {
            break; // optimal
        };

        // Unique tree path from row `er` to column `ec`.
        let target = m + ec;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
        let mut queue = std::collections::VecDeque::from([er]);
        let mut seen = vec![false; m + n];
        seen[er] = true;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, cell) in &adjacency[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, cell));
                    queue.push_back(next);
                }
            }
        }
        let mut path_cells = Vec::new();
        let mut node = target;
        while let Some((prev, cell)) = parent[node] {
            path_cells.push(cell);
            node = prev;
        }
        path_cells.reverse();

        // Alternate signs around the cycle: entering is +, then −, +, − …
        // along the path; even path positions are the − edges.
        let mut theta = S::infinity();
        let mut leaving = usize::MAX;
        for (pos, &cell) in path_cells.iter().enumerate() {
            if pos % 2 == 0 && flow[cell] < theta {
                theta = flow[cell];
                leaving = cell;
            }
        }
        for (pos, &cell) in path_cells.iter().enumerate() {
            if pos % 2 == 0 {
                flow[cell] -= theta;
            } else {
                flow[cell] += theta;
            }
        }
        let (lr, lc) = basis[leaving];
        in_basis[lr * n + lc] = false;
        in_basis[er * n + ec] = true;
        basis[leaving] = (er, ec);
        flow[leaving] = theta;
    }

    basis
        .iter()
        .zip(flow.iter())
        .map(|(&(r, c), &f)| f.max(S::zero()) * cost[r * n + c])
        .sum()
}

/// Distance between two prebuilt distributions.  Exact mode silently falls
/// back to the relaxed bound above [`MAX_EXACT_SUPPORT`].
pub fn nbow_distance<S: Scalar>(
    a: &NbowDistribution<S>,
    b: &NbowDistribution<S>,
    mode: WmdMode,
) -> S {
    let cost = cost_matrix(a, b);
    let exact_feasible = a.support() <= MAX_EXACT_SUPPORT && b.support() <= MAX_EXACT_SUPPORT;
    match mode {
        WmdMode::Exact if exact_feasible => {
            transport_simplex(&a.masses, &b.masses, &cost)
        }
        WmdMode::Exact => {
            log::debug!(
                "wmd supports {}×{} exceed {}; using relaxed bound",
                a.support(),
                b.support(),
                MAX_EXACT_SUPPORT
            );
            relaxed(a, b, &cost)
        }
        WmdMode::Relaxed => relaxed(a, b, &cost),
    }
}

fn relaxed<S: Scalar>(a: &NbowDistribution<S>, b: &NbowDistribution<S>, cost: &[S]) -> S {
    let rows = a.support();
    let cols = b.support();
    let forward = relaxed_bound(&a.masses, cost, rows, cols);
    let mut transposed = Vec::with_capacity(cost.len());
    for c in 0..cols {
        for r in 0..rows {
            transposed.push(cost[r * cols + c]);
        }
    }
    let backward = relaxed_bound(&b.masses, &transposed, cols, rows);
    forward.max(backward)
}

/// Word Mover's Distance between two token lists.
pub fn wmd_distance<S: Scalar>(
    a: &TokenList,
    b: &TokenList,
    wv: &WordVectors<S>,
    mode: WmdMode,
) -> Result<S, WmdError> {
    let na = NbowDistribution::from_tokens(a, wv).ok_or(WmdError::Undefined)?;
    let nb = NbowDistribution::from_tokens(b, wv).ok_or(WmdError::Undefined)?;
    Ok(nbow_distance(&na, &nb, mode))
}

/// WMD as a similarity: `1 / (1 + distance)`, with undefined pairs mapping
/// to 0 (one bad sentence must not kill a cluster run).
pub fn wmd_similarity<S: Scalar>(
    a: &TokenList,
    b: &TokenList,
    wv: &WordVectors<S>,
    mode: WmdMode,
) -> S {
    match wmd_distance(a, b, wv, mode) {
        Ok(d) => S::one() / (S::one() + d),
        Err(WmdError::Undefined) => {
            log::debug!("wmd undefined for a sentence pair; substituting similarity 0");
            S::zero()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wv(entries: &[(&str, &[f64])]) -> WordVectors<f64> {
        let mut wv = WordVectors::new(entries[0].1.len());
        for (word, vector) in entries {
            wv.insert(word.to_string(), vector.to_vec());
        }
        wv
    }

    fn tokens(words: &[&str]) -> TokenList {
        TokenList::from(words.to_vec())
    }

    #[test]
    fn identical_docs_have_zero_distance() {
        let wv = wv(&[("a", &[0.0, 1.0]), ("b", &[3.0, 4.0]), ("c", &[-1.0, 2.0])]);
        let doc = tokens(&["a", "b", "c", "b"]);
        let shuffled = tokens(&["b", "c", "b", "a"]);
        assert_eq!(wmd_distance(&doc, &doc, &wv, WmdMode::Exact).unwrap(), 0.0);
        assert_eq!(wmd_distance(&doc, &shuffled, &wv, WmdMode::Exact).unwrap(), 0.0);
    }

    #[test]
    fn single_word_distance_is_the_ground_distance() {
        let wv = wv(&[("a", &[0.0, 0.0]), ("b", &[1.5, 2.0])]);
        let d_exact = wmd_distance(&tokens(&["a"]), &tokens(&["b"]), &wv, WmdMode::Exact).unwrap();
        let d_relaxed =
            wmd_distance(&tokens(&["a"]), &tokens(&["b"]), &wv, WmdMode::Relaxed).unwrap();
        assert!((d_exact - 2.5).abs() < 1e-12);
        assert!((d_relaxed - 2.5).abs() < 1e-12);
    }

    #[test]
    fn similarity_transform_and_undefined_fallback() {
        let wv = wv(&[("a", &[0.0, 0.0]), ("b", &[1.5, 2.0])]);
        let s = wmd_similarity(&tokens(&["a"]), &tokens(&["b"]), &wv, WmdMode::Exact);
        assert!((s - 1.0 / 3.5).abs() < 1e-12);
        let same = wmd_similarity(&tokens(&["a"]), &tokens(&["a"]), &wv, WmdMode::Exact);
        assert_eq!(same, 1.0);
        let undef = wmd_similarity(&tokens(&["zzz"]), &tokens(&["a"]), &wv, WmdMode::Exact);
        assert_eq!(undef, 0.0);
        assert_eq!(
            wmd_distance(&tokens(&["zzz"]), &tokens(&["a"]), &wv, WmdMode::Exact),
            Err(WmdError::Undefined)
        );
    }

    /// Brute-force transport optimum: enumerate every basis (spanning tree of
    /// the bipartite support graph), solve it by leaf elimination, and take
    /// the cheapest feasible one.  Exercises all polytope vertices.
    pub(crate) fn brute_force_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> f64 {
        let m = supply.len();
        let n = demand.len();
        let cells: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .collect();
        let size = m + n - 1;
        let mut best = f64::INFINITY;
        let mut chosen = vec![0usize; size];

        fn solve(tree: &[(usize, usize)], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
            let m = supply.len();
            let n = demand.len();
            let mut degree = vec![0usize; m + n];
            for &(i, j) in tree {
                degree[i] += 1;
                degree[m + j] += 1;
            }
            if degree.iter().any(|&d| d == 0) {
                return None; // not spanning
            }
            let mut residual: Vec<f64> = supply.iter().chain(demand.iter()).copied().collect();
            let mut flows = vec![f64::NAN; tree.len()];
            let mut used = vec![false; tree.len()];
            for _ in 0..tree.len() {
                let leaf = (0..m + n).find(|&v| degree[v] == 1)?;
                let (e, &(i, j)) = tree
                    .iter()
                    .enumerate()
                    .find(|&(e, &(i, j))| !used[e] && (i == leaf || m + j == leaf))
                    .expect("leaf has an unused edge");
                let f = residual[leaf];
                flows[e] = f;
                used[e] = true;
                degree[leaf] -= 1;
                let other = if i == leaf { m + j } else { i };
                degree[other] -= 1;
                residual[other] -= f;
                residual[leaf] = 0.0;
            }
            Some(flows)
        }

        fn recurse(
            cells: &[(usize, usize)],
            start: usize,
            chosen: &mut Vec<usize>,
            depth: usize,
            size: usize,
            supply: &[f64],
            demand: &[f64],
            cost: &[f64],
            best: &mut f64,
        ) {
            if depth == size {
                let tree: Vec<(usize, usize)> = chosen.iter().map(|&k| cells[k]).collect();
                if let Some(flows) = solve(&tree, supply, demand) {
                    if flows.iter().all(|&f| f >= -1e-9) {
                        let n = demand.len();
                        let c: f64 = tree
                            .iter()
                            .zip(&flows)
                            .map(|(&(i, j), &f)| f.max(0.0) * cost[i * n + j])
                            .sum();
                        if c < *best {
                            *best = c;
                        }
                    }
                }
                return;
            }
            for k in start..cells.len() {
                chosen[depth] = k;
                recurse(cells, k + 1, chosen, depth + 1, size, supply, demand, cost, best);
            }
        }

        recurse(&cells, 0, &mut chosen, 0, size, supply, demand, cost, &mut best);
        best
    }

    fn random_instance(rng: &mut ChaCha8Rng, max_support: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = rng.random_range(1..=max_support);
        let n = rng.random_range(1..=max_support);
        let normalize = |v: &mut Vec<f64>| {
            let total: f64 = v.iter().sum();
            for x in v.iter_mut() {
                *x /= total;
            }
        };
        let mut supply: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let mut demand: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        normalize(&mut supply);
        normalize(&mut demand);
        let cost: Vec<f64> = (0..m * n).map(|_| rng.random_range(0.0..5.0)).collect();
        (supply, demand, cost)
    }

    #[test]
    fn simplex_matches_brute_force_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..100 {
            let (supply, demand, cost) = random_instance(&mut rng, 4);
            let simplex = transport_simplex(&supply, &demand, &cost);
            let brute = brute_force_transport(&supply, &demand, &cost);
            assert!(
                (simplex - brute).abs() < 1e-9,
                "case {case}: simplex {simplex} vs brute force {brute}"
            );
        }
    }

    #[test]
    fn exact_mode_is_symmetric_and_dominates_relaxed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let dim = 3;
            let vocab_size = rng.random_range(2..6);
            let mut table = WordVectors::new(dim);
            for w in 0..vocab_size {
                let vector: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                table.insert(format!("w{w}"), vector);
            }
            let draw = |rng: &mut ChaCha8Rng| {
                let len = rng.random_range(1..8);
                TokenList(
                    (0..len)
                        .map(|_| format!("w{}", rng.random_range(0..vocab_size)))
                        .collect(),
                )
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let ab = wmd_distance(&a, &b, &table, WmdMode::Exact).unwrap();
            let ba = wmd_distance(&b, &a, &table, WmdMode::Exact).unwrap();
            let relaxed = wmd_distance(&a, &b, &table, WmdMode::Relaxed).unwrap();
            assert!((ab - ba).abs() <= 1e-9, "case {case}: asymmetry {ab} vs {ba}");
            assert!(
                relaxed <= ab + 1e-9,
                "case {case}: relaxed {relaxed} above exact {ab}"
            );
        }
    }

    #[test]
    fn oversized_supports_fall_back_to_relaxed() {
        let dim = 2;
        let mut table = WordVectors::new(dim);
        let size = MAX_EXACT_SUPPORT + 5;
        for w in 0..size {
            table.insert(format!("w{w}"), vec![w as f64, 1.0]);
        }
        let a = TokenList((0..size).map(|w| format!("w{w}")).collect());
        let b = TokenList((0..3).map(|w| format!("w{w}")).collect());
        let exact = wmd_distance(&a, &b, &table, WmdMode::Exact).unwrap();
        let relaxed = wmd_distance(&a, &b, &table, WmdMode::Relaxed).unwrap();
        assert_eq!(exact, relaxed);
    }
}
