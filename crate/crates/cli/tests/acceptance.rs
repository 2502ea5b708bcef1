//! Release gates for the fusion engine, one test per gate so the harness
//! prints one pass/fail line each.
//!
//! Every numeric claim is checked against something computed independently
//! in this file — a stepwise argmax walk, subset-enumeration LCS, polytope
//! vertex enumeration, hand counts — or against frozen fixture bytes.  None
//! of the oracles call back into the code paths they judge.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};
use std::{fs, str};

use mmrfuse_core::corpus::{
    load_fused, write_candidates, write_clusters, CandidateSummary, Cluster, Document, Scope,
};
use mmrfuse_core::lda::{fit_lda, top_words};
use mmrfuse_core::mmr::{mmr_reduce, mmr_select, PairSimilarity};
use mmrfuse_core::pipeline::{fuse_cluster, fuse_corpus, FusionConfig, FusionMode, RunResources};
use mmrfuse_core::rouge::{rouge_l, score_pair};
use mmrfuse_core::textproc::TokenList;
use mmrfuse_core::tuner::{random_search, ContinuousRange, Evaluation, SearchSpace};
use mmrfuse_core::vectors::{cosine, WordVectors};
use mmrfuse_core::wmd::{wmd_distance, WmdMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Plain cosine similarities over dense vectors, computed on demand.
struct CosineSims {
    vectors: Vec<Vec<f64>>,
    query: Vec<f64>,
}

impl PairSimilarity<f64> for CosineSims {
    fn relevance(&mut self, candidate: usize) -> f64 {
        cosine(&self.vectors[candidate], &self.query)
    }

    fn between(&mut self, a: usize, b: usize) -> f64 {
        cosine(&self.vectors[a], &self.vectors[b])
    }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(0.1..2.0)).collect()
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| random_vector(rng, dim)).collect()
}

fn doc(doc_id: &str, text: &str) -> Document {
    Document {
        doc_id: doc_id.to_string(),
        text: text.to_string(),
    }
}

fn mds(cluster_id: &str, model_id: &str, text: &str) -> CandidateSummary {
    CandidateSummary {
        cluster_id: cluster_id.to_string(),
        model_id: model_id.to_string(),
        scope: Scope::Mds,
        doc_id: None,
        text: text.to_string(),
        pretrained_on_dataset: false,
    }
}

fn sds(cluster_id: &str, model_id: &str, doc_id: &str, text: &str) -> CandidateSummary {
    CandidateSummary {
        cluster_id: cluster_id.to_string(),
        model_id: model_id.to_string(),
        scope: Scope::Sds,
        doc_id: Some(doc_id.to_string()),
        text: text.to_string(),
        pretrained_on_dataset: false,
    }
}

/// A config with the numeric kernels dialed down far enough for tight test
/// loops while leaving every behavior intact.
fn fast_config(best_model_id: &str, mode: FusionMode) -> FusionConfig {
    let mut config = FusionConfig::with_best_model(best_model_id, mode);
    config.lda_topics = 2;
    config.lda_words_per_topic = 2;
    config.lda_alpha = Some(1.0);
    config.lda_iterations = 40;
    config.embed_dimension = 8;
    config.embed_epochs = 4;
    config.embed_negatives = 2;
    config
}

fn fixture(relative: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(relative)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmrfuse"))
}

fn assert_success(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed with {:?}\nstderr:\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr),
    );
}

/// The machine-readable result is the last line of standard output.
fn stdout_json(output: &Output) -> Value {
    let text = str::from_utf8(&output.stdout).expect("stdout is UTF-8");
    let line = text.lines().last().expect("stdout carries a result line");
    serde_json::from_str(line).expect("stdout line parses as JSON")
}

// ---------------------------------------------------------------------------
// 1. Greedy selection against a stepwise argmax oracle
// ---------------------------------------------------------------------------

/// Walks the selection by brute force: at every step, score each candidate
/// outside S as λ·sim1(i, q) − (1 − λ)·max_{j∈S} sim2(i, j) — plain λ·sim1
/// while S is empty — and take the argmax, lowest index on ties.
/// Preselected indices seed S and are never emitted.
fn oracle_select(
    vectors: &[Vec<f64>],
    query: &[f64],
    lambda: f64,
    preselected: &[usize],
    m: usize,
) -> Vec<usize> {
    let n = vectors.len();
    let mut in_s = vec![false; n];
    let mut s: Vec<usize> = preselected.to_vec();
    for &p in preselected {
        in_s[p] = true;
    }
    let mut picks = Vec::with_capacity(m);
    for _ in 0..m {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if in_s[i] {
                continue;
            }
            let rel = lambda * cosine(&vectors[i], query);
            let score = if s.is_empty() {
                rel
            } else {
                let max_div = s
                    .iter()
                    .map(|&j| cosine(&vectors[i], &vectors[j]))
                    .fold(f64::NEG_INFINITY, f64::max);
                rel - (1.0 - lambda) * max_div
            };
            if best.map_or(true, |(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let (index, _) = best.expect("oracle always has a candidate left");
        in_s[index] = true;
        s.push(index);
        picks.push(index);
    }
    picks
}

#[test]
fn c01_selection_matches_the_stepwise_argmax_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..100 {
        let n = rng.random_range(1..=8);
        let vectors = random_vectors(&mut rng, n, 4);
        let query = random_vector(&mut rng, 4);
        let lambda: f64 = rng.random();

        let mut preselected = Vec::new();
        if n >= 3 && rng.random_bool(0.4) {
            preselected.push(rng.random_range(0..n));
            let second = rng.random_range(0..n);
            if second != preselected[0] {
                preselected.push(second);
            }
        }
        let available = n - preselected.len();
        let m = rng.random_range(1..=available.min(4));

        let mut sims = CosineSims {
            vectors: vectors.clone(),
            query: query.clone(),
        };
        let result =
            mmr_select(n, m, lambda, &preselected, &mut sims).expect("budget is feasible");
        let picked: Vec<usize> = result.selected.iter().map(|s| s.index).collect();
        let expected = oracle_select(&vectors, &query, lambda, &preselected, m);
        assert_eq!(
            picked, expected,
            "case {case}: selection order diverged from the oracle (λ={lambda}, n={n}, m={m})"
        );
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(5),
        "100 oracle comparisons took {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 2. λ endpoints collapse to their closed forms
// ---------------------------------------------------------------------------

#[test]
fn c02_lambda_endpoints_match_their_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..50 {
        let n = rng.random_range(2..=8);
        let vectors = random_vectors(&mut rng, n, 3);
        let query = random_vector(&mut rng, 3);
        let mut sims = CosineSims {
            vectors: vectors.clone(),
            query: query.clone(),
        };

        // λ = 1: selecting everything must reproduce the descending
        // relevance order, earliest index first on ties.
        let result = mmr_select(n, n, 1.0, &[], &mut sims).expect("full budget fits");
        let picked: Vec<usize> = result.selected.iter().map(|s| s.index).collect();
        let mut by_relevance: Vec<usize> = (0..n).collect();
        by_relevance.sort_by(|&a, &b| {
            let sa = cosine(&vectors[a], &query);
            let sb = cosine(&vectors[b], &query);
            sb.partial_cmp(&sa).expect("cosines are never NaN")
        });
        assert_eq!(
            picked, by_relevance,
            "case {case}: λ=1 order is not pure descending relevance"
        );

        // λ = 0 with a seeded S: every pick must minimize the maximum
        // redundancy against the current S.
        let pre_count = rng.random_range(1..=2.min(n - 1));
        let preselected: Vec<usize> = (0..pre_count).collect();
        let m = n - pre_count;
        let result = mmr_select(n, m, 0.0, &preselected, &mut sims).expect("budget fits");
        let picked: Vec<usize> = result.selected.iter().map(|s| s.index).collect();

        let mut s = preselected.clone();
        let mut taken = vec![false; n];
        for &p in &preselected {
            taken[p] = true;
        }
        let mut expected = Vec::with_capacity(m);
        for _ in 0..m {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..n {
                if taken[i] {
                    continue;
                }
                let worst = s
                    .iter()
                    .map(|&j| cosine(&vectors[i], &vectors[j]))
                    .fold(f64::NEG_INFINITY, f64::max);
                if best.map_or(true, |(_, w)| worst < w) {
                    best = Some((i, worst));
                }
            }
            let (index, _) = best.expect("candidates remain");
            taken[index] = true;
            s.push(index);
            expected.push(index);
        }
        assert_eq!(
            picked, expected,
            "case {case}: λ=0 picks do not minimize redundancy against S"
        );
    }
}

// ---------------------------------------------------------------------------
// 3. Reduction drops exactly one sentence at R = 0.01; short units pass
//    through the pipeline untouched
// ---------------------------------------------------------------------------

fn reduction_cluster(id: &str, anchor_sentences: usize) -> (Cluster, Vec<CandidateSummary>) {
    let cluster = Cluster {
        cluster_id: id.to_string(),
        documents: vec![
            doc(
                &format!("{id}-a"),
                "The survey team mapped the tidal flats. Sensors logged readings all week.",
            ),
            doc(
                &format!("{id}-b"),
                "A second crew checked the harbor markers. Their report praised the sensors.",
            ),
        ],
        reference_summary: None,
    };
    let anchor_text = (0..anchor_sentences)
        .map(|j| format!("Finding {j} links the tidal sensors to the harbor markers."))
        .collect::<Vec<_>>()
        .join(" ");
    let candidates = vec![
        mds(id, "alpha", &anchor_text),
        mds(id, "beta", "A separate memo summarized the week of sensor readings."),
    ];
    (cluster, candidates)
}

#[test]
fn c03_reduction_drops_one_sentence_and_short_units_pass_through() {
    // One percent of d ∈ 3..=12 sentences rounds up to a single removal:
    // keep = max(1, d − max(1, ceil(d·0.01))) = d − 1.
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for d in 3..=12 {
        let vectors = random_vectors(&mut rng, d, 3);
        let query = random_vector(&mut rng, 3);
        let mut sims = CosineSims { vectors, query };
        let kept = mmr_reduce(d, 0.01, 0.5, &mut sims).expect("reduction succeeds");
        assert_eq!(kept.len(), d - 1, "d={d}: reduction must drop exactly one");
        assert!(
            kept.windows(2).all(|w| w[0] < w[1]),
            "d={d}: kept indices must stay in original order"
        );
        assert!(kept.iter().all(|&i| i < d), "d={d}: kept index out of range");
    }

    let resources = RunResources::default();

    // Two sentences sit below the default three-sentence floor: even an
    // aggressive percentage must leave the anchor alone.
    let (cluster, candidates) = reduction_cluster("gate-a", 2);
    let mut config = fast_config("alpha", FusionMode::Concatenate);
    config.reduction_percentage = 0.5;
    let fused = fuse_cluster(&cluster, &candidates, &config, &resources).expect("fuses");
    assert_eq!(fused.anchor_len, 2, "two-sentence unit must pass through");

    // Four sentences below an explicit floor of five also pass through.
    let (cluster, candidates) = reduction_cluster("gate-b", 4);
    let mut config = fast_config("alpha", FusionMode::Concatenate);
    config.reduction_percentage = 0.5;
    config.reduction_min_sentences = 5;
    let fused = fuse_cluster(&cluster, &candidates, &config, &resources).expect("fuses");
    assert_eq!(fused.anchor_len, 4, "unit below the floor must pass through");

    // At the floor the reduction engages and removes exactly one sentence.
    let (cluster, candidates) = reduction_cluster("gate-c", 3);
    let config = fast_config("alpha", FusionMode::Concatenate);
    let fused = fuse_cluster(&cluster, &candidates, &config, &resources).expect("fuses");
    assert_eq!(fused.anchor_len, 2, "three sentences at R=0.01 keep two");
}

// ---------------------------------------------------------------------------
// 4. Fused length = n + max(1, floor(n·p)) across a 50-cluster corpus
// ---------------------------------------------------------------------------

fn length_law_corpus() -> (Vec<Cluster>, Vec<CandidateSummary>) {
    let topics = [
        "tide", "grain", "signal", "bridge", "market", "glacier", "reactor", "orchard",
    ];
    let mut clusters = Vec::new();
    let mut candidates = Vec::new();
    for i in 0..50usize {
        let id = format!("len-{i:02}");
        let n = 2 + (i % 19);
        let t1 = topics[i % topics.len()];
        let t2 = topics[(i + 3) % topics.len()];
        clusters.push(Cluster {
            cluster_id: id.clone(),
            documents: vec![
                doc(
                    &format!("{id}-a"),
                    &format!(
                        "The {t1} report for district {i} arrived early. \
                         Crews logged {t1} readings before noon."
                    ),
                ),
                doc(
                    &format!("{id}-b"),
                    &format!(
                        "A second {t2} survey covered district {i}. \
                         The {t2} crew filed results at dusk."
                    ),
                ),
            ],
            reference_summary: None,
        });
        let anchor = (0..n)
            .map(|j| format!("Alpha finding {j} ties the {t1} data to sector {i}."))
            .collect::<Vec<_>>()
            .join(" ");
        let beta = (0..8)
            .map(|j| format!("Beta note {j} compares {t2} levels across district {i}."))
            .collect::<Vec<_>>()
            .join(" ");
        let gamma = (0..4)
            .map(|j| format!("Gamma memo {j} reviews the {t1} and {t2} split for {i}."))
            .collect::<Vec<_>>()
            .join(" ");
        candidates.push(mds(&id, "alpha", &anchor));
        candidates.push(mds(&id, "beta", &beta));
        candidates.push(mds(&id, "gamma", &gamma));
    }
    (clusters, candidates)
}

#[test]
fn c04_fused_length_follows_the_anchor_budget_law() {
    let (clusters, candidates) = length_law_corpus();
    let resources = RunResources::default();
    for p in [0.107, 0.298] {
        let mut config = fast_config("alpha", FusionMode::Concatenate);
        config.mmr_percentage = p;
        // Keep authored anchor lengths intact: nothing reaches this floor.
        config.reduction_min_sentences = 1000;
        let record =
            fuse_corpus(&clusters, &candidates, &config, &resources).expect("corpus fuses");
        assert!(record.errors.is_empty(), "p={p}: {:?}", record.errors);
        assert_eq!(record.fused.len(), 50);
        for fused in &record.fused {
            let index: usize = fused.cluster_id[4..].parse().expect("cluster ids are len-NN");
            let authored = 2 + (index % 19);
            assert_eq!(
                fused.anchor_len, authored,
                "cluster {}: anchor length changed",
                fused.cluster_id
            );
            let budget = ((authored as f64 * p).floor() as usize).max(1);
            assert_eq!(
                fused.appended_len, budget,
                "cluster {} with p={p}: appended count off the law",
                fused.cluster_id
            );
            assert_eq!(
                fused.sentences.len(),
                authored + budget,
                "cluster {} with p={p}: total length off the law",
                fused.cluster_id
            );
        }
    }
}

// ---------------------------------------------------------------------------
// 5. Overlap scores: hand counts and a subsequence-enumeration oracle
// ---------------------------------------------------------------------------

fn is_subsequence(needle: &[usize], hay: &[usize]) -> bool {
    let mut rest = hay.iter();
    needle.iter().all(|n| rest.any(|h| h == n))
}

/// Longest common subsequence by exhaustive subset enumeration of one side.
fn brute_force_lcs(a: &[usize], b: &[usize]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<usize> = (0..a.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| a[i])
            .collect();
        if sub.len() > best && is_subsequence(&sub, b) {
            best = sub.len();
        }
    }
    best
}

#[test]
fn c05_overlap_scores_match_hand_counts_and_the_subsequence_oracle() {
    // Identical texts score a perfect 1 on every metric.
    let text = "the storm closed the harbor before dawn";
    let triple = score_pair::<f64>(text, text).expect("scores");
    for (name, score) in [
        ("unigram", triple.rouge1),
        ("bigram", triple.rouge2),
        ("subsequence", triple.rouge_l),
    ] {
        assert!(
            (score.f1 - 1.0).abs() <= 1e-12,
            "{name} F1 for identical texts was {}",
            score.f1
        );
    }

    // Hand-counted pair: 2 of 3 unigrams and the single shared bigram.
    let triple = score_pair::<f64>("the cat sat", "the cat ran").expect("scores");
    assert!(
        (triple.rouge1.f1 - 2.0 / 3.0).abs() <= 1e-9,
        "unigram F1 was {}",
        triple.rouge1.f1
    );
    assert!(
        (triple.rouge2.f1 - 1.0 / 3.0).abs() <= 1e-9,
        "bigram F1 was {}",
        triple.rouge2.f1
    );
    assert!(
        (triple.rouge_l.f1 - 2.0 / 3.0).abs() <= 1e-9,
        "subsequence F1 was {}",
        triple.rouge_l.f1
    );

    // The DP subsequence length agrees with subset enumeration.
    let words = ["ash", "birch", "cedar"];
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for case in 0..100 {
        let len_a = rng.random_range(1..=8);
        let len_b = rng.random_range(1..=8);
        let a: Vec<usize> = (0..len_a).map(|_| rng.random_range(0..words.len())).collect();
        let b: Vec<usize> = (0..len_b).map(|_| rng.random_range(0..words.len())).collect();
        let text_a = a.iter().map(|&w| words[w]).collect::<Vec<_>>().join(" ");
        let text_b = b.iter().map(|&w| words[w]).collect::<Vec<_>>().join(" ");
        let expected = brute_force_lcs(&a, &b) as f64;
        let score = rouge_l::<f64>(&text_a, &text_b).expect("scores");
        assert!(
            (score.precision - expected / len_a as f64).abs() <= 1e-12,
            "case {case}: precision {} for LCS {expected} of {len_a}",
            score.precision
        );
        assert!(
            (score.recall - expected / len_b as f64).abs() <= 1e-12,
            "case {case}: recall {} for LCS {expected} of {len_b}",
            score.recall
        );
    }
}

// ---------------------------------------------------------------------------
// 6. Topic fit recovers planted vocabularies
// ---------------------------------------------------------------------------

#[test]
fn c06_topic_fit_recovers_planted_vocabularies() {
    let started = Instant::now();
    let vocab_a: Vec<String> = (0..10).map(|i| format!("aurora{i}")).collect();
    let vocab_b: Vec<String> = (0..10).map(|i| format!("basalt{i}")).collect();

    let mut passes = 0;
    for seed in 1..=5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs: Vec<TokenList> = (0..200)
            .map(|d| {
                let vocab = if d % 2 == 0 { &vocab_a } else { &vocab_b };
                TokenList(
                    (0..20)
                        .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
                        .collect(),
                )
            })
            .collect();
        let model = fit_lda::<f64>(&docs, 2, 1.0, 0.01, 200, seed).expect("fit succeeds");
        let both_pure = (0..2).all(|topic| {
            let top = top_words(&model, topic, 5);
            let from_a = top.iter().filter(|w| w.starts_with("aurora")).count();
            from_a.max(top.len() - from_a) as f64 >= 0.8 * top.len() as f64
        });
        if both_pure {
            passes += 1;
        }
    }
    assert!(
        passes >= 4,
        "planted vocabularies recovered on only {passes} of 5 seeds"
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(30),
        "five fits took {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 7. Transport distance: identity, symmetry, bound dominance, and the
//    polytope-vertex oracle
// ---------------------------------------------------------------------------

/// My own bag-of-words distribution: distinct words in first-occurrence
/// order with count-normalized masses.  Support order cannot change the
/// optimal cost, so this stays independent of the library's layout.
fn distribution(tokens: &TokenList, table: &WordVectors<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut words: Vec<&str> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for token in &tokens.0 {
        match words.iter().position(|w| w == token) {
            Some(i) => counts[i] += 1.0,
            None => {
                words.push(token);
                counts.push(1.0);
            }
        }
    }
    let total: f64 = counts.iter().sum();
    let vectors = words
        .iter()
        .map(|w| table.get(w).expect("drawn from the table").to_vec())
        .collect();
    let masses = counts.iter().map(|c| c / total).collect();
    (vectors, masses)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Solves the flows forced by a candidate basis via leaf elimination over
/// the induced bipartite graph; `None` when the cells do not span it.
fn basis_flows(cells: &[(usize, usize)], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let m = supply.len();
    let n = demand.len();
    let mut degree = vec![0usize; m + n];
    for &(i, j) in cells {
        degree[i] += 1;
        degree[m + j] += 1;
    }
    if degree.iter().any(|&d| d == 0) {
        return None;
    }
    let mut residual: Vec<f64> = supply.iter().chain(demand.iter()).copied().collect();
    let mut flows = vec![0.0; cells.len()];
    let mut used = vec![false; cells.len()];
    for _ in 0..cells.len() {
        let leaf = (0..m + n).find(|&v| degree[v] == 1)?;
        let (e, &(i, j)) = cells
            .iter()
            .enumerate()
            .find(|&(e, &(i, j))| !used[e] && (i == leaf || m + j == leaf))?;
        flows[e] = residual[leaf];
        used[e] = true;
        degree[i] -= 1;
        degree[m + j] -= 1;
        let other = if i == leaf { m + j } else { i };
        residual[other] -= residual[leaf];
        residual[leaf] = 0.0;
    }
    Some(flows)
}

/// Exhaustive transport optimum: every basic solution is a choice of
/// m + n − 1 cells whose graph spans; enumerate them all and keep the
/// cheapest feasible cost.
fn brute_force_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> f64 {
    let m = supply.len();
    let n = demand.len();
    let all_cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();
    let size = m + n - 1;
    let mut chosen = vec![0usize; size];
    let mut best = f64::INFINITY;

    fn recurse(
        all_cells: &[(usize, usize)],
        start: usize,
        depth: usize,
        chosen: &mut [usize],
        supply: &[f64],
        demand: &[f64],
        cost: &[f64],
        best: &mut f64,
    ) {
        let size = chosen.len();
        if depth == size {
            let cells: Vec<(usize, usize)> = chosen.iter().map(|&k| all_cells[k]).collect();
            if let Some(flows) = basis_flows(&cells, supply, demand) {
                if flows.iter().all(|&f| f >= -1e-9) {
                    let n = demand.len();
                    let total: f64 = cells
                        .iter()
                        .zip(&flows)
                        .map(|(&(i, j), &f)| f.max(0.0) * cost[i * n + j])
                        .sum();
                    if total < *best {
                        *best = total;
                    }
                }
            }
            return;
        }
        for k in start..all_cells.len() {
            chosen[depth] = k;
            recurse(all_cells, k + 1, depth + 1, chosen, supply, demand, cost, best);
        }
    }

    recurse(&all_cells, 0, 0, &mut chosen, supply, demand, cost, &mut best);
    best
}

#[test]
fn c07_transport_distance_matches_polytope_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for case in 0..100 {
        let dim = 3;
        // Vocabularies of at most four words keep every support ≤ 4, so
        // each instance is also brute-forceable.
        let vocab = rng.random_range(2..=4);
        let mut table = WordVectors::new(dim);
        for w in 0..vocab {
            let vector: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            table.insert(format!("w{w}"), vector);
        }
        let draw = |rng: &mut ChaCha8Rng| {
            let len = rng.random_range(1..=8);
            TokenList(
                (0..len)
                    .map(|_| format!("w{}", rng.random_range(0..vocab)))
                    .collect(),
            )
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);

        let self_distance = wmd_distance(&a, &a, &table, WmdMode::Exact).expect("defined");
        assert!(
            self_distance.abs() <= 1e-12,
            "case {case}: self-distance was {self_distance}"
        );

        let ab = wmd_distance(&a, &b, &table, WmdMode::Exact).expect("defined");
        let ba = wmd_distance(&b, &a, &table, WmdMode::Exact).expect("defined");
        let relaxed = wmd_distance(&a, &b, &table, WmdMode::Relaxed).expect("defined");
        assert!(
            (ab - ba).abs() <= 1e-9,
            "case {case}: asymmetry {ab} vs {ba}"
        );
        assert!(
            relaxed <= ab + 1e-9,
            "case {case}: relaxed bound {relaxed} exceeds exact {ab}"
        );

        let (va, masses_a) = distribution(&a, &table);
        let (vb, masses_b) = distribution(&b, &table);
        let mut cost = Vec::with_capacity(va.len() * vb.len());
        for x in &va {
            for y in &vb {
                cost.push(euclidean(x, y));
            }
        }
        let brute = brute_force_transport(&masses_a, &masses_b, &cost);
        assert!(
            (ab - brute).abs() <= 1e-9,
            "case {case}: exact {ab} vs enumerated optimum {brute}"
        );
    }
}

// ---------------------------------------------------------------------------
// 8. Repeated and parallel CLI runs are byte-identical
// ---------------------------------------------------------------------------

#[test]
fn c08_repeated_and_parallel_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let clusters = fixture("small/clusters.jsonl");
    let candidates = fixture("small/candidates.jsonl");
    let config = fixture("small/config.json");

    for (name, jobs) in [("first", "1"), ("second", "1"), ("parallel", "4")] {
        let out_dir = tmp.path().join(name);
        let output = bin()
            .arg("fuse")
            .arg(&clusters)
            .arg(&candidates)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out_dir)
            .args(["--seed", "1", "--jobs", jobs])
            .output()
            .expect("binary runs");
        assert_success(&output, &format!("fuse ({name})"));
    }

    for file in ["fused.jsonl", "report.json"] {
        let first = fs::read(tmp.path().join("first").join(file)).expect("read");
        let second = fs::read(tmp.path().join("second").join(file)).expect("read");
        let parallel = fs::read(tmp.path().join("parallel").join(file)).expect("read");
        assert_eq!(first, second, "{file} differs between repeated runs");
        assert_eq!(first, parallel, "{file} differs between --jobs 1 and --jobs 4");
    }
}

// ---------------------------------------------------------------------------
// 9. Frozen fixture replays bit-exactly
// ---------------------------------------------------------------------------

#[test]
fn c09_frozen_fixture_replays_bit_exactly() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out_dir = tmp.path().join("run");
    let eval_path = tmp.path().join("eval.json");

    let output = bin()
        .arg("fuse")
        .arg(fixture("golden/clusters.jsonl"))
        .arg(fixture("golden/candidates.jsonl"))
        .arg("--config")
        .arg(fixture("golden/config.json"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("binary runs");
    assert_success(&output, "fuse (frozen fixture)");

    let output = bin()
        .arg("evaluate")
        .arg(out_dir.join("fused.jsonl"))
        .arg(fixture("golden/clusters.jsonl"))
        .arg("--out")
        .arg(&eval_path)
        .output()
        .expect("binary runs");
    assert_success(&output, "evaluate (frozen fixture)");

    for (actual, expected) in [
        (out_dir.join("fused.jsonl"), fixture("golden/expected/fused.jsonl")),
        (out_dir.join("report.json"), fixture("golden/expected/report.json")),
        (eval_path.clone(), fixture("golden/expected/eval.json")),
    ] {
        let actual_bytes = fs::read(&actual).expect("read replay output");
        let expected_bytes = fs::read(&expected)
            .unwrap_or_else(|e| panic!("missing frozen file {}: {e}", expected.display()));
        assert_eq!(
            actual_bytes,
            expected_bytes,
            "{} drifted from the frozen bytes",
            expected.display()
        );
    }
}

// ---------------------------------------------------------------------------
// 10. Search converges on a toy objective and round-trips through files
// ---------------------------------------------------------------------------

#[test]
fn c10_search_converges_and_best_config_round_trips() {
    // Analytic toy objective −(λ − 0.3)²: 200 uniform samples of λ land
    // within 0.05 of the optimum with overwhelming margin.
    let base = FusionConfig::with_best_model("alpha", FusionMode::Concatenate);
    let space = SearchSpace {
        lambda: Some(ContinuousRange {
            min: 0.0,
            max: 1.0,
            steps: None,
        }),
        ..SearchSpace::default()
    };
    let outcome = random_search(&base, &space, 200, 1, |config| {
        Ok(Evaluation {
            objective: -(config.lambda - 0.3).powi(2),
            rouge: None,
        })
    })
    .expect("search runs");
    assert_eq!(outcome.trials.len(), 200);
    assert!(
        (outcome.best_config.lambda - 0.3).abs() <= 0.05,
        "best λ {} strayed from the analytic optimum 0.3",
        outcome.best_config.lambda
    );

    // File round trip: the emitted best config re-fused and re-scored must
    // reproduce the logged winning objective exactly.
    let tmp = tempfile::tempdir().expect("tempdir");
    let tune_dir = tmp.path().join("tuned");
    let output = bin()
        .arg("tune")
        .arg(fixture("small/clusters.jsonl"))
        .arg(fixture("small/candidates.jsonl"))
        .arg("--space")
        .arg(fixture("small/space.json"))
        .args(["--budget", "4", "--best-model", "alpha"])
        .arg("--out")
        .arg(&tune_dir)
        .output()
        .expect("binary runs");
    assert_success(&output, "tune");

    let log = fs::read_to_string(tune_dir.join("trials.jsonl")).expect("trial log");
    let header: Value = serde_json::from_str(log.lines().next().expect("header line"))
        .expect("header parses");
    let logged_objective = header["best_objective"].as_f64().expect("objective");
    assert_eq!(log.lines().count(), 1 + 4, "header plus one line per trial");

    let run_dir = tmp.path().join("refused");
    let output = bin()
        .arg("fuse")
        .arg(fixture("small/clusters.jsonl"))
        .arg(fixture("small/candidates.jsonl"))
        .arg("--config")
        .arg(tune_dir.join("best_config.json"))
        .arg("--out")
        .arg(&run_dir)
        .output()
        .expect("binary runs");
    assert_success(&output, "fuse with the emitted config");

    let output = bin()
        .arg("evaluate")
        .arg(run_dir.join("fused.jsonl"))
        .arg(fixture("small/clusters.jsonl"))
        .arg("--out")
        .arg(tmp.path().join("eval.json"))
        .output()
        .expect("binary runs");
    assert_success(&output, "evaluate the re-fused output");
    let means = stdout_json(&output);
    let mean = (means["rouge-1"].as_f64().unwrap()
        + means["rouge-2"].as_f64().unwrap()
        + means["rouge-l"].as_f64().unwrap())
        / 3.0;
    assert_eq!(
        mean, logged_objective,
        "re-fused objective must reproduce the winning trial bit-for-bit"
    );
}

// ---------------------------------------------------------------------------
// 11. 500-cluster scale run finishes inside the time budget
// ---------------------------------------------------------------------------

fn scale_corpus(n_clusters: usize, docs_per: usize) -> (Vec<Cluster>, Vec<CandidateSummary>) {
    let subjects = [
        "council", "harbor", "clinic", "observatory", "railway", "festival", "reservoir",
        "refinery", "stadium", "archive",
    ];
    let verbs = ["approved", "delayed", "expanded", "inspected", "reopened", "suspended"];
    let objects = [
        "the flood plan",
        "a night schedule",
        "the east annex",
        "a joint audit",
        "new safety rules",
        "the tidal survey",
    ];
    let places = [
        "Norfield", "East Quay", "Marrow Bend", "the old district", "Halver Ridge",
        "the north ward",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1100);
    let mut clusters = Vec::with_capacity(n_clusters);
    let mut candidates = Vec::new();
    for c in 0..n_clusters {
        let id = format!("scale-{c:04}");
        let mut docs = Vec::with_capacity(docs_per);
        for d in 0..docs_per {
            let text = format!(
                "The {} in {} {} {} on day {d} of cycle {c}.",
                subjects[rng.random_range(0..subjects.len())],
                places[rng.random_range(0..places.len())],
                verbs[rng.random_range(0..verbs.len())],
                objects[rng.random_range(0..objects.len())],
            );
            docs.push(doc(&format!("{id}-d{d:02}"), &text));
        }
        let reference = format!("{} {} {}", docs[0].text, docs[1].text, docs[2].text);
        candidates.push(mds(&id, "alpha", &format!("{} {}", docs[0].text, docs[1].text)));
        candidates.push(mds(&id, "beta", &format!("{} {}", docs[2].text, docs[3].text)));
        for d in &docs {
            candidates.push(sds(&id, "alpha", &d.doc_id, &d.text));
            candidates.push(sds(
                &id,
                "beta",
                &d.doc_id,
                &format!("Sources report {}", d.text),
            ));
        }
        clusters.push(Cluster {
            cluster_id: id,
            documents: docs,
            reference_summary: Some(reference),
        });
    }
    (clusters, candidates)
}

#[test]
fn c11_scale_corpus_fuses_and_scores_within_budget() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let clusters_path = tmp.path().join("clusters.jsonl");
    let candidates_path = tmp.path().join("candidates.jsonl");
    let config_path = tmp.path().join("config.json");
    let out_dir = tmp.path().join("run");

    let (clusters, candidates) = scale_corpus(500, 40);
    write_clusters(&clusters, &clusters_path).expect("write clusters");
    write_candidates(&candidates, &candidates_path).expect("write candidates");
    fs::write(
        &config_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "best_model_id": "alpha",
            "mode": "select",
            "mmr_percentage": 0.298,
            "docs_per_cluster": 10,
            "seed": 1
        }))
        .expect("config serializes"),
    )
    .expect("write config");

    let started = Instant::now();
    let output = bin()
        .arg("fuse")
        .arg(&clusters_path)
        .arg(&candidates_path)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&out_dir)
        .args(["--jobs", "1"])
        .output()
        .expect("binary runs");
    assert_success(&output, "fuse (scale corpus)");

    let output = bin()
        .arg("evaluate")
        .arg(out_dir.join("fused.jsonl"))
        .arg(&clusters_path)
        .arg("--out")
        .arg(tmp.path().join("eval.json"))
        .output()
        .expect("binary runs");
    assert_success(&output, "evaluate (scale corpus)");
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(600),
        "fuse + evaluate took {elapsed:?}"
    );

    let fused = load_fused(&out_dir.join("fused.jsonl")).expect("fused output loads");
    assert_eq!(fused.len(), 500, "every cluster must fuse");
    let means = stdout_json(&output);
    for metric in ["rouge-1", "rouge-2", "rouge-l"] {
        let value = means[metric].as_f64().expect("metric present");
        assert!(
            (0.0..=1.0).contains(&value) && value > 0.0,
            "{metric} mean {value} is implausible"
        );
    }
}
