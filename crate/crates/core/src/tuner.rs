//! Seeded black-box parameter search over [`FusionConfig`].
//!
//! Both searches pre-generate the full trial list from the seed before any
//! evaluation runs, so trials can evaluate in parallel without perturbing
//! the sequence.  Failed trials are logged and score negative infinity; the
//! winner is the earliest trial with the highest objective.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateSummary, Cluster};
use crate::pipeline::{derive_seed, fuse_corpus, FusionConfig, RunResources};
use crate::rouge::RougeTriple;
use crate::similarity::MeasureKind;

/// Errors from space construction and search.
#[derive(Debug, Error)]
pub enum TunerError {
    #[error("search budget must be at least 1")]
    EmptyBudget,
    #[error("search space is empty: no parameter has a range or choices")]
    EmptySpace,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("failed to read search space {path}: {message}")]
    SpaceFile { path: String, message: String },
    #[error("all {count} trials failed; first error: {first}")]
    AllTrialsFailed { count: usize, first: String },
    #[error("failed to write trial log {path}")]
    LogWrite {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An inclusive continuous range; `steps` is only consulted by grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousRange {
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

/// An inclusive integer range; grid search enumerates every value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntRange {
    pub min: usize,
    pub max: usize,
}

/// Which config parameters to search and over what.
///
/// Space files are JSON objects mirroring these field names; omitted fields
/// stay at the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub lambda: Option<ContinuousRange>,
    pub mmr_percentage: Option<ContinuousRange>,
    pub lda_topics: Option<IntRange>,
    pub lda_words_per_topic: Option<IntRange>,
    pub sim0: Option<Vec<MeasureKind>>,
    pub sim1: Option<Vec<MeasureKind>>,
    pub sim2: Option<Vec<MeasureKind>>,
}

/// One parameter assignment drawn from the space.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Assign {
    Lambda(f64),
    MmrPercentage(f64),
    LdaTopics(usize),
    LdaWordsPerTopic(usize),
    Sim0(MeasureKind),
    Sim1(MeasureKind),
    Sim2(MeasureKind),
}

fn apply(config: &mut FusionConfig, assign: Assign) {
    match assign {
        Assign::Lambda(v) => config.lambda = v,
        Assign::MmrPercentage(v) => config.mmr_percentage = v,
        Assign::LdaTopics(v) => config.lda_topics = v,
        Assign::LdaWordsPerTopic(v) => config.lda_words_per_topic = v,
        Assign::Sim0(v) => config.sim0 = v,
        Assign::Sim1(v) => config.sim1 = v,
        Assign::Sim2(v) => config.sim2 = v,
    }
}

impl SearchSpace {
    /// Reads and validates a JSON space file.
    pub fn from_file(path: &Path) -> Result<SearchSpace, TunerError> {
        let file_err = |message: String| TunerError::SpaceFile {
            path: path.display().to_string(),
            message,
        };
        let raw = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let space: SearchSpace =
            serde_json::from_str(&raw).map_err(|e| file_err(e.to_string()))?;
        space.validate()?;
        Ok(space)
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_none()
            && self.mmr_percentage.is_none()
            && self.lda_topics.is_none()
            && self.lda_words_per_topic.is_none()
            && self.sim0.is_none()
            && self.sim1.is_none()
            && self.sim2.is_none()
    }

    /// Checks range ordering and parameter bounds.
    pub fn validate(&self) -> Result<(), TunerError> {
        let mut problems = Vec::new();
        let check_cont = |name: &str, range: &ContinuousRange, lo: f64, hi: f64,
                          lo_open: bool, problems: &mut Vec<String>| {
            if !(range.min <= range.max) {
                problems.push(format!("{name}: min {} exceeds max {}", range.min, range.max));
            }
            let below = if lo_open { range.min <= lo } else { range.min < lo };
            if below || range.max > hi {
                let bracket = if lo_open { '(' } else { '[' };
                problems.push(format!(
                    "{name}: range [{}, {}] must lie within {bracket}{lo}, {hi}]",
                    range.min, range.max
                ));
            }
            if range.steps == Some(0) {
                problems.push(format!("{name}: steps must be at least 1"));
            }
        };
        if let Some(range) = &self.lambda {
            check_cont("lambda", range, 0.0, 1.0, false, &mut problems);
        }
        if let Some(range) = &self.mmr_percentage {
            check_cont("mmr_percentage", range, 0.0, 1.0, true, &mut problems);
        }
        let check_int = |name: &str, range: &IntRange, problems: &mut Vec<String>| {
            if range.min > range.max {
                problems.push(format!("{name}: min {} exceeds max {}", range.min, range.max));
            }
            if range.min < 1 || range.max > 10 {
                problems.push(format!(
                    "{name}: range [{}, {}] must lie within [1, 10]",
                    range.min, range.max
                ));
            }
        };
        if let Some(range) = &self.lda_topics {
            check_int("lda_topics", range, &mut problems);
        }
        if let Some(range) = &self.lda_words_per_topic {
            check_int("lda_words_per_topic", range, &mut problems);
        }
        for (name, choices) in [
            ("sim0", &self.sim0),
            ("sim1", &self.sim1),
            ("sim2", &self.sim2),
        ] {
            if let Some(choices) = choices {
                if choices.is_empty() {
                    problems.push(format!("{name}: choices must not be empty"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TunerError::InvalidSpace(problems.join("; ")))
        }
    }

    /// Draws one assignment per active parameter, in field order.
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<Assign> {
        let mut assigns = Vec::new();
        if let Some(r) = &self.lambda {
            assigns.push(Assign::Lambda(r.min + rng.random::<f64>() * (r.max - r.min)));
        }
        if let Some(r) = &self.mmr_percentage {
            assigns.push(Assign::MmrPercentage(
                r.min + rng.random::<f64>() * (r.max - r.min),
            ));
        }
        if let Some(r) = &self.lda_topics {
            assigns.push(Assign::LdaTopics(rng.random_range(r.min..=r.max)));
        }
        if let Some(r) = &self.lda_words_per_topic {
            assigns.push(Assign::LdaWordsPerTopic(rng.random_range(r.min..=r.max)));
        }
        if let Some(choices) = &self.sim0 {
            assigns.push(Assign::Sim0(choices[rng.random_range(0..choices.len())]));
        }
        if let Some(choices) = &self.sim1 {
            assigns.push(Assign::Sim1(choices[rng.random_range(0..choices.len())]));
        }
        if let Some(choices) = &self.sim2 {
            assigns.push(Assign::Sim2(choices[rng.random_range(0..choices.len())]));
        }
        assigns
    }

    /// Per-dimension grid values, in field order.  Continuous dimensions
    /// need explicit `steps`.
    fn grid_dims(&self) -> Result<Vec<Vec<Assign>>, TunerError> {
        let linspace = |name: &str, r: &ContinuousRange| -> Result<Vec<f64>, TunerError> {
            let steps = r.steps.ok_or_else(|| {
                TunerError::InvalidSpace(format!("{name}: grid search needs explicit steps"))
            })?;
            Ok(if steps == 1 {
                vec![r.min]
            } else {
                (0..steps)
                    .map(|i| r.min + (r.max - r.min) * (i as f64) / ((steps - 1) as f64))
                    .collect()
            })
        };
        let mut dims = Vec::new();
        if let Some(r) = &self.lambda {
            dims.push(linspace("lambda", r)?.into_iter().map(Assign::Lambda).collect());
        }
        if let Some(r) = &self.mmr_percentage {
            dims.push(
                linspace("mmr_percentage", r)?
                    .into_iter()
                    .map(Assign::MmrPercentage)
                    .collect(),
            );
        }
        if let Some(r) = &self.lda_topics {
            dims.push((r.min..=r.max).map(Assign::LdaTopics).collect());
        }
        if let Some(r) = &self.lda_words_per_topic {
            dims.push((r.min..=r.max).map(Assign::LdaWordsPerTopic).collect());
        }
        if let Some(choices) = &self.sim0 {
            dims.push(choices.iter().copied().map(Assign::Sim0).collect());
        }
        if let Some(choices) = &self.sim1 {
            dims.push(choices.iter().copied().map(Assign::Sim1).collect());
        }
        if let Some(choices) = &self.sim2 {
            dims.push(choices.iter().copied().map(Assign::Sim2).collect());
        }
        Ok(dims)
    }
}

/// What the objective function reports for one config.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    /// Mean per-metric scores when the objective came from ROUGE.
    pub rouge: Option<RougeTriple<f64>>,
}

/// Which score the built-in ROUGE objective maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ObjectiveMetric {
    /// Mean of ROUGE-1, ROUGE-2, and ROUGE-L F1 — equal weights.
    #[default]
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "rouge-1")]
    Rouge1,
    #[serde(rename = "rouge-2")]
    Rouge2,
    #[serde(rename = "rouge-l")]
    RougeL,
}

impl FromStr for ObjectiveMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<ObjectiveMetric, String> {
        match s {
            "mean" => Ok(ObjectiveMetric::Mean),
            "rouge-1" => Ok(ObjectiveMetric::Rouge1),
            "rouge-2" => Ok(ObjectiveMetric::Rouge2),
            "rouge-l" => Ok(ObjectiveMetric::RougeL),
            other => Err(format!(
                "unknown objective {other:?}; expected mean, rouge-1, rouge-2, or rouge-l"
            )),
        }
    }
}

/// The production objective: fuse the corpus under the trial config and
/// score against references.  A trial fails if any cluster fails, so tuned
/// parameters are never rewarded for skipping hard clusters.
pub fn rouge_objective<'a>(
    clusters: &'a [Cluster],
    candidates: &'a [CandidateSummary],
    resources: &'a RunResources,
    metric: ObjectiveMetric,
) -> impl Fn(&FusionConfig) -> Result<Evaluation, String> + Sync + 'a {
    move |config: &FusionConfig| {
        let record = fuse_corpus(clusters, candidates, config, resources)
            .map_err(|e| e.to_string())?;
        if !record.errors.is_empty() {
            return Err(format!(
                "{} of {} clusters failed; first: {}",
                record.errors.len(),
                record.cluster_count,
                record.errors[0].message
            ));
        }
        let aggregate = record
            .aggregate
            .ok_or_else(|| "no cluster has a reference summary".to_string())?;
        let means = aggregate.means;
        let objective = match metric {
            ObjectiveMetric::Mean => {
                (means.rouge1.f1 + means.rouge2.f1 + means.rouge_l.f1) / 3.0
            }
            ObjectiveMetric::Rouge1 => means.rouge1.f1,
            ObjectiveMetric::Rouge2 => means.rouge2.f1,
            ObjectiveMetric::RougeL => means.rouge_l.f1,
        };
        Ok(Evaluation {
            objective,
            rouge: Some(means),
        })
    }
}

/// Trial outcome, one log line each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    /// The search's master seed; (space, seed, index) reproduce the config.
    pub seed: u64,
    pub config: FusionConfig,
    /// Absent on failure (a failed trial compares as negative infinity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge: Option<RougeTriple<f64>>,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Search result: the winning trial plus the complete log.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningOutcome {
    pub best_index: usize,
    pub best_config: FusionConfig,
    pub best_objective: f64,
    pub trials: Vec<Trial>,
}

fn run_trials<F>(
    configs: Vec<FusionConfig>,
    seed: u64,
    evaluate: F,
) -> Result<TuningOutcome, TunerError>
where
    F: Fn(&FusionConfig) -> Result<Evaluation, String> + Sync,
{
    let evaluations: Vec<Result<Evaluation, String>> = configs
        .par_iter()
        .map(|config| {
            config
                .validate()
                .map_err(|e| e.to_string())
                .and_then(|()| evaluate(config))
                .and_then(|evaluation| {
                    if evaluation.objective.is_finite() {
                        Ok(evaluation)
                    } else {
                        Err(format!(
                            "objective was not finite: {}",
                            evaluation.objective
                        ))
                    }
                })
        })
        .collect();

    let mut trials = Vec::with_capacity(configs.len());
    for (index, (config, result)) in configs.into_iter().zip(evaluations).enumerate() {
        let trial = match result {
            Ok(evaluation) => Trial {
                index,
                seed,
                config,
                objective: Some(evaluation.objective),
                rouge: evaluation.rouge,
                status: TrialStatus::Ok,
                error: None,
            },
            Err(message) => Trial {
                index,
                seed,
                config,
                objective: None,
                rouge: None,
                status: TrialStatus::Failed,
                error: Some(message),
            },
        };
        trials.push(trial);
    }

    let mut best: Option<(usize, f64)> = None;
    for trial in &trials {
        let objective = trial.objective.unwrap_or(f64::NEG_INFINITY);
        if trial.status == TrialStatus::Ok
            && best.map_or(true, |(_, score)| objective > score)
        {
            best = Some((trial.index, objective));
        }
    }
    let (best_index, best_objective) = best.ok_or_else(|| TunerError::AllTrialsFailed {
        count: trials.len(),
        first: trials[0]
            .error
            .clone()
            .unwrap_or_else(|| "unknown".to_string()),
    })?;

    Ok(TuningOutcome {
        best_index,
        best_config: trials[best_index].config.clone(),
        best_objective,
        trials,
    })
}

/// Uniform random search: `budget` i.i.d. samples from the space, evaluated
/// against `evaluate`; highest objective wins, earliest trial on ties.
pub fn random_search<F>(
    base: &FusionConfig,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    evaluate: F,
) -> Result<TuningOutcome, TunerError>
where
    F: Fn(&FusionConfig) -> Result<Evaluation, String> + Sync,
{
    if budget == 0 {
        return Err(TunerError::EmptyBudget);
    }
    if space.is_empty() {
        return Err(TunerError::EmptySpace);
    }
    space.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "tuner/random"));
    let configs: Vec<FusionConfig> = (0..budget)
        .map(|_| {
            let mut config = base.clone();
            for assign in space.sample(&mut rng) {
                apply(&mut config, assign);
            }
            config
        })
        .collect();
    run_trials(configs, seed, evaluate)
}

/// Exhaustive search over the space's explicit grids, in lexicographic
/// order (first declared dimension varies slowest).
pub fn grid_search<F>(
    base: &FusionConfig,
    space: &SearchSpace,
    seed: u64,
    evaluate: F,
) -> Result<TuningOutcome, TunerError>
where
    F: Fn(&FusionConfig) -> Result<Evaluation, String> + Sync,
{
    if space.is_empty() {
        return Err(TunerError::EmptySpace);
    }
    space.validate()?;
    let dims = space.grid_dims()?;
    let total: usize = dims.iter().map(Vec::len).product();

    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1].len();
    }
    let configs: Vec<FusionConfig> = (0..total)
        .map(|point| {
            let mut config = base.clone();
            for (dim, stride) in dims.iter().zip(&strides) {
                apply(&mut config, dim[(point / stride) % dim.len()]);
            }
            config
        })
        .collect();
    run_trials(configs, seed, evaluate)
}

#[derive(Serialize)]
struct LogHeader<'a> {
    trials: usize,
    seed: u64,
    best_index: usize,
    best_objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<&'a str>,
}

/// Writes the trial log: a header line with the run summary (and any
/// warning, e.g. the self-tuning stamp), then one trial per line.
pub fn write_trial_log(
    outcome: &TuningOutcome,
    path: &Path,
    warning: Option<&str>,
) -> Result<(), TunerError> {
    let mut body = Vec::new();
    let header = LogHeader {
        trials: outcome.trials.len(),
        seed: outcome.trials.first().map_or(0, |t| t.seed),
        best_index: outcome.best_index,
        best_objective: outcome.best_objective,
        warning,
    };
    serde_json::to_writer(&mut body, &header).expect("log header serializes");
    body.push(b'\n');
    for trial in &outcome.trials {
        serde_json::to_writer(&mut body, trial).expect("trial serializes");
        body.push(b'\n');
    }
    fs::write(path, body).map_err(|source| TunerError::LogWrite {
        path: path.display().to_string(),
        source,
    })
}

/// Per-parameter summary of the winning config, for operator diagnostics.
pub fn describe_best(outcome: &TuningOutcome, space: &SearchSpace) -> BTreeMap<String, String> {
    let mut described = BTreeMap::new();
    let config = &outcome.best_config;
    if space.lambda.is_some() {
        described.insert("lambda".to_string(), config.lambda.to_string());
    }
    if space.mmr_percentage.is_some() {
        described.insert(
            "mmr_percentage".to_string(),
            config.mmr_percentage.to_string(),
        );
    }
    if space.lda_topics.is_some() {
        described.insert("lda_topics".to_string(), config.lda_topics.to_string());
    }
    if space.lda_words_per_topic.is_some() {
        described.insert(
            "lda_words_per_topic".to_string(),
            config.lda_words_per_topic.to_string(),
        );
    }
    if space.sim0.is_some() {
        described.insert("sim0".to_string(), config.sim0.to_string());
    }
    if space.sim1.is_some() {
        described.insert("sim1".to_string(), config.sim1.to_string());
    }
    if space.sim2.is_some() {
        described.insert("sim2".to_string(), config.sim2.to_string());
    }
    described
}
