//! `mmrfuse` — command-line front end for the summary fusion library.
//!
//! Five subcommands cover the artifact lifecycle: `validate` checks input
//! files, `query` prints a cluster's topic-model query document, `fuse` runs
//! the pipeline over a corpus, `evaluate` scores fused output against
//! reference summaries, and `tune` searches the parameter space.
//!
//! Machine-readable results go to standard output (one JSON document or
//! token line per invocation); diagnostics and logging go to standard
//! error, so the two streams never interleave.  Exit codes: 0 on full
//! success, 1 on fatal errors, 2 when fusion finished but some clusters
//! failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mmrfuse_core::corpus::{
    load_candidates, load_clusters, load_fused, validate_files, write_run,
};
use mmrfuse_core::pipeline::{
    cluster_query, fuse_corpus, FusionConfig, FusionMode, RunResources,
};
use mmrfuse_core::rouge::evaluate_corpus;
use mmrfuse_core::textproc::StopwordSet;
use mmrfuse_core::tuner::{
    describe_best, grid_search, random_search, rouge_objective, write_trial_log,
    ObjectiveMetric, SearchSpace,
};
use mmrfuse_core::vectors::load_word_vectors;
use serde_json::json;

/// Master seed used when neither `--seed` nor a config file supplies one.
const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(
    name = "mmrfuse",
    version,
    about = "Fuse multi-model summaries of document clusters with maximal marginal relevance"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Master seed; every random stage derives its own seed from it.
    /// Overrides the config file's seed when given [default: 1].
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for cluster-level parallelism.  Output bytes never
    /// depend on this value.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    jobs: usize,

    /// Newline-separated stopword list replacing the built-in one.
    #[arg(long, global = true, value_name = "PATH")]
    stopwords: Option<PathBuf>,

    /// Pretrained word-vector table (JSON) for the `wmd` measure.
    #[arg(long, global = true, value_name = "PATH")]
    word_vectors: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a clusters file and a candidates file, reporting every violation.
    Validate {
        /// Clusters file (JSON lines).
        clusters: PathBuf,
        /// Candidate summaries file (JSON lines).
        candidates: PathBuf,
    },

    /// Print the topic-model query document the pipeline would use for one cluster.
    Query {
        /// Clusters file (JSON lines).
        clusters: PathBuf,
        /// Cluster to inspect.
        cluster_id: String,
        /// Topics to fit (T).
        #[arg(short = 't', long, default_value_t = 3, value_name = "T")]
        topics: usize,
        /// Words carried into the query per topic (W).
        #[arg(short = 'w', long, default_value_t = 7, value_name = "W")]
        words: usize,
    },

    /// Fuse every cluster and write the run artifacts.
    Fuse {
        /// Clusters file (JSON lines).
        clusters: PathBuf,
        /// Candidate summaries file (JSON lines).
        candidates: PathBuf,
        /// Fusion config (JSON).
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Directory receiving fused.jsonl, scores.jsonl, and report.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },

    /// Score fused summaries against their clusters' reference summaries.
    Evaluate {
        /// fused.jsonl from a fuse run.
        fused: PathBuf,
        /// Clusters file carrying the references.
        clusters: PathBuf,
        /// Where to write the full report (JSON).
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },

    /// Search the parameter space for the config with the best corpus score.
    Tune {
        /// Clusters file the objective fuses and scores (the tuning split).
        clusters: PathBuf,
        /// Candidate summaries file (JSON lines).
        candidates: PathBuf,
        /// Search space (JSON).
        #[arg(long, value_name = "PATH")]
        space: PathBuf,
        /// Random-search trials.
        #[arg(long, default_value_t = 50, value_name = "N")]
        budget: usize,
        /// Exhaust the space's grids instead of sampling.
        #[arg(long)]
        grid: bool,
        /// Base config supplying everything the space leaves fixed.
        #[arg(long, value_name = "PATH", conflicts_with = "best_model")]
        config: Option<PathBuf>,
        /// Anchor model id, as a config-free alternative to --config.
        #[arg(long, value_name = "ID")]
        best_model: Option<String>,
        /// Fusion mode (concatenate or select); only applies with --best-model.
        #[arg(long, default_value = "concatenate", value_name = "MODE")]
        mode: String,
        /// Score the search maximizes: mean, rouge-1, rouge-2, or rouge-l.
        #[arg(long, default_value = "mean", value_name = "METRIC")]
        objective: ObjectiveMetric,
        /// Clusters file results will be reported on.  When omitted or equal
        /// to the tuning split, the log is stamped with a self-tuning warning.
        #[arg(long, value_name = "PATH")]
        report_clusters: Option<PathBuf>,
        /// Directory receiving trials.jsonl and best_config.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.global.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.jobs)
        .build_global()
        .context("sizing the worker pool")?;

    match cli.command {
        Command::Validate {
            clusters,
            candidates,
        } => cmd_validate(&clusters, &candidates),
        Command::Query {
            clusters,
            cluster_id,
            topics,
            words,
        } => cmd_query(&cli.global, &clusters, &cluster_id, topics, words),
        Command::Fuse {
            clusters,
            candidates,
            config,
            out,
        } => cmd_fuse(&cli.global, &clusters, &candidates, &config, &out),
        Command::Evaluate {
            fused,
            clusters,
            out,
        } => cmd_evaluate(&fused, &clusters, &out),
        Command::Tune {
            clusters,
            candidates,
            space,
            budget,
            grid,
            config,
            best_model,
            mode,
            objective,
            report_clusters,
            out,
        } => cmd_tune(TuneArgs {
            global: &cli.global,
            clusters: &clusters,
            candidates: &candidates,
            space: &space,
            budget,
            grid,
            config: config.as_deref(),
            best_model: best_model.as_deref(),
            mode: &mode,
            objective,
            report_clusters: report_clusters.as_deref(),
            out: &out,
        }),
    }
}

/// Loads the optional stopword and word-vector overrides.
fn load_resources(global: &GlobalArgs) -> Result<RunResources> {
    let stopwords = match &global.stopwords {
        Some(path) => Some(
            StopwordSet::from_file(path)
                .with_context(|| format!("reading stopwords from {}", path.display()))?,
        ),
        None => None,
    };
    let word_vectors = match &global.word_vectors {
        Some(path) => Some(
            load_word_vectors::<f64>(path)
                .with_context(|| format!("reading word vectors from {}", path.display()))?,
        ),
        None => None,
    };
    Ok(RunResources {
        stopwords,
        word_vectors,
    })
}

fn cmd_validate(clusters: &Path, candidates: &Path) -> Result<ExitCode> {
    let report = validate_files(clusters, candidates)?;
    for problem in &report.problems {
        eprintln!("{problem}");
    }
    eprintln!(
        "validated {} clusters and {} candidates: {}",
        report.cluster_count,
        report.candidate_count,
        if report.is_clean() {
            "clean"
        } else {
            "problems found"
        },
    );
    println!(
        "{}",
        json!({
            "clusters": report.cluster_count,
            "candidates": report.candidate_count,
            "problems": report.problems.len(),
        })
    );
    Ok(if report.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_query(
    global: &GlobalArgs,
    clusters_path: &Path,
    cluster_id: &str,
    topics: usize,
    words: usize,
) -> Result<ExitCode> {
    let clusters = load_clusters(clusters_path)?;
    let cluster = clusters
        .iter()
        .find(|c| c.cluster_id == cluster_id)
        .with_context(|| {
            format!(
                "cluster {cluster_id:?} not found in {}",
                clusters_path.display()
            )
        })?;

    // The anchor model never enters query fitting; any id works here.
    let mut config = FusionConfig::with_best_model("unused", FusionMode::Concatenate);
    config.lda_topics = topics;
    config.lda_words_per_topic = words;
    config.seed = global.seed.unwrap_or(DEFAULT_SEED);
    config.validate()?;

    let resources = load_resources(global)?;
    let query = cluster_query(cluster, &config, &resources)?;
    eprintln!(
        "query for cluster {}: {} tokens ({} topics x {} words, seed {})",
        cluster.cluster_id,
        query.tokens.0.len(),
        query.topics,
        query.words_per_topic,
        config.seed,
    );
    println!("{}", query.tokens.join());
    Ok(ExitCode::SUCCESS)
}

fn cmd_fuse(
    global: &GlobalArgs,
    clusters_path: &Path,
    candidates_path: &Path,
    config_path: &Path,
    out_dir: &Path,
) -> Result<ExitCode> {
    let mut config = FusionConfig::from_file(config_path)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    let clusters = load_clusters(clusters_path)?;
    let candidates = load_candidates(candidates_path, &clusters)?;
    let resources = load_resources(global)?;

    let record = fuse_corpus(&clusters, &candidates, &config, &resources)?;
    write_run(&record, out_dir)?;

    for error in &record.errors {
        eprintln!("cluster {}: {}", error.cluster_id, error.message);
    }
    eprintln!(
        "fused {} of {} clusters into {}",
        record.fused.len(),
        record.cluster_count,
        out_dir.display(),
    );
    println!(
        "{}",
        json!({
            "clusters": record.cluster_count,
            "fused": record.fused.len(),
            "errors": record.errors.len(),
            "seed": record.seed,
            "aggregate": record.aggregate,
            "out_dir": out_dir.display().to_string(),
        })
    );
    Ok(if record.errors.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_evaluate(fused_path: &Path, clusters_path: &Path, out_path: &Path) -> Result<ExitCode> {
    let fused = load_fused(fused_path)?;
    let clusters = load_clusters(clusters_path)?;
    let report = evaluate_corpus(&fused, &clusters)?;

    let mut body = serde_json::to_vec_pretty(&report).expect("report serializes");
    body.push(b'\n');
    fs::write(out_path, &body).with_context(|| format!("writing {}", out_path.display()))?;

    eprintln!(
        "evaluated {} clusters ({} skipped without references); report in {}",
        report.evaluated,
        report.skipped,
        out_path.display(),
    );
    // F1 means in report column order: ROUGE-1, ROUGE-2, ROUGE-L.
    println!(
        "{}",
        json!({
            "rouge-1": report.means.rouge1.f1,
            "rouge-2": report.means.rouge2.f1,
            "rouge-l": report.means.rouge_l.f1,
        })
    );
    Ok(ExitCode::SUCCESS)
}

struct TuneArgs<'a> {
    global: &'a GlobalArgs,
    clusters: &'a Path,
    candidates: &'a Path,
    space: &'a Path,
    budget: usize,
    grid: bool,
    config: Option<&'a Path>,
    best_model: Option<&'a str>,
    mode: &'a str,
    objective: ObjectiveMetric,
    report_clusters: Option<&'a Path>,
    out: &'a Path,
}

fn cmd_tune(args: TuneArgs<'_>) -> Result<ExitCode> {
    let mut base = match (args.config, args.best_model) {
        (Some(path), None) => FusionConfig::from_file(path)?,
        (None, Some(id)) => FusionConfig::with_best_model(id, parse_mode(args.mode)?),
        (None, None) => bail!("either --config or --best-model is required"),
        (Some(_), Some(_)) => unreachable!("--config conflicts with --best-model"),
    };
    if let Some(seed) = args.global.seed {
        base.seed = seed;
    }
    let seed = base.seed;

    let space = SearchSpace::from_file(args.space)?;
    let clusters = load_clusters(args.clusters)?;
    let candidates = load_candidates(args.candidates, &clusters)?;
    let resources = load_resources(args.global)?;

    let evaluate = rouge_objective(&clusters, &candidates, &resources, args.objective);
    let outcome = if args.grid {
        grid_search(&base, &space, seed, evaluate)?
    } else {
        random_search(&base, &space, args.budget, seed, evaluate)?
    };

    let held_out = args
        .report_clusters
        .map_or(false, |path| !same_file(path, args.clusters));
    let warning = if held_out {
        None
    } else {
        Some("self-tuning: objectives were measured on the tuning split and are optimistic")
    };

    fs::create_dir_all(args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let log_path = args.out.join("trials.jsonl");
    write_trial_log(&outcome, &log_path, warning)?;
    let config_path = args.out.join("best_config.json");
    let mut body = serde_json::to_vec_pretty(&outcome.best_config).expect("config serializes");
    body.push(b'\n');
    fs::write(&config_path, &body)
        .with_context(|| format!("writing {}", config_path.display()))?;

    if let Some(warning) = warning {
        eprintln!("warning: {warning}");
    }
    eprintln!(
        "best trial {} of {}: objective {:.6}",
        outcome.best_index,
        outcome.trials.len(),
        outcome.best_objective,
    );
    for (name, value) in describe_best(&outcome, &space) {
        eprintln!("  {name} = {value}");
    }
    println!(
        "{}",
        json!({
            "trials": outcome.trials.len(),
            "best_index": outcome.best_index,
            "best_objective": outcome.best_objective,
            "best": describe_best(&outcome, &space),
            "log": log_path.display().to_string(),
            "config": config_path.display().to_string(),
        })
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_mode(mode: &str) -> Result<FusionMode> {
    match mode {
        "concatenate" => Ok(FusionMode::Concatenate),
        "select" => Ok(FusionMode::Select),
        other => bail!("unknown mode {other:?}; expected concatenate or select"),
    }
}

/// Path equality after canonicalization, falling back to literal equality
/// for paths that cannot be resolved.
fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}
