//! Command-line front end: chunking, clustering, filtering, selection,
//! entropy probes, planted benchmarks, and the full pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stage failure.

mod manifest;
mod oracle_setup;
mod pipeline;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use treefilter::chunking::{chunk_document, ChunkingConfig};
use treefilter::clustering::{build_tree, ClusteringConfig, Linkage};
use treefilter::estimator::IntervalConfig;
use treefilter::filter::{
    entropy_probe, run_filter, select_top_k, DecisionMode, FilterConfig, LeafPolicy,
};
use treefilter::jsonl::{
    read_chunks, read_embeddings, read_jsonl, read_jsonl_lenient, read_tree, write_jsonl,
    write_tree, DocRecord, DocScoreRecord, FilterSummary, SelectionRecord,
};
use treefilter::rng::derive_seed;
use treefilter::synthbench::{sweep, write_sweep_csv, PlantedSpec};

use manifest::{default_manifest_path, LedgerSummary, RunManifest};
use oracle_setup::build_oracle;
use pipeline::{run_pipeline, write_decisions, write_doc_scores, write_json, PipelineConfig};

#[derive(Parser)]
#[command(name = "treefilter", version, about = "Tree-based data filtering")]
struct Cli {
    /// Base seed for all randomized stages.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Log level: error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    /// Where to write the run manifest (default: next to the primary output).
    #[arg(long, global = true)]
    manifest_out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split documents into token-limited chunks.
    Chunk {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2048)]
        token_limit: u32,
        #[arg(long, default_value_t = 50)]
        min_tokens: u32,
    },
    /// Build the hierarchical cluster tree from embeddings.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out_tree: PathBuf,
        #[arg(long, default_value_t = 5)]
        rounds: u32,
        #[arg(long)]
        target_clusters: Option<usize>,
        #[arg(long, default_value = "centroid", value_parser = parse_linkage)]
        linkage: Linkage,
    },
    /// Classify every chunk by adaptively sampling the oracle over the tree.
    Filter {
        #[arg(long)]
        tree: PathBuf,
        /// Oracle config file (JSON).
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 100)]
        nmax: u64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value = "point", value_parser = parse_mode)]
        mode: DecisionMode,
        #[arg(long, default_value = "midpoint", value_parser = parse_leaf_policy)]
        leaf_policy: LeafPolicy,
        /// Per-chunk decisions (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Run summary JSON (also printed to stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Chunks file; enables document aggregation and remote oracles.
        #[arg(long)]
        chunks: Option<PathBuf>,
        /// Per-document scores output (requires --chunks).
        #[arg(long)]
        doc_scores: Option<PathBuf>,
    },
    /// Token-budgeted selection of the top-scored documents.
    Select {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        budget_tokens: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-level feedback-entropy diagnostic.
    ProbeEntropy {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long, default_value_t = 100)]
        clusters: usize,
        #[arg(long, default_value_t = 100)]
        samples: u64,
        #[arg(long)]
        out: PathBuf,
        /// Chunks file (needed for remote oracles).
        #[arg(long)]
        chunks: Option<PathBuf>,
    },
    /// Planted-tree Monte Carlo benchmark.
    Bench {
        /// Planted spec JSON: one object or an array (grid).
        #[arg(long)]
        spec: PathBuf,
        /// Filter config JSON: one object or an array (grid).
        #[arg(long)]
        cfg: PathBuf,
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        significance: f64,
    },
    /// Run chunk -> cluster -> filter -> select from one config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Re-run stages even when their outputs exist.
        #[arg(long)]
        force: bool,
    },
}

fn parse_linkage(s: &str) -> Result<Linkage, String> {
    match s {
        "single" => Ok(Linkage::Single),
        "centroid" => Ok(Linkage::Centroid),
        other => Err(format!("unknown linkage '{other}' (single|centroid)")),
    }
}

fn parse_mode(s: &str) -> Result<DecisionMode, String> {
    match s {
        "point" => Ok(DecisionMode::Point),
        "hoeffding" => Ok(DecisionMode::Hoeffding),
        "credible" => Ok(DecisionMode::Credible),
        other => Err(format!("unknown mode '{other}' (point|hoeffding|credible)")),
    }
}

fn parse_leaf_policy(s: &str) -> Result<LeafPolicy, String> {
    match s {
        "midpoint" => Ok(LeafPolicy::Midpoint),
        "discard" => Ok(LeafPolicy::Discard),
        other => Err(format!("unknown leaf policy '{other}' (midpoint|discard)")),
    }
}

/// Errors split by exit code: configuration (2) vs stage failure (3).
enum CliError {
    Config(anyhow::Error),
    Stage(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            CliError::Config(e) | CliError::Stage(e) => e,
        }
    }
}

fn config_err<T>(result: Result<T>) -> Result<T, CliError> {
    result.map_err(CliError::Config)
}

fn stage_err<T>(result: Result<T>) -> Result<T, CliError> {
    result.map_err(CliError::Stage)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli.log_level);
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            tracing::error!(error = %format!("{:#}", err.error()), "command failed");
            eprintln!("error: {:#}", err.error());
            ExitCode::from(err.code())
        }
    }
}

fn init_logging(level: &str) {
    use tracing_subscriber::EnvFilter;
    let filter = EnvFilter::try_new(level).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    // Each command returns its manifest plus the default manifest location.
    let (mut manifest, default_manifest) = match &cli.command {
        Command::Chunk {
            docs,
            out,
            token_limit,
            min_tokens,
        } => cmd_chunk(docs, out, *token_limit, *min_tokens)?,
        Command::Cluster {
            embeddings,
            out_tree,
            rounds,
            target_clusters,
            linkage,
        } => cmd_cluster(cli.seed, embeddings, out_tree, *rounds, *target_clusters, *linkage)?,
        Command::Filter {
            tree,
            oracle,
            alpha,
            beta,
            nmax,
            delta,
            mode,
            leaf_policy,
            out,
            summary,
            chunks,
            doc_scores,
        } => cmd_filter(FilterArgs {
            seed: cli.seed,
            tree,
            oracle,
            alpha: *alpha,
            beta: *beta,
            n_max: *nmax,
            delta: *delta,
            mode: *mode,
            leaf_policy: *leaf_policy,
            out,
            summary: summary.as_deref(),
            chunks: chunks.as_deref(),
            doc_scores: doc_scores.as_deref(),
        })?,
        Command::Select {
            scores,
            budget_tokens,
            out,
        } => cmd_select(scores, *budget_tokens, out)?,
        Command::ProbeEntropy {
            tree,
            oracle,
            clusters,
            samples,
            out,
            chunks,
        } => cmd_probe(cli.seed, tree, oracle, *clusters, *samples, out, chunks.as_deref())?,
        Command::Bench {
            spec,
            cfg,
            trials,
            out,
            significance,
        } => cmd_bench(spec, cfg, *trials, out, *significance)?,
        Command::Pipeline {
            config,
            out_dir,
            force,
        } => cmd_pipeline(config, out_dir, *force)?,
    };

    let manifest_path = cli.manifest_out.clone().unwrap_or(default_manifest);
    manifest.record_output(&manifest_path);
    stage_err(manifest.write(&manifest_path))?;
    Ok(())
}

fn cmd_chunk(
    docs: &Path,
    out: &Path,
    token_limit: u32,
    min_tokens: u32,
) -> Result<(RunManifest, PathBuf), CliError> {
    let cfg = ChunkingConfig {
        token_limit,
        min_tokens,
    };
    config_err(cfg.validate().map_err(|e| anyhow!("{e}")))?;
    let mut manifest = config_err(RunManifest::new("chunk", &cfg, 0))?;
    stage_err(manifest.record_input(docs))?;

    let started = Instant::now();
    let (records, skipped): (Vec<DocRecord>, usize) = stage_err(read_jsonl_lenient(docs).map_err(|e| anyhow!("{e}")))?;
    let mut chunks = Vec::new();
    for doc in &records {
        let (mut doc_chunks, dropped) = chunk_document(&doc.doc_id, &doc.text, &cfg);
        if dropped > 0 {
            tracing::debug!(doc = %doc.doc_id, dropped, "dropped short chunks");
        }
        chunks.append(&mut doc_chunks);
    }
    stage_err(write_jsonl(out, chunks.iter()).map_err(|e| anyhow!("{e}")))?;
    manifest.skipped_records = Some(skipped);
    manifest.record_timing("chunk", started.elapsed());
    manifest.record_output(out);
    tracing::info!(docs = records.len(), chunks = chunks.len(), "chunked corpus");
    Ok((manifest, default_manifest_path(out)))
}

fn cmd_cluster(
    seed: u64,
    embeddings: &Path,
    out_tree: &Path,
    rounds: u32,
    target_clusters: Option<usize>,
    linkage: Linkage,
) -> Result<(RunManifest, PathBuf), CliError> {
    let cfg = ClusteringConfig {
        max_rounds: rounds,
        target_cluster_count: target_clusters,
        linkage,
        seed,
    };
    config_err(cfg.validate().map_err(|e| anyhow!("{e}")))?;
    let mut manifest = config_err(RunManifest::new("cluster", &cfg, seed))?;
    stage_err(manifest.record_input(embeddings))?;

    let started = Instant::now();
    let vectors = stage_err(read_embeddings(embeddings).map_err(|e| anyhow!("{e}")))?;
    let set = stage_err(
        treefilter::corpus::EmbeddingSet::new(vectors).map_err(|e| anyhow!("{e}")),
    )?;
    let tree = stage_err(build_tree(&set, &cfg).map_err(|e| anyhow!("{e}")))?;
    stage_err(write_tree(out_tree, &tree).map_err(|e| anyhow!("{e}")))?;
    manifest.record_timing("cluster", started.elapsed());
    manifest.record_output(out_tree);
    tracing::info!(nodes = tree.len(), depth = tree.max_depth(), "built tree");
    Ok((manifest, default_manifest_path(out_tree)))
}

struct FilterArgs<'a> {
    seed: u64,
    tree: &'a Path,
    oracle: &'a Path,
    alpha: f64,
    beta: f64,
    n_max: u64,
    delta: f64,
    mode: DecisionMode,
    leaf_policy: LeafPolicy,
    out: &'a Path,
    summary: Option<&'a Path>,
    chunks: Option<&'a Path>,
    doc_scores: Option<&'a Path>,
}

fn cmd_filter(args: FilterArgs<'_>) -> Result<(RunManifest, PathBuf), CliError> {
    // flag validation before any file is touched
    if args.doc_scores.is_some() && args.chunks.is_none() {
        return Err(CliError::Config(anyhow!("--doc-scores requires --chunks")));
    }
    let provisional = FilterConfig {
        alpha: args.alpha,
        beta: args.beta,
        n_max: args.n_max,
        delta: args.delta,
        mode: args.mode,
        interval: IntervalConfig::uniform(6),
        leaf_policy: args.leaf_policy,
        seed: args.seed,
    };
    config_err(provisional.validate().map_err(|e| anyhow!("{e}")))?;

    let chunks = match args.chunks {
        Some(path) => Some(stage_err(read_chunks(path).map_err(|e| anyhow!("{e}")))?),
        None => None,
    };
    let (oracle, oracle_cfg) = config_err(build_oracle(args.oracle, chunks.as_deref()))?;
    let cfg = FilterConfig {
        alpha: args.alpha,
        beta: args.beta,
        n_max: args.n_max,
        delta: args.delta,
        mode: args.mode,
        interval: IntervalConfig {
            seed: derive_seed(args.seed, 0x1A7),
            ..IntervalConfig::uniform(oracle_cfg.levels)
        },
        leaf_policy: args.leaf_policy,
        seed: args.seed,
    };
    config_err(cfg.validate().map_err(|e| anyhow!("{e}")))?;
    let mut manifest = config_err(RunManifest::new("filter", &cfg, args.seed))?;
    stage_err(manifest.record_input(args.tree))?;
    stage_err(manifest.record_input(args.oracle))?;
    if let Some(path) = args.chunks {
        stage_err(manifest.record_input(path))?;
    }

    let started = Instant::now();
    let tree = stage_err(read_tree(args.tree).map_err(|e| anyhow!("{e}")))?;
    let outcome = stage_err(run_filter(&tree, &oracle, &cfg).map_err(|e| anyhow!("{e}")))?;
    stage_err(write_decisions(args.out, &outcome, &tree))?;
    manifest.record_output(args.out);

    let summary = FilterSummary {
        k: outcome.k,
        total_calls: outcome.ledger.total_calls,
        frac_evaluated: outcome.frac_evaluated(tree.corpus_size()),
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    if let Some(path) = args.summary {
        stage_err(write_json(path, &summary))?;
        manifest.record_output(path);
    }
    if let (Some(path), Some(chunks)) = (args.doc_scores, chunks) {
        let (corpus, _) = stage_err(
            treefilter::corpus::Corpus::from_chunks(chunks, 0).map_err(|e| anyhow!("{e}")),
        )?;
        stage_err(write_doc_scores(path, &outcome, &corpus))?;
        manifest.record_output(path);
    }
    manifest.ledger = Some(LedgerSummary {
        total_calls: outcome.ledger.total_calls,
        unique_chunks: outcome.ledger.unique_chunks,
        failures: outcome.ledger.failures,
    });
    manifest.record_timing("filter", started.elapsed());
    tracing::info!(k = outcome.k, calls = outcome.ledger.total_calls, "filtered corpus");
    Ok((manifest, default_manifest_path(args.out)))
}

fn cmd_select(
    scores: &Path,
    budget_tokens: u64,
    out: &Path,
) -> Result<(RunManifest, PathBuf), CliError> {
    if budget_tokens == 0 {
        return Err(CliError::Config(anyhow!("--budget-tokens must be positive")));
    }
    #[derive(Serialize)]
    struct SelectCfg {
        budget_tokens: u64,
    }
    let mut manifest = config_err(RunManifest::new(
        "select",
        &SelectCfg { budget_tokens },
        0,
    ))?;
    stage_err(manifest.record_input(scores))?;

    let started = Instant::now();
    let rows: Vec<DocScoreRecord> = stage_err(read_jsonl(scores).map_err(|e| anyhow!("{e}")))?;
    let score_map: BTreeMap<_, _> = rows.iter().map(|r| (r.doc_id.clone(), r.score)).collect();
    let token_map: BTreeMap<_, _> = rows
        .iter()
        .map(|r| (r.doc_id.clone(), r.token_count))
        .collect();
    let picked = stage_err(
        select_top_k(&score_map, &token_map, budget_tokens).map_err(|e| anyhow!("{e}")),
    )?;
    let records: Vec<SelectionRecord> = picked
        .iter()
        .enumerate()
        .map(|(rank, doc)| SelectionRecord {
            rank,
            doc_id: doc.clone(),
            score: score_map[doc],
            token_count: token_map[doc],
        })
        .collect();
    stage_err(write_jsonl(out, records.iter()).map_err(|e| anyhow!("{e}")))?;
    manifest.record_timing("select", started.elapsed());
    manifest.record_output(out);
    tracing::info!(selected = records.len(), "selected documents");
    Ok((manifest, default_manifest_path(out)))
}

#[derive(Serialize)]
struct ProbeOutput {
    levels: Vec<ProbeLevel>,
}

#[derive(Serialize)]
struct ProbeLevel {
    depth: usize,
    mean_entropy: Option<f64>,
    node_entropies: Vec<(treefilter::NodeId, f64)>,
}

fn cmd_probe(
    seed: u64,
    tree_path: &Path,
    oracle_path: &Path,
    clusters: usize,
    samples: u64,
    out: &Path,
    chunks: Option<&Path>,
) -> Result<(RunManifest, PathBuf), CliError> {
    #[derive(Serialize)]
    struct ProbeCfg {
        clusters: usize,
        samples: u64,
    }
    let mut manifest = config_err(RunManifest::new(
        "probe-entropy",
        &ProbeCfg { clusters, samples },
        seed,
    ))?;
    stage_err(manifest.record_input(tree_path))?;
    stage_err(manifest.record_input(oracle_path))?;
    let chunk_records = match chunks {
        Some(path) => Some(stage_err(read_chunks(path).map_err(|e| anyhow!("{e}")))?),
        None => None,
    };
    let (oracle, _) = config_err(build_oracle(oracle_path, chunk_records.as_deref()))?;

    let started = Instant::now();
    let tree = stage_err(read_tree(tree_path).map_err(|e| anyhow!("{e}")))?;
    let levels = stage_err(
        entropy_probe(&tree, &oracle, clusters, samples, seed).map_err(|e| anyhow!("{e}")),
    )?;
    let ledger = oracle.ledger();
    manifest.ledger = Some(LedgerSummary {
        total_calls: ledger.total_calls,
        unique_chunks: ledger.unique_chunks,
        failures: ledger.failures,
    });
    let output = ProbeOutput {
        levels: levels
            .iter()
            .map(|l| ProbeLevel {
                depth: l.depth,
                mean_entropy: l.mean(),
                node_entropies: l.node_entropies.clone(),
            })
            .collect(),
    };
    stage_err(write_json(out, &output))?;
    manifest.record_timing("probe", started.elapsed());
    manifest.record_output(out);
    Ok((manifest, default_manifest_path(out)))
}

/// Bench config file entry: thresholds plus optional knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchCfg {
    alpha: f64,
    beta: f64,
    #[serde(default = "bench_default_n_max")]
    n_max: u64,
    #[serde(default = "bench_default_delta")]
    delta: f64,
    #[serde(default = "bench_default_mode")]
    mode: DecisionMode,
    #[serde(default)]
    seed: u64,
}

fn bench_default_n_max() -> u64 {
    100
}
fn bench_default_delta() -> f64 {
    0.05
}
fn bench_default_mode() -> DecisionMode {
    DecisionMode::Point
}

impl BenchCfg {
    fn to_filter_config(&self) -> FilterConfig {
        FilterConfig {
            alpha: self.alpha,
            beta: self.beta,
            n_max: self.n_max,
            delta: self.delta,
            mode: self.mode,
            interval: IntervalConfig {
                seed: derive_seed(self.seed, 0x1A7),
                ..IntervalConfig::uniform(2)
            },
            leaf_policy: LeafPolicy::Midpoint,
            seed: self.seed,
        }
    }
}

/// Reads a JSON file containing either one object or an array of objects.
fn one_or_many<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .map(|v| serde_json::from_value(v).map_err(Into::into))
            .collect(),
        other => Ok(vec![serde_json::from_value(other)?]),
    }
}

fn cmd_bench(
    spec_path: &Path,
    cfg_path: &Path,
    trials: u64,
    out: &Path,
    significance: f64,
) -> Result<(RunManifest, PathBuf), CliError> {
    let specs: Vec<PlantedSpec> = config_err(one_or_many(spec_path))?;
    let bench_cfgs: Vec<BenchCfg> = config_err(one_or_many(cfg_path))?;
    let cfgs: Vec<FilterConfig> = bench_cfgs.iter().map(BenchCfg::to_filter_config).collect();
    for spec in &specs {
        config_err(spec.validate().map_err(|e| anyhow!("{e}")))?;
    }
    for cfg in &cfgs {
        config_err(cfg.validate().map_err(|e| anyhow!("{e}")))?;
    }
    if trials == 0 {
        return Err(CliError::Config(anyhow!("--trials must be positive")));
    }

    #[derive(Serialize)]
    struct BenchManifestCfg<'a> {
        specs: &'a [PlantedSpec],
        cfgs: &'a [BenchCfg],
        trials: u64,
        significance: f64,
    }
    let mut manifest = config_err(RunManifest::new(
        "bench",
        &BenchManifestCfg {
            specs: &specs,
            cfgs: &bench_cfgs,
            trials,
            significance,
        },
        specs.first().map(|s| s.seed).unwrap_or(0),
    ))?;
    config_err(manifest.record_input(spec_path))?;
    config_err(manifest.record_input(cfg_path))?;

    let started = Instant::now();
    let rows = stage_err(sweep(&specs, &cfgs, trials, significance).map_err(|e| anyhow!("{e}")))?;
    let file = stage_err(std::fs::File::create(out).map_err(|e| anyhow!("{e}")))?;
    stage_err(write_sweep_csv(&rows, file).map_err(|e| anyhow!("{e}")))?;
    manifest.record_timing("bench", started.elapsed());
    manifest.record_output(out);
    tracing::info!(cells = rows.len(), trials, "benchmark complete");
    Ok((manifest, default_manifest_path(out)))
}

fn cmd_pipeline(
    config: &Path,
    out_dir: &Path,
    force: bool,
) -> Result<(RunManifest, PathBuf), CliError> {
    let (cfg, base) = config_err(PipelineConfig::load(config))?;
    config_err(cfg.validate())?;
    let manifest = stage_err(run_pipeline(&cfg, &base, out_dir, force))?;
    Ok((manifest, out_dir.join("manifest.json")))
}
