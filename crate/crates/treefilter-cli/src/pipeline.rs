//! The multi-stage pipeline: chunk -> cluster -> filter -> select.
//!
//! Stages communicate through line-delimited JSON artifacts in the output
//! directory and are individually resumable: a stage whose outputs already
//! exist is skipped unless `--force` is given.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use treefilter::chunking::{chunk_document, ChunkingConfig};
use treefilter::clustering::{build_tree, ClusteringConfig, Linkage};
use treefilter::corpus::{Corpus, EmbeddingSet};
use treefilter::estimator::IntervalConfig;
use treefilter::filter::{
    aggregate_documents, run_filter, select_top_k, DecisionMode, FilterConfig, FilterOutcome,
    LeafPolicy,
};
use treefilter::jsonl::{
    read_chunks, read_embeddings, read_jsonl, read_jsonl_lenient, read_tree, write_jsonl,
    write_tree, DecisionRecord, DocRecord, DocScoreRecord, FilterSummary, SelectionRecord,
};
use treefilter::rng::derive_seed;
use treefilter::tree::ClusterTree;

use crate::manifest::{LedgerSummary, RunManifest};
use crate::oracle_setup::build_oracle;

/// Pipeline configuration file. Input paths are resolved relative to the
/// directory containing the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Raw documents; omit to skip the chunk stage and cluster the
    /// embeddings file as-is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub docs: Option<PathBuf>,
    pub embeddings: PathBuf,
    /// Oracle config file (see `OracleConfig`); required when filtering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<PathBuf>,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    #[serde(default)]
    pub clustering: ClusteringStage,
    /// Omit to stop after the cluster stage (tree file only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select: Option<SelectStage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringStage {
    pub max_rounds: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_cluster_count: Option<usize>,
    pub linkage: Linkage,
}

impl Default for ClusteringStage {
    fn default() -> Self {
        ClusteringStage {
            max_rounds: 5,
            target_cluster_count: None,
            linkage: Linkage::Centroid,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterStage {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_mode")]
    pub mode: DecisionMode,
    #[serde(default = "default_leaf_policy")]
    pub leaf_policy: LeafPolicy,
}

fn default_n_max() -> u64 {
    100
}
fn default_delta() -> f64 {
    0.05
}
fn default_mode() -> DecisionMode {
    DecisionMode::Point
}
fn default_leaf_policy() -> LeafPolicy {
    LeafPolicy::Midpoint
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectStage {
    pub budget_tokens: u64,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((cfg, base))
    }

    /// Parameter validation; runs before any stage work.
    pub fn validate(&self) -> Result<()> {
        self.chunking.validate()?;
        if self.clustering.max_rounds == 0 {
            bail!("clustering.max_rounds must be >= 1");
        }
        if let Some(filter) = &self.filter {
            self.filter_config(filter, 0, 6).validate()?;
            if self.oracle.is_none() {
                bail!("filter stage needs an oracle config");
            }
        }
        if let Some(select) = &self.select {
            if self.filter.is_none() || self.docs.is_none() {
                bail!("select stage needs the filter stage and a docs file");
            }
            if select.budget_tokens == 0 {
                bail!("select.budget_tokens must be positive");
            }
        }
        Ok(())
    }

    pub fn filter_config(&self, filter: &FilterStage, seed: u64, oracle_levels: u32) -> FilterConfig {
        FilterConfig {
            alpha: filter.alpha,
            beta: filter.beta,
            n_max: filter.n_max,
            delta: filter.delta,
            mode: filter.mode,
            interval: IntervalConfig {
                seed: derive_seed(seed, 0x1A7),
                ..IntervalConfig::uniform(oracle_levels)
            },
            leaf_policy: filter.leaf_policy,
            seed,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn outputs_exist(paths: &[&Path]) -> bool {
    paths.iter().all(|p| p.exists())
}

/// Runs all configured stages. Returns the manifest (not yet written).
pub fn run_pipeline(
    cfg: &PipelineConfig,
    base: &Path,
    out_dir: &Path,
    force: bool,
) -> Result<RunManifest> {
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new("pipeline", cfg, cfg.seed)?;

    let docs_path = cfg.docs.as_ref().map(|p| resolve(base, p));
    let embeddings_path = resolve(base, &cfg.embeddings);
    let oracle_path = cfg.oracle.as_ref().map(|p| resolve(base, p));
    let chunks_out = out_dir.join("chunks.jsonl");
    let tree_out = out_dir.join("tree.json");
    let decisions_out = out_dir.join("decisions.jsonl");
    let summary_out = out_dir.join("summary.json");
    let doc_scores_out = out_dir.join("doc_scores.jsonl");
    let selection_out = out_dir.join("selection.jsonl");

    if let Some(path) = &docs_path {
        manifest.record_input(path)?;
    }
    manifest.record_input(&embeddings_path)?;
    if let Some(path) = &oracle_path {
        manifest.record_input(path)?;
    }

    // --- chunk ---
    if let Some(docs_path) = &docs_path {
        let started = Instant::now();
        if force || !outputs_exist(&[&chunks_out]) {
            let (docs, skipped): (Vec<DocRecord>, usize) = read_jsonl_lenient(docs_path)?;
            manifest.skipped_records = Some(skipped);
            let mut chunks = Vec::new();
            for doc in &docs {
                let (mut doc_chunks, dropped) =
                    chunk_document(&doc.doc_id, &doc.text, &cfg.chunking);
                if dropped > 0 {
                    tracing::debug!(doc = %doc.doc_id, dropped, "dropped short chunks");
                }
                chunks.append(&mut doc_chunks);
            }
            write_jsonl(&chunks_out, chunks.iter())?;
            tracing::info!(docs = docs.len(), chunks = chunks.len(), "chunk stage done");
        } else {
            tracing::info!("chunk stage skipped (output exists)");
        }
        manifest.record_timing("chunk", started.elapsed());
        manifest.record_output(&chunks_out);
    }

    // --- cluster ---
    let started = Instant::now();
    if force || !outputs_exist(&[&tree_out]) {
        let mut embeddings = read_embeddings(&embeddings_path)?;
        if docs_path.is_some() {
            // keep only embeddings for chunks that survived chunking
            let chunks = read_chunks(&chunks_out)?;
            let known: std::collections::BTreeSet<_> =
                chunks.iter().map(|c| c.chunk_id.clone()).collect();
            embeddings.retain(|e| known.contains(&e.chunk_id));
        }
        if embeddings.is_empty() {
            bail!("no embeddings match the chunked corpus");
        }
        let set = EmbeddingSet::new(embeddings)?;
        let clustering = ClusteringConfig {
            max_rounds: cfg.clustering.max_rounds,
            target_cluster_count: cfg.clustering.target_cluster_count,
            linkage: cfg.clustering.linkage,
            seed: derive_seed(cfg.seed, 1),
        };
        let tree = build_tree(&set, &clustering)?;
        write_tree(&tree_out, &tree)?;
        tracing::info!(
            nodes = tree.len(),
            depth = tree.max_depth(),
            "cluster stage done"
        );
    } else {
        tracing::info!("cluster stage skipped (output exists)");
    }
    manifest.record_timing("cluster", started.elapsed());
    manifest.record_output(&tree_out);

    // --- filter + aggregate ---
    let Some(filter) = &cfg.filter else {
        return Ok(manifest);
    };
    let oracle_path = oracle_path.expect("validated: filter stage has an oracle");
    let started = Instant::now();
    let has_docs = docs_path.is_some();
    let mut filter_outputs: Vec<&Path> = vec![&decisions_out, &summary_out];
    if has_docs {
        filter_outputs.push(&doc_scores_out);
    }
    if force || !outputs_exist(&filter_outputs) {
        let tree = read_tree(&tree_out)?;
        let chunks = if has_docs {
            Some(read_chunks(&chunks_out)?)
        } else {
            None
        };
        let (oracle, _) = build_oracle(&oracle_path, chunks.as_deref())?;
        let filter_cfg = cfg.filter_config(filter, derive_seed(cfg.seed, 2), oracle.levels());
        let outcome = run_filter(&tree, &oracle, &filter_cfg)?;
        write_decisions(&decisions_out, &outcome, &tree)?;
        let summary = FilterSummary {
            k: outcome.k,
            total_calls: outcome.ledger.total_calls,
            frac_evaluated: outcome.frac_evaluated(tree.corpus_size()),
        };
        write_json(&summary_out, &summary)?;
        manifest.ledger = Some(LedgerSummary {
            total_calls: outcome.ledger.total_calls,
            unique_chunks: outcome.ledger.unique_chunks,
            failures: outcome.ledger.failures,
        });

        if let Some(chunks) = chunks {
            let (corpus, _) = Corpus::from_chunks(chunks, 0)
                .map_err(|e| anyhow::anyhow!("building corpus: {e}"))?;
            write_doc_scores(&doc_scores_out, &outcome, &corpus)?;
        }
        tracing::info!(
            k = outcome.k,
            calls = outcome.ledger.total_calls,
            "filter stage done"
        );
    } else {
        tracing::info!("filter stage skipped (outputs exist)");
    }
    manifest.record_timing("filter", started.elapsed());
    manifest.record_output(&decisions_out);
    manifest.record_output(&summary_out);
    if has_docs {
        manifest.record_output(&doc_scores_out);
    }

    // --- select ---
    if let Some(select) = &cfg.select {
        let started = Instant::now();
        if force || !outputs_exist(&[&selection_out]) {
            let rows: Vec<DocScoreRecord> = read_jsonl(&doc_scores_out)?;
            let scores: BTreeMap<_, _> =
                rows.iter().map(|r| (r.doc_id.clone(), r.score)).collect();
            let tokens: BTreeMap<_, _> = rows
                .iter()
                .map(|r| (r.doc_id.clone(), r.token_count))
                .collect();
            let picked = select_top_k(&scores, &tokens, select.budget_tokens)?;
            let records: Vec<SelectionRecord> = picked
                .iter()
                .enumerate()
                .map(|(rank, doc)| SelectionRecord {
                    rank,
                    doc_id: doc.clone(),
                    score: scores[doc],
                    token_count: tokens[doc],
                })
                .collect();
            write_jsonl(&selection_out, records.iter())?;
            tracing::info!(selected = records.len(), "select stage done");
        } else {
            tracing::info!("select stage skipped (output exists)");
        }
        manifest.record_timing("select", started.elapsed());
        manifest.record_output(&selection_out);
    }

    Ok(manifest)
}

/// Decision records in ascending chunk order (deterministic artifacts).
pub fn write_decisions(path: &Path, outcome: &FilterOutcome, tree: &ClusterTree) -> Result<()> {
    let mut records: Vec<DecisionRecord> = Vec::with_capacity(outcome.chunk_scores.len());
    for entry in &outcome.cut {
        for chunk in tree
            .leaves(entry.node_id)
            .map_err(|e| anyhow::anyhow!("{e}"))?
        {
            records.push(DecisionRecord {
                chunk_id: chunk.clone(),
                decision: entry.decision,
                score: entry.estimate.mean,
                node_id: entry.node_id,
            });
        }
    }
    records.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
    write_jsonl(path, records.iter())?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    std::fs::write(path, body)?;
    Ok(())
}

pub fn write_doc_scores(path: &Path, outcome: &FilterOutcome, corpus: &Corpus) -> Result<()> {
    let docs = aggregate_documents(outcome, corpus);
    let records: Vec<DocScoreRecord> = docs
        .scores
        .iter()
        .map(|(doc_id, &score)| {
            let token_count = corpus
                .document(doc_id)
                .map(|d| {
                    d.chunk_ids
                        .iter()
                        .filter_map(|c| corpus.chunk(c))
                        .map(|c| c.token_count as u64)
                        .sum()
                })
                .unwrap_or(0);
            DocScoreRecord {
                doc_id: doc_id.clone(),
                score,
                token_count,
            }
        })
        .collect();
    if !docs.skipped.is_empty() {
        tracing::warn!(skipped = docs.skipped.len(), "documents with no scored chunks");
    }
    write_jsonl(path, records.iter())?;
    Ok(())
}
