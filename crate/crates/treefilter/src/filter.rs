//! The greedy subtree-classification engine.
//!
//! Starting at the root, each active node's quality is estimated from at
//! most `n_max` uniformly sampled leaves. Nodes whose estimate clears the
//! keep threshold `1 - beta` (or falls under the discard threshold `alpha`)
//! classify their whole subtree; everything in between splits into its
//! children. The classified nodes form a cut of the tree, every chunk gets
//! the mean of the node that classified it, and the oracle pays at most
//! `2 * K * n_max` evaluations for a cut of complexity `K`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::corpus::{ChunkId, Corpus, DocId};
use crate::error::{Error, Result};
use crate::estimator::{
    credible_interval, delta_schedule, feedback_entropy, hoeffding_halfwidth, IntervalConfig,
    NodeEstimate,
};
use crate::oracle::{MemoizedOracle, QueryLedger};
use crate::rng::seeded_rng;
use crate::tree::{ClusterTree, Cut, NodeId};

/// How a node estimate is turned into keep/discard/split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    /// Thresholds applied directly to the empirical mean.
    Point,
    /// Thresholds must clear an anytime Hoeffding half-width.
    Hoeffding,
    /// Thresholds applied to a Dirichlet-posterior credible interval.
    Credible,
}

/// Resolution for a leaf whose exact score still falls strictly between the
/// thresholds (possible only with non-binary scores).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafPolicy {
    /// Keep iff the score is at least the threshold midpoint `(alpha + 1 - beta) / 2`.
    Midpoint,
    /// Always discard.
    Discard,
}

/// Filter parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    pub alpha: f64,
    pub beta: f64,
    pub n_max: u64,
    pub delta: f64,
    pub mode: DecisionMode,
    pub interval: IntervalConfig,
    pub leaf_policy: LeafPolicy,
    pub seed: u64,
}

impl FilterConfig {
    pub fn new(alpha: f64, beta: f64) -> Self {
        FilterConfig {
            alpha,
            beta,
            n_max: 100,
            delta: 0.05,
            mode: DecisionMode::Point,
            interval: IntervalConfig::default(),
            leaf_policy: LeafPolicy::Midpoint,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) || !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(
                "alpha and beta must lie in [0, 1)".into(),
            ));
        }
        if self.alpha >= 1.0 - self.beta {
            return Err(Error::InvalidParameter(
                "thresholds must satisfy alpha < 1 - beta".into(),
            ));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter("delta outside (0, 1)".into()));
        }
        if self.mode == DecisionMode::Credible {
            self.interval.validate()?;
        }
        Ok(())
    }
}

/// Classification of a whole subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Keep,
    Discard,
}

/// Outcome of evaluating one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Discard,
    Split,
}

/// A classified node of the final cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutEntry {
    pub node_id: NodeId,
    pub decision: Decision,
    pub estimate: NodeEstimate,
}

/// The full result of a filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub keep_chunks: BTreeSet<ChunkId>,
    pub discard_chunks: BTreeSet<ChunkId>,
    /// Cut nodes in classification order.
    pub cut: Vec<CutEntry>,
    /// Score of every chunk: the estimated mean of the node that classified it.
    pub chunk_scores: BTreeMap<ChunkId, f64>,
    /// Cut complexity `K`.
    pub k: usize,
    /// Oracle usage during this run.
    pub ledger: QueryLedger,
    /// Nodes in evaluation order (`evaluation_order[i]` was evaluation `i+1`).
    pub evaluation_order: Vec<NodeId>,
}

impl FilterOutcome {
    pub fn cut_nodes(&self) -> Cut {
        Cut {
            node_ids: self.cut.iter().map(|e| e.node_id).collect(),
        }
    }

    /// Fraction of the corpus the oracle actually evaluated.
    pub fn frac_evaluated(&self, corpus_size: usize) -> f64 {
        if corpus_size == 0 {
            0.0
        } else {
            self.ledger.unique_chunks as f64 / corpus_size as f64
        }
    }
}

/// Uniformly samples leaves under a node, without replacement.
///
/// Returns all leaves (exhaustive) when the subtree holds at most `n_max`
/// chunks; otherwise exactly `n_max` distinct chunks drawn from a generator
/// derived from `(seed, node_id)`. Sampled ids are reported in canonical
/// leaf order, so identical seeds reproduce identical samples.
pub fn sample_leaves(
    tree: &ClusterTree,
    node_id: NodeId,
    n_max: u64,
    seed: u64,
) -> Result<(Vec<ChunkId>, bool)> {
    let leaves = tree.leaves(node_id)?;
    if leaves.len() as u64 <= n_max {
        return Ok((leaves.to_vec(), true));
    }
    let mut rng = seeded_rng(seed, node_id.0 as u64);
    let mut picks = rand::seq::index::sample(&mut rng, leaves.len(), n_max as usize).into_vec();
    picks.sort_unstable();
    Ok((picks.into_iter().map(|i| leaves[i].clone()).collect(), false))
}

/// Applies the configured decision rule to a node estimate.
///
/// `eval_index` is the 1-based position of this evaluation in the run; the
/// Hoeffding mode widens its interval according to the per-evaluation
/// confidence schedule. An exhaustive estimate is exact and always uses the
/// point rule.
pub fn decide(est: &NodeEstimate, cfg: &FilterConfig, eval_index: u64) -> Result<Verdict> {
    let keep_at = 1.0 - cfg.beta;
    let point = |mean: f64| {
        if mean >= keep_at {
            Verdict::Keep
        } else if mean <= cfg.alpha {
            Verdict::Discard
        } else {
            Verdict::Split
        }
    };
    if est.exhaustive {
        return Ok(point(est.mean));
    }
    match cfg.mode {
        DecisionMode::Point => Ok(point(est.mean)),
        DecisionMode::Hoeffding => {
            let width =
                hoeffding_halfwidth(est.n_samples, delta_schedule(eval_index, cfg.delta)?)?;
            Ok(if est.mean - width >= keep_at {
                Verdict::Keep
            } else if est.mean + width <= cfg.alpha {
                Verdict::Discard
            } else {
                Verdict::Split
            })
        }
        DecisionMode::Credible => {
            let (lo, hi) = credible_interval(est, &cfg.interval)?;
            Ok(if lo >= keep_at {
                Verdict::Keep
            } else if hi <= cfg.alpha {
                Verdict::Discard
            } else {
                Verdict::Split
            })
        }
    }
}

/// Runs the greedy filtering loop over a pruned tree.
///
/// Active nodes are processed FIFO starting from the root; a split enqueues
/// the children in ascending node id. A leaf can never split: its estimate
/// is exact whenever it fits the budget, and an in-between exact score is
/// resolved by the leaf policy.
pub fn run_filter(
    tree: &ClusterTree,
    oracle: &MemoizedOracle,
    cfg: &FilterConfig,
) -> Result<FilterOutcome> {
    cfg.validate()?;
    if cfg.mode == DecisionMode::Credible
        && cfg.interval.prior.len() != oracle.levels() as usize
    {
        return Err(Error::InvalidParameter(format!(
            "interval prior has {} entries but the oracle reports {} levels",
            cfg.interval.prior.len(),
            oracle.levels()
        )));
    }

    let baseline = oracle.ledger();
    let mut queue: VecDeque<NodeId> = VecDeque::new();
    queue.push_back(tree.root_id());
    let mut eval_index = 0u64;
    let mut evaluation_order = Vec::new();
    let mut cut = Vec::new();

    while let Some(node_id) = queue.pop_front() {
        eval_index += 1;
        evaluation_order.push(node_id);
        let (sample, exhaustive) = sample_leaves(tree, node_id, cfg.n_max, cfg.seed)?;
        let scores = oracle.evaluate_batch(&sample, node_id)?;
        let est = NodeEstimate::from_scores(node_id, &scores, oracle.levels(), exhaustive)?;
        let node = tree.node(node_id)?;
        let mut verdict = decide(&est, cfg, eval_index)?;
        if verdict == Verdict::Split && node.is_leaf() {
            verdict = match cfg.leaf_policy {
                LeafPolicy::Midpoint => {
                    if est.mean >= (cfg.alpha + 1.0 - cfg.beta) / 2.0 {
                        Verdict::Keep
                    } else {
                        Verdict::Discard
                    }
                }
                LeafPolicy::Discard => Verdict::Discard,
            };
        }
        tracing::debug!(
            node = node_id.0,
            eval_index,
            mean = est.mean,
            n_samples = est.n_samples,
            exhaustive,
            verdict = ?verdict,
            "node evaluated"
        );
        match verdict {
            Verdict::Split => {
                let mut children = node.child_ids.clone();
                children.sort_unstable();
                queue.extend(children);
            }
            Verdict::Keep | Verdict::Discard => {
                let decision = if verdict == Verdict::Keep {
                    Decision::Keep
                } else {
                    Decision::Discard
                };
                cut.push(CutEntry {
                    node_id,
                    decision,
                    estimate: est,
                });
            }
        }
    }

    let mut keep_chunks = BTreeSet::new();
    let mut discard_chunks = BTreeSet::new();
    let mut chunk_scores = BTreeMap::new();
    for entry in &cut {
        let leaves = tree.leaves(entry.node_id)?;
        for chunk in leaves {
            chunk_scores.insert(chunk.clone(), entry.estimate.mean);
            match entry.decision {
                Decision::Keep => keep_chunks.insert(chunk.clone()),
                Decision::Discard => discard_chunks.insert(chunk.clone()),
            };
        }
    }
    debug_assert_eq!(
        keep_chunks.len() + discard_chunks.len(),
        tree.corpus_size(),
        "cut must partition the corpus"
    );

    let k = cut.len();
    Ok(FilterOutcome {
        keep_chunks,
        discard_chunks,
        k,
        cut,
        chunk_scores,
        ledger: oracle.ledger().delta_since(&baseline),
        evaluation_order,
    })
}

/// Per-document aggregation of chunk scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScores {
    /// Unweighted mean of each document's chunk scores.
    pub scores: BTreeMap<DocId, f64>,
    /// Documents with no scored chunks (all dropped at ingestion).
    pub skipped: Vec<DocId>,
}

/// Averages chunk scores up to their documents.
pub fn aggregate_documents(outcome: &FilterOutcome, corpus: &Corpus) -> DocumentScores {
    let mut scores = BTreeMap::new();
    let mut skipped = Vec::new();
    for doc in corpus.documents() {
        let vals: Vec<f64> = doc
            .chunk_ids
            .iter()
            .filter_map(|c| outcome.chunk_scores.get(c).copied())
            .collect();
        if vals.is_empty() {
            skipped.push(doc.doc_id.clone());
        } else {
            scores.insert(
                doc.doc_id.clone(),
                vals.iter().sum::<f64>() / vals.len() as f64,
            );
        }
    }
    DocumentScores { scores, skipped }
}

/// Greedy token-budgeted selection of the highest-scored documents.
///
/// Documents are ranked by score descending (ties to the lower doc id) and
/// the ranked prefix is taken until the next document would exceed the
/// budget.
pub fn select_top_k(
    doc_scores: &BTreeMap<DocId, f64>,
    token_counts: &BTreeMap<DocId, u64>,
    token_budget: u64,
) -> Result<Vec<DocId>> {
    if token_budget == 0 {
        return Err(Error::InvalidParameter("token budget must be positive".into()));
    }
    let mut ranked: Vec<(&DocId, f64)> = doc_scores.iter().map(|(d, &s)| (d, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut selected = Vec::new();
    let mut used = 0u64;
    for (doc, _) in ranked {
        let tokens = *token_counts
            .get(doc)
            .ok_or_else(|| Error::InvalidParameter(format!("no token count for doc {doc}")))?;
        if used + tokens > token_budget {
            break;
        }
        used += tokens;
        selected.push(doc.clone());
    }
    Ok(selected)
}

/// Entropies of the oracle feedback for the sampled nodes of one tree level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelEntropy {
    pub depth: usize,
    /// `(node, entropy in bits)` for each probed node, ascending by node id.
    pub node_entropies: Vec<(NodeId, f64)>,
}

impl LevelEntropy {
    pub fn mean(&self) -> Option<f64> {
        if self.node_entropies.is_empty() {
            return None;
        }
        Some(
            self.node_entropies.iter().map(|(_, h)| h).sum::<f64>()
                / self.node_entropies.len() as f64,
        )
    }
}

/// Diagnostic probe: per tree level, sample nodes, sample leaves within each
/// node, and report the Shannon entropy of the ordinal feedback histogram.
///
/// Small levels and small nodes are covered exhaustively. Requires an
/// ordinal oracle (failures are folded into level 0).
pub fn entropy_probe(
    tree: &ClusterTree,
    oracle: &MemoizedOracle,
    per_level_clusters: usize,
    per_cluster_samples: u64,
    seed: u64,
) -> Result<Vec<LevelEntropy>> {
    if per_level_clusters == 0 || per_cluster_samples == 0 {
        return Err(Error::InvalidParameter(
            "probe sizes must be positive".into(),
        ));
    }
    let mut levels = Vec::new();
    for depth in 0..=tree.max_depth() {
        let nodes = tree.nodes_at_depth(depth);
        let chosen: Vec<NodeId> = if nodes.len() <= per_level_clusters {
            nodes
        } else {
            let mut rng = seeded_rng(seed, 0x9_0000_0000u64 + depth as u64);
            let mut picks =
                rand::seq::index::sample(&mut rng, nodes.len(), per_level_clusters).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| nodes[i]).collect()
        };
        let mut node_entropies = Vec::with_capacity(chosen.len());
        for node_id in chosen {
            let (sample, _) = sample_leaves(tree, node_id, per_cluster_samples, seed)?;
            let scores = oracle.evaluate_batch(&sample, node_id)?;
            let mut counts = vec![0u64; oracle.levels() as usize];
            for score in &scores {
                match score.ordinal_level() {
                    Some(level) => counts[level.max(0) as usize] += 1,
                    None => {
                        return Err(Error::InvalidParameter(
                            "entropy probe requires an ordinal oracle".into(),
                        ))
                    }
                }
            }
            node_entropies.push((node_id, feedback_entropy(&counts)?));
        }
        levels.push(LevelEntropy {
            depth,
            node_entropies,
        });
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::TableOracle;
    use crate::tree::TreeBuilder;

    fn cid(s: &str) -> ChunkId {
        s.into()
    }

    /// The eight-leaf reference tree: root with four subtree children
    /// holding {x1,x2,x3}, {x4}, {x5,x6}, {x7,x8}.
    fn reference_tree() -> (ClusterTree, Vec<(ChunkId, bool)>) {
        let mut b = TreeBuilder::new();
        let x: Vec<NodeId> = (1..=8)
            .map(|i| b.leaf(vec![cid(&format!("x{i}"))]))
            .collect();
        let n1 = b.internal(vec![x[0], x[1], x[2]]).unwrap();
        // n2 is the leaf x4 itself
        let n3 = b.internal(vec![x[4], x[5]]).unwrap();
        let n4 = b.internal(vec![x[6], x[7]]).unwrap();
        let root = b.internal(vec![n1, x[3], n3, n4]).unwrap();
        let tree = b.build(root).unwrap();
        let labels = vec![
            (cid("x1"), true),
            (cid("x2"), false),
            (cid("x3"), false),
            (cid("x4"), false),
            (cid("x5"), false),
            (cid("x6"), false),
            (cid("x7"), true),
            (cid("x8"), true),
        ];
        (tree, labels)
    }

    #[test]
    fn reference_tree_filtering() {
        let (tree, labels) = reference_tree();
        let oracle = MemoizedOracle::new(TableOracle::from_binary_labels(labels));
        let cfg = FilterConfig::new(1.0 / 3.0, 0.0);
        let outcome = run_filter(&tree, &oracle, &cfg).unwrap();

        assert_eq!(outcome.k, 4);
        let decisions: Vec<Decision> = outcome.cut.iter().map(|e| e.decision).collect();
        assert_eq!(
            decisions,
            vec![
                Decision::Discard,
                Decision::Discard,
                Decision::Discard,
                Decision::Keep
            ]
        );
        let keep: Vec<&str> = outcome.keep_chunks.iter().map(|c| c.0.as_str()).collect();
        assert_eq!(keep, vec!["x7", "x8"]);
        assert_eq!(outcome.discard_chunks.len(), 6);
        assert!(crate::tree::validate_cut(&tree, &outcome.cut_nodes()).unwrap());
        // evaluations: root + 4 children = 5 <= 2K = 8
        assert_eq!(outcome.evaluation_order.len(), 5);
    }

    #[test]
    fn all_good_corpus_keeps_root_in_one_evaluation() {
        let mut b = TreeBuilder::new();
        let leaves: Vec<NodeId> = (0..6).map(|i| b.leaf(vec![cid(&format!("c{i}"))])).collect();
        let root = b.internal(leaves).unwrap();
        let tree = b.build(root).unwrap();
        let oracle = MemoizedOracle::new(TableOracle::from_binary_labels(
            (0..6).map(|i| (cid(&format!("c{i}")), true)),
        ));
        let cfg = FilterConfig::new(0.1, 0.1);
        let outcome = run_filter(&tree, &oracle, &cfg).unwrap();
        assert_eq!(outcome.k, 1);
        assert_eq!(outcome.evaluation_order.len(), 1);
        assert_eq!(outcome.keep_chunks.len(), 6);
        assert!(outcome.ledger.total_calls <= cfg.n_max);
    }

    #[test]
    fn decide_examples() {
        let est = |mean: f64, exhaustive: bool| NodeEstimate {
            node_id: NodeId(0),
            n_samples: 10,
            level_counts: vec![5, 5],
            failures: 0,
            mean,
            exhaustive,
        };
        let mut cfg = FilterConfig::new(0.1, 0.5);
        assert_eq!(decide(&est(0.05, false), &cfg, 1).unwrap(), Verdict::Discard);
        cfg = FilterConfig::new(0.2, 0.4); // keep threshold 0.6
        assert_eq!(decide(&est(0.5, false), &cfg, 1).unwrap(), Verdict::Split);
        assert_eq!(decide(&est(1.0, true), &cfg, 1).unwrap(), Verdict::Keep);
    }

    #[test]
    fn hoeffding_mode_is_more_conservative() {
        // mean 0.05 with few samples: point discards, hoeffding splits.
        let est = NodeEstimate {
            node_id: NodeId(0),
            n_samples: 20,
            level_counts: vec![19, 1],
            failures: 0,
            mean: 0.05,
            exhaustive: false,
        };
        let mut cfg = FilterConfig::new(0.1, 0.1);
        assert_eq!(decide(&est, &cfg, 1).unwrap(), Verdict::Discard);
        cfg.mode = DecisionMode::Hoeffding;
        assert_eq!(decide(&est, &cfg, 1).unwrap(), Verdict::Split);
    }

    #[test]
    fn sample_leaves_modes() {
        let (tree, _) = reference_tree();
        let root = tree.root_id();
        let (all, exhaustive) = sample_leaves(&tree, root, 100, 0).unwrap();
        assert!(exhaustive);
        assert_eq!(all.len(), 8);

        let (some, exhaustive) = sample_leaves(&tree, root, 3, 7).unwrap();
        assert!(!exhaustive);
        assert_eq!(some.len(), 3);
        let dedup: BTreeSet<_> = some.iter().collect();
        assert_eq!(dedup.len(), 3);
        assert_eq!(some, sample_leaves(&tree, root, 3, 7).unwrap().0);
        assert_ne!(some, sample_leaves(&tree, root, 3, 8).unwrap().0);
    }

    #[test]
    fn leaf_policy_resolves_in_between_scores() {
        let mut b = TreeBuilder::new();
        let a = b.leaf(vec![cid("a")]);
        let c = b.leaf(vec![cid("c")]);
        let root = b.internal(vec![a, c]).unwrap();
        let tree = b.build(root).unwrap();
        let oracle = || {
            MemoizedOracle::new(
                TableOracle::from_real_values(vec![(cid("a"), 0.5), (cid("c"), 0.45)]).unwrap(),
            )
        };
        // alpha=0.2, keep at 0.8: both leaves land strictly inside.
        let mut cfg = FilterConfig::new(0.2, 0.2);
        let outcome = run_filter(&tree, &oracle(), &cfg).unwrap();
        // midpoint is 0.5: "a" (0.5) kept, "c" (0.45) discarded
        assert!(outcome.keep_chunks.contains(&cid("a")));
        assert!(outcome.discard_chunks.contains(&cid("c")));

        cfg.leaf_policy = LeafPolicy::Discard;
        let outcome = run_filter(&tree, &oracle(), &cfg).unwrap();
        assert!(outcome.keep_chunks.is_empty());
        assert_eq!(outcome.discard_chunks.len(), 2);
    }

    #[test]
    fn chunk_scores_come_from_the_classifying_node() {
        let (tree, labels) = reference_tree();
        let oracle = MemoizedOracle::new(TableOracle::from_binary_labels(labels));
        let cfg = FilterConfig::new(1.0 / 3.0, 0.0);
        let outcome = run_filter(&tree, &oracle, &cfg).unwrap();
        // x1 was classified by the subtree with mean 1/3, not by its own label.
        assert_eq!(outcome.chunk_scores[&cid("x1")], 1.0 / 3.0);
        assert_eq!(outcome.chunk_scores[&cid("x7")], 1.0);
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let cfg = FilterConfig::new(0.6, 0.5); // alpha >= 1 - beta
        assert!(cfg.validate().is_err());
        assert!(FilterConfig::new(0.1, 0.2).validate().is_ok());
    }

    #[test]
    fn aggregate_documents_examples() {
        let (tree, labels) = reference_tree();
        let oracle = MemoizedOracle::new(TableOracle::from_binary_labels(labels));
        let outcome = run_filter(&tree, &oracle, &FilterConfig::new(1.0 / 3.0, 0.0)).unwrap();
        // d1 = {x1}, d2 = {x7, x8}; d3 has no admitted chunks.
        let chunks = vec![
            crate::corpus::Chunk {
                chunk_id: cid("x1"),
                doc_id: "d1".into(),
                text: None,
                token_count: 60,
            },
            crate::corpus::Chunk {
                chunk_id: cid("x7"),
                doc_id: "d2".into(),
                text: None,
                token_count: 60,
            },
            crate::corpus::Chunk {
                chunk_id: cid("x8"),
                doc_id: "d2".into(),
                text: None,
                token_count: 60,
            },
        ];
        let (corpus, _) = Corpus::from_chunks(chunks, 50).unwrap();
        let docs = aggregate_documents(&outcome, &corpus);
        assert_eq!(docs.scores[&DocId("d1".into())], 1.0 / 3.0);
        assert_eq!(docs.scores[&DocId("d2".into())], 1.0);
        assert!(docs.skipped.is_empty());
    }

    #[test]
    fn doc_mean_arithmetic() {
        let scores = [1.0, 1.0, 0.1];
        assert!((scores.iter().sum::<f64>() / 3.0 - 0.7).abs() < 1e-12);
    }

    #[test]
    fn select_top_k_examples() {
        let scores: BTreeMap<DocId, f64> = [("a", 0.9), ("b", 0.8), ("c", 0.7)]
            .iter()
            .map(|&(d, s)| (DocId(d.into()), s))
            .collect();
        let tokens: BTreeMap<DocId, u64> = ["a", "b", "c"]
            .iter()
            .map(|&d| (DocId(d.into()), 10))
            .collect();
        let picked = select_top_k(&scores, &tokens, 20).unwrap();
        assert_eq!(picked, vec![DocId("a".into()), DocId("b".into())]);

        let all = select_top_k(&scores, &tokens, 1000).unwrap();
        assert_eq!(all.len(), 3);

        // equal scores: lower doc id wins
        let tied: BTreeMap<DocId, f64> = [("z", 0.5), ("y", 0.5)]
            .iter()
            .map(|&(d, s)| (DocId(d.into()), s))
            .collect();
        let tokens: BTreeMap<DocId, u64> = ["z", "y"]
            .iter()
            .map(|&d| (DocId(d.into()), 10))
            .collect();
        let picked = select_top_k(&tied, &tokens, 10).unwrap();
        assert_eq!(picked, vec![DocId("y".into())]);
    }

    #[test]
    fn entropy_probe_pure_leaves_have_zero_entropy() {
        let (tree, labels) = reference_tree();
        let oracle = MemoizedOracle::new(TableOracle::from_binary_labels(labels));
        let levels = entropy_probe(&tree, &oracle, 100, 100, 1).unwrap();
        let deepest = levels.last().unwrap();
        for (_, h) in &deepest.node_entropies {
            assert_eq!(*h, 0.0);
        }
        // root level: 3 good of 8 -> positive entropy
        assert!(levels[0].mean().unwrap() > 0.5);
    }
}
