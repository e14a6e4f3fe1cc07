//! Shared helpers for the integration and acceptance suites: random tree
//! generation and an independent top-down reference for exhaustive
//! filtering.
#![allow(dead_code)] // each test binary uses a different subset

use std::collections::{BTreeMap, HashMap};
use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treefilter::corpus::ChunkId;
use treefilter::filter::{Decision, LeafPolicy};
use treefilter::tree::{ClusterTree, NodeId, TreeBuilder};

/// Builds a random tree over `n_leaves` chunks: every internal node has
/// between 2 and 4 children, leaf ranges are split recursively.
pub fn random_tree(seed: u64, n_leaves: usize) -> ClusterTree {
    assert!(n_leaves >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = TreeBuilder::new();
    let root = split_range(&mut builder, &mut rng, 0, n_leaves);
    builder.build(root).unwrap()
}

fn split_range(
    builder: &mut TreeBuilder,
    rng: &mut ChaCha8Rng,
    lo: usize,
    len: usize,
) -> NodeId {
    if len == 1 {
        return builder.leaf(vec![chunk(lo)]);
    }
    let max_children = len.min(4);
    let n_children = rng.random_range(2..=max_children);
    // random composition of `len` into n_children positive parts
    let mut cuts: Vec<usize> = (1..n_children)
        .map(|_| rng.random_range(1..len))
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(len);
    let children: Vec<NodeId> = bounds
        .windows(2)
        .map(|w| split_range(builder, rng, lo + w[0], w[1] - w[0]))
        .collect();
    if children.len() == 1 {
        return children[0];
    }
    builder.internal(children).unwrap()
}

pub fn chunk(i: usize) -> ChunkId {
    ChunkId(format!("c{i:06}"))
}

pub fn random_binary_labels(tree: &ClusterTree, seed: u64, p_good: f64) -> HashMap<ChunkId, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1AB);
    tree.all_leaves()
        .iter()
        .map(|c| (c.clone(), if rng.random_bool(p_good) { 1.0 } else { 0.0 }))
        .collect()
}

pub fn random_real_labels(tree: &ClusterTree, seed: u64) -> HashMap<ChunkId, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2EA1);
    tree.all_leaves()
        .iter()
        .map(|c| (c.clone(), rng.random_range(0.0..=1.0)))
        .collect()
}

/// Independent exhaustive-filter reference: exact node means from the label
/// map, point thresholds, FIFO traversal, midpoint/discard leaf policy.
///
/// Means are summed over the same canonical leaf enumeration the engine
/// uses, so agreement is expected bit-for-bit.
pub struct ReferenceOutcome {
    pub cut: Vec<(NodeId, Decision, f64)>,
    pub chunk_scores: BTreeMap<ChunkId, f64>,
}

pub fn reference_filter(
    tree: &ClusterTree,
    labels: &HashMap<ChunkId, f64>,
    alpha: f64,
    beta: f64,
    leaf_policy: LeafPolicy,
) -> ReferenceOutcome {
    let keep_at = 1.0 - beta;
    let mut cut = Vec::new();
    let mut chunk_scores = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(tree.root_id());
    while let Some(node_id) = queue.pop_front() {
        let leaves = tree.leaves(node_id).unwrap();
        let mean = leaves.iter().map(|c| labels[c]).sum::<f64>() / leaves.len() as f64;
        let node = tree.node(node_id).unwrap();
        let decision = if mean >= keep_at {
            Some(Decision::Keep)
        } else if mean <= alpha {
            Some(Decision::Discard)
        } else if node.is_leaf() {
            Some(match leaf_policy {
                LeafPolicy::Midpoint => {
                    if mean >= (alpha + 1.0 - beta) / 2.0 {
                        Decision::Keep
                    } else {
                        Decision::Discard
                    }
                }
                LeafPolicy::Discard => Decision::Discard,
            })
        } else {
            None
        };
        match decision {
            Some(d) => {
                cut.push((node_id, d, mean));
                for c in leaves {
                    chunk_scores.insert(c.clone(), mean);
                }
            }
            None => {
                let mut children = node.child_ids.clone();
                children.sort_unstable();
                queue.extend(children);
            }
        }
    }
    ReferenceOutcome { cut, chunk_scores }
}
