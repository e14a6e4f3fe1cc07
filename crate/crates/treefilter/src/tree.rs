//! Hierarchical cluster trees over chunk corpora, and cuts through them.
//!
//! A tree's leaves carry chunk ids. Internally every node knows the
//! contiguous span of leaves it covers (in depth-first order), which makes
//! leaf-set enumeration, uniform sampling, and cut validation cheap.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::ChunkId;
use crate::error::{Error, Result};

/// Dense index of a node within its tree, assigned in construction order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One node of a [`ClusterTree`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub node_id: NodeId,
    pub parent_id: Option<NodeId>,
    pub child_ids: Vec<NodeId>,
    /// Chunk ids held directly; nonempty exactly for leaves.
    pub leaf_chunk_ids: Vec<ChunkId>,
    /// Number of chunks in the subtree rooted here.
    pub leaf_count: usize,
    /// Distance from the root (root has depth 0).
    pub depth: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.child_ids.is_empty()
    }
}

/// The serialized form of one node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: usize,
    pub parent_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub child_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub leaf_chunk_ids: Vec<ChunkId>,
}

/// A hierarchical clustering whose leaves are chunks.
///
/// Immutable after construction; safe to share across concurrent readers.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    nodes: Vec<Node>,
    root_id: NodeId,
    /// Chunk ids in depth-first leaf order; every node covers a contiguous span.
    leaf_order: Vec<ChunkId>,
    /// Per-node (offset, length) into `leaf_order`.
    spans: Vec<(usize, usize)>,
}

impl ClusterTree {
    /// Validates and indexes a tree given its serialized records.
    ///
    /// Requirements: node ids are dense `0..n`; exactly one root (the given
    /// `root_id`, with no parent); parent/child links are mutually
    /// consistent; every node is reachable from the root; leaves (and only
    /// leaves) carry at least one chunk id; chunk ids are unique.
    pub fn from_records(records: Vec<NodeRecord>, root_id: usize) -> Result<Self> {
        let n = records.len();
        if n == 0 {
            return Err(Error::MalformedTree("no nodes".into()));
        }
        let mut seen = vec![false; n];
        for rec in &records {
            if rec.node_id >= n || seen[rec.node_id] {
                return Err(Error::MalformedTree(format!(
                    "node ids must be dense and unique; bad id {}",
                    rec.node_id
                )));
            }
            seen[rec.node_id] = true;
        }
        let mut by_id: Vec<Option<NodeRecord>> = vec![None; n];
        for rec in records {
            let id = rec.node_id;
            by_id[id] = Some(rec);
        }
        let recs: Vec<NodeRecord> = by_id.into_iter().map(|r| r.unwrap()).collect();

        if root_id >= n {
            return Err(Error::MalformedTree("root id out of range".into()));
        }
        for rec in &recs {
            let is_root = rec.node_id == root_id;
            if is_root != rec.parent_id.is_none() {
                return Err(Error::MalformedTree(
                    "exactly the root must lack a parent".into(),
                ));
            }
            if let Some(p) = rec.parent_id {
                if p >= n || !recs[p].child_ids.contains(&rec.node_id) {
                    return Err(Error::MalformedTree(format!(
                        "inconsistent parent link at node {}",
                        rec.node_id
                    )));
                }
            }
            for &c in &rec.child_ids {
                if c >= n || recs[c].parent_id != Some(rec.node_id) {
                    return Err(Error::MalformedTree(format!(
                        "inconsistent child link at node {}",
                        rec.node_id
                    )));
                }
            }
            if rec.child_ids.is_empty() && rec.leaf_chunk_ids.is_empty() {
                return Err(Error::MalformedTree(format!(
                    "leaf node {} has no chunks",
                    rec.node_id
                )));
            }
            if !rec.child_ids.is_empty() && !rec.leaf_chunk_ids.is_empty() {
                return Err(Error::MalformedTree(format!(
                    "internal node {} carries chunks",
                    rec.node_id
                )));
            }
        }

        // Depth-first walk: checks reachability/acyclicity and lays out the
        // contiguous leaf spans.
        let mut nodes: Vec<Node> = recs
            .iter()
            .map(|rec| Node {
                node_id: NodeId(rec.node_id),
                parent_id: rec.parent_id.map(NodeId),
                child_ids: rec.child_ids.iter().map(|&c| NodeId(c)).collect(),
                leaf_chunk_ids: rec.leaf_chunk_ids.clone(),
                leaf_count: 0,
                depth: 0,
            })
            .collect();
        let mut leaf_order: Vec<ChunkId> = Vec::new();
        let mut spans = vec![(0usize, 0usize); n];
        let mut visited = vec![false; n];
        // (node, depth, entering)
        let mut stack: Vec<(usize, usize, bool)> = vec![(root_id, 0, true)];
        while let Some((id, depth, entering)) = stack.pop() {
            if entering {
                if visited[id] {
                    return Err(Error::MalformedTree("cycle detected".into()));
                }
                visited[id] = true;
                nodes[id].depth = depth;
                spans[id].0 = leaf_order.len();
                stack.push((id, depth, false));
                for &NodeId(c) in nodes[id].child_ids.iter().rev() {
                    stack.push((c, depth + 1, true));
                }
                if nodes[id].child_ids.is_empty() {
                    leaf_order.extend(nodes[id].leaf_chunk_ids.iter().cloned());
                }
            } else {
                spans[id].1 = leaf_order.len() - spans[id].0;
                nodes[id].leaf_count = spans[id].1;
            }
        }
        if visited.iter().any(|v| !v) {
            return Err(Error::MalformedTree(
                "unreachable nodes (multiple roots?)".into(),
            ));
        }
        let unique: BTreeSet<&ChunkId> = leaf_order.iter().collect();
        if unique.len() != leaf_order.len() {
            return Err(Error::MalformedTree("duplicate chunk id in leaves".into()));
        }

        Ok(ClusterTree {
            nodes,
            root_id: NodeId(root_id),
            leaf_order,
            spans,
        })
    }

    pub fn to_records(&self) -> (Vec<NodeRecord>, usize) {
        let records = self
            .nodes
            .iter()
            .map(|node| NodeRecord {
                node_id: node.node_id.0,
                parent_id: node.parent_id.map(|p| p.0),
                child_ids: node.child_ids.iter().map(|c| c.0).collect(),
                leaf_chunk_ids: node.leaf_chunk_ids.clone(),
            })
            .collect();
        (records, self.root_id.0)
    }

    pub fn root_id(&self) -> NodeId {
        self.root_id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn corpus_size(&self) -> usize {
        self.leaf_order.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0).ok_or(Error::NodeNotInTree(id))
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Chunk ids under `id`, in canonical (depth-first) order.
    pub fn leaves(&self, id: NodeId) -> Result<&[ChunkId]> {
        let (off, len) = *self.spans.get(id.0).ok_or(Error::NodeNotInTree(id))?;
        Ok(&self.leaf_order[off..off + len])
    }

    pub fn span(&self, id: NodeId) -> Result<(usize, usize)> {
        self.spans.get(id.0).copied().ok_or(Error::NodeNotInTree(id))
    }

    /// All chunk ids, in depth-first leaf order.
    pub fn all_leaves(&self) -> &[ChunkId] {
        &self.leaf_order
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Node ids at the given depth, ascending.
    pub fn nodes_at_depth(&self, depth: usize) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.depth == depth)
            .map(|n| n.node_id)
            .collect()
    }

    /// True when no non-root internal node has exactly one child.
    pub fn is_pruned(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.node_id == self.root_id || n.is_leaf() || n.child_ids.len() >= 2)
    }
}

/// A set of nodes whose leaf sets partition the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cut {
    pub node_ids: Vec<NodeId>,
}

impl Cut {
    /// The cut complexity `K`.
    pub fn complexity(&self) -> usize {
        self.node_ids.len()
    }
}

/// True iff the leaf sets of the cut's nodes are pairwise disjoint and
/// together cover the whole corpus.
pub fn validate_cut(tree: &ClusterTree, cut: &Cut) -> Result<bool> {
    let mut spans = Vec::with_capacity(cut.node_ids.len());
    for &id in &cut.node_ids {
        spans.push(tree.span(id)?);
    }
    spans.sort_unstable();
    let mut next = 0usize;
    for (off, len) in spans {
        if off != next {
            return Ok(false);
        }
        next = off + len;
    }
    Ok(next == tree.corpus_size())
}

/// Incremental bottom-up construction of a [`ClusterTree`].
///
/// Node ids are assigned densely in creation order; parents are linked when
/// an internal node adopts its children.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    records: Vec<NodeRecord>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        TreeBuilder::default()
    }

    pub fn leaf(&mut self, chunks: Vec<ChunkId>) -> NodeId {
        let id = self.records.len();
        self.records.push(NodeRecord {
            node_id: id,
            parent_id: None,
            child_ids: Vec::new(),
            leaf_chunk_ids: chunks,
        });
        NodeId(id)
    }

    pub fn internal(&mut self, children: Vec<NodeId>) -> Result<NodeId> {
        let id = self.records.len();
        for &NodeId(c) in &children {
            let rec = self
                .records
                .get_mut(c)
                .ok_or(Error::MalformedTree("unknown child".into()))?;
            if rec.parent_id.is_some() {
                return Err(Error::MalformedTree("child already has a parent".into()));
            }
            rec.parent_id = Some(id);
        }
        self.records.push(NodeRecord {
            node_id: id,
            parent_id: None,
            child_ids: children.into_iter().map(|c| c.0).collect(),
            leaf_chunk_ids: Vec::new(),
        });
        Ok(NodeId(id))
    }

    pub fn build(self, root: NodeId) -> Result<ClusterTree> {
        ClusterTree::from_records(self.records, root.0)
    }
}

/// Collapses chains of single-child nodes.
///
/// When collecting the children of a surviving node, any child that itself
/// has exactly one child is skipped through, recursively. The root is always
/// retained. Surviving nodes keep their relative ancestor order but are
/// renumbered densely in breadth-first order. Returns the input unchanged
/// when there is nothing to skip.
pub fn prune_single_child(tree: &ClusterTree) -> Result<ClusterTree> {
    let skip = |mut id: NodeId| -> NodeId {
        loop {
            let node = &tree.nodes()[id.0];
            if node.child_ids.len() == 1 {
                id = node.child_ids[0];
            } else {
                return id;
            }
        }
    };

    let needs_work = tree
        .nodes()
        .iter()
        .flat_map(|n| n.child_ids.iter())
        .any(|&c| tree.nodes()[c.0].child_ids.len() == 1);
    if !needs_work {
        return Ok(tree.clone());
    }

    // Breadth-first rebuild with skip-resolved children.
    let mut records: Vec<NodeRecord> = Vec::new();
    let mut queue: VecDeque<(NodeId, Option<usize>)> = VecDeque::new();
    queue.push_back((tree.root_id(), None));
    while let Some((old_id, parent)) = queue.pop_front() {
        let new_id = records.len();
        let old = &tree.nodes()[old_id.0];
        records.push(NodeRecord {
            node_id: new_id,
            parent_id: parent,
            child_ids: Vec::new(),
            leaf_chunk_ids: old.leaf_chunk_ids.clone(),
        });
        if let Some(p) = parent {
            records[p].child_ids.push(new_id);
        }
        for &c in &old.child_ids {
            queue.push_back((skip(c), Some(new_id)));
        }
    }
    ClusterTree::from_records(records, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cid(s: &str) -> ChunkId {
        s.into()
    }

    /// root -> {a -> {x}, b -> {y, z}}
    fn chainy_tree() -> ClusterTree {
        let mut b = TreeBuilder::new();
        let x = b.leaf(vec![cid("x")]);
        let y = b.leaf(vec![cid("y")]);
        let z = b.leaf(vec![cid("z")]);
        let a = b.internal(vec![x]).unwrap();
        let bb = b.internal(vec![y, z]).unwrap();
        let root = b.internal(vec![a, bb]).unwrap();
        b.build(root).unwrap()
    }

    #[test]
    fn spans_and_leaf_counts() {
        let tree = chainy_tree();
        assert_eq!(tree.corpus_size(), 3);
        let root = tree.root_id();
        assert_eq!(tree.node(root).unwrap().leaf_count, 3);
        assert_eq!(tree.leaves(root).unwrap().len(), 3);
    }

    #[test]
    fn prune_skips_single_child_nodes() {
        let tree = chainy_tree();
        let pruned = prune_single_child(&tree).unwrap();
        // root -> {x, b -> {y, z}}
        assert_eq!(pruned.len(), 5);
        assert!(pruned.is_pruned());
        let root = pruned.node(pruned.root_id()).unwrap();
        assert_eq!(root.child_ids.len(), 2);
        let mut leaves: Vec<_> = pruned.all_leaves().to_vec();
        leaves.sort();
        assert_eq!(leaves, vec![cid("x"), cid("y"), cid("z")]);
    }

    #[test]
    fn prune_collapses_chain_to_direct_child() {
        // root -> a -> leaf becomes root -> leaf
        let mut b = TreeBuilder::new();
        let leaf = b.leaf(vec![cid("x")]);
        let a = b.internal(vec![leaf]).unwrap();
        let root = b.internal(vec![a]).unwrap();
        let tree = b.build(root).unwrap();
        let pruned = prune_single_child(&tree).unwrap();
        assert_eq!(pruned.len(), 2);
        let root = pruned.node(pruned.root_id()).unwrap();
        assert_eq!(root.child_ids.len(), 1);
        assert!(pruned.node(root.child_ids[0]).unwrap().is_leaf());
    }

    #[test]
    fn prune_is_identity_on_valid_trees() {
        let mut b = TreeBuilder::new();
        let x = b.leaf(vec![cid("x")]);
        let y = b.leaf(vec![cid("y")]);
        let root = b.internal(vec![x, y]).unwrap();
        let tree = b.build(root).unwrap();
        let pruned = prune_single_child(&tree).unwrap();
        let (recs_a, root_a) = tree.to_records();
        let (recs_b, root_b) = pruned.to_records();
        assert_eq!(root_a, root_b);
        assert_eq!(
            serde_json::to_string(&recs_a).unwrap(),
            serde_json::to_string(&recs_b).unwrap()
        );
    }

    #[test]
    fn malformed_trees_rejected() {
        // two roots
        let recs = vec![
            NodeRecord {
                node_id: 0,
                parent_id: None,
                child_ids: vec![],
                leaf_chunk_ids: vec![cid("x")],
            },
            NodeRecord {
                node_id: 1,
                parent_id: None,
                child_ids: vec![],
                leaf_chunk_ids: vec![cid("y")],
            },
        ];
        assert!(matches!(
            ClusterTree::from_records(recs, 0),
            Err(Error::MalformedTree(_))
        ));
    }

    #[test]
    fn cycle_rejected() {
        let recs = vec![
            NodeRecord {
                node_id: 0,
                parent_id: None,
                child_ids: vec![1],
                leaf_chunk_ids: vec![],
            },
            NodeRecord {
                node_id: 1,
                parent_id: Some(0),
                child_ids: vec![2],
                leaf_chunk_ids: vec![],
            },
            NodeRecord {
                node_id: 2,
                parent_id: Some(1),
                child_ids: vec![1],
                leaf_chunk_ids: vec![],
            },
        ];
        assert!(ClusterTree::from_records(recs, 0).is_err());
    }

    #[test]
    fn validate_cut_examples() {
        let tree = chainy_tree();
        let root_cut = Cut {
            node_ids: vec![tree.root_id()],
        };
        assert!(validate_cut(&tree, &root_cut).unwrap());

        let leaf_ids: Vec<NodeId> = tree
            .nodes()
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.node_id)
            .collect();
        assert!(validate_cut(&tree, &Cut { node_ids: leaf_ids.clone() }).unwrap());

        let overlapping = Cut {
            node_ids: vec![tree.root_id(), leaf_ids[0]],
        };
        assert!(!validate_cut(&tree, &overlapping).unwrap());

        let unknown = Cut {
            node_ids: vec![NodeId(999)],
        };
        assert!(matches!(
            validate_cut(&tree, &unknown),
            Err(Error::NodeNotInTree(_))
        ));
    }

    #[test]
    fn cut_leaf_counts_sum_to_corpus() {
        let tree = chainy_tree();
        let leaf_ids: Vec<NodeId> = tree
            .nodes()
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.node_id)
            .collect();
        let total: usize = leaf_ids
            .iter()
            .map(|&id| tree.node(id).unwrap().leaf_count)
            .sum();
        assert_eq!(total, tree.corpus_size());
    }
}
