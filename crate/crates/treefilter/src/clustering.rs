//! Round-based affinity clustering over embedding vectors.
//!
//! Each round, every cluster nominates its nearest other cluster and the
//! connected components of the nomination graph merge. Because every cluster
//! is paired with at least one other, the minimum cluster size at least
//! doubles per round, which keeps the resulting tree shallow and balanced.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};
use crate::tree::{prune_single_child, ClusterTree, NodeId, TreeBuilder};

/// How the distance between two clusters is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    /// Minimum distance over point pairs. Faithful but quadratic; intended
    /// for desk-scale runs and reference checks.
    Single,
    /// Distance between (leaf-count-weighted) mean vectors.
    Centroid,
}

/// Distance between two vectors. Cosine is the production metric; Euclidean
/// exists as a test hook for corpora that are not directional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Metric::Cosine => cosine_distance(a, b),
            Metric::Euclidean => {
                if a.len() != b.len() {
                    return Err(Error::DimensionMismatch {
                        expected: a.len(),
                        got: b.len(),
                    });
                }
                Ok(a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt())
            }
        }
    }
}

/// Cosine distance `1 - a.b / (|a||b|)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok((1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0))
}

/// Clustering parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringConfig {
    /// Maximum number of merge rounds.
    pub max_rounds: u32,
    /// Stop once the number of clusters falls to this value or below.
    #[serde(default)]
    pub target_cluster_count: Option<usize>,
    pub linkage: Linkage,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            max_rounds: 5,
            target_cluster_count: None,
            linkage: Linkage::Centroid,
            seed: 0,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::InvalidParameter("max_rounds must be >= 1".into()));
        }
        if self.target_cluster_count == Some(0) {
            return Err(Error::InvalidParameter(
                "target_cluster_count must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One cluster during a round: which original points it holds and the sum of
/// their vectors (centroid = sum / size).
#[derive(Debug, Clone)]
pub struct ClusterState {
    /// Indices of member points, ascending.
    pub members: Vec<usize>,
    /// Componentwise sum of the member vectors.
    pub vector_sum: Vec<f64>,
}

impl ClusterState {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// The merge structure produced by one affinity round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRecord {
    /// Nominated nearest cluster, per cluster index.
    pub nominations: Vec<usize>,
    /// Connected components of the nomination graph, each listed ascending;
    /// components ordered by their smallest member.
    pub components: Vec<Vec<usize>>,
}

/// A working set of clusters over a fixed point collection.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    points: Vec<Vec<f64>>,
    clusters: Vec<ClusterState>,
}

impl ClusterSet {
    /// Starts from singleton clusters, one per point.
    pub fn singletons(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoData);
        }
        let clusters = points
            .iter()
            .enumerate()
            .map(|(i, p)| ClusterState {
                members: vec![i],
                vector_sum: p.clone(),
            })
            .collect();
        Ok(ClusterSet { points, clusters })
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> &[ClusterState] {
        &self.clusters
    }

    pub fn min_size(&self) -> usize {
        self.clusters.iter().map(|c| c.size()).min().unwrap_or(0)
    }

    fn linkage_distance(&self, a: usize, b: usize, linkage: Linkage, metric: Metric) -> Result<f64> {
        match linkage {
            Linkage::Centroid => {
                let ca = centroid(&self.clusters[a]);
                let cb = centroid(&self.clusters[b]);
                metric.distance(&ca, &cb)
            }
            Linkage::Single => {
                let mut best = f64::INFINITY;
                for &i in &self.clusters[a].members {
                    for &j in &self.clusters[b].members {
                        let d = metric.distance(&self.points[i], &self.points[j])?;
                        if d < best {
                            best = d;
                        }
                    }
                }
                Ok(best)
            }
        }
    }
}

fn centroid(cluster: &ClusterState) -> Vec<f64> {
    let n = cluster.size() as f64;
    cluster.vector_sum.iter().map(|x| x / n).collect()
}

/// Runs one merge round: every cluster nominates its nearest other cluster
/// (ties break to the lower cluster index) and nomination components merge.
///
/// The number of clusters strictly decreases and the minimum cluster size at
/// least doubles.
pub fn affinity_round(
    set: &mut ClusterSet,
    linkage: Linkage,
    metric: Metric,
) -> Result<MergeRecord> {
    let n = set.len();
    if n < 2 {
        return Err(Error::NothingToMerge);
    }

    // Centroids change only between rounds; materialize them once.
    let cents: Vec<Vec<f64>> = match linkage {
        Linkage::Centroid => set.clusters.iter().map(centroid).collect(),
        Linkage::Single => Vec::new(),
    };
    let pair_distance = |i: usize, j: usize| -> Result<f64> {
        match linkage {
            Linkage::Centroid => metric.distance(&cents[i], &cents[j]),
            Linkage::Single => set.linkage_distance(i, j, linkage, metric),
        }
    };

    // Nominations are independent; compute them in parallel.
    let nominations: Vec<Result<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_dist = f64::INFINITY;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = pair_distance(i, j)?;
                if d < best_dist || (d == best_dist && j < best) {
                    best_dist = d;
                    best = j;
                }
            }
            Ok(best)
        })
        .collect();
    let nominations: Vec<usize> = nominations.into_iter().collect::<Result<_>>()?;

    // Union nomination edges and extract components.
    let mut dsu = Dsu::new(n);
    for (i, &j) in nominations.iter().enumerate() {
        dsu.union(i, j);
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        groups[dsu.find(i)].push(i);
    }
    let mut components: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    components.sort_by_key(|g| g[0]);

    let merged = components
        .iter()
        .map(|group| {
            let mut members = Vec::new();
            let mut vector_sum = vec![0.0; set.points[0].len()];
            for &ci in group {
                members.extend_from_slice(&set.clusters[ci].members);
                for (acc, x) in vector_sum.iter_mut().zip(&set.clusters[ci].vector_sum) {
                    *acc += x;
                }
            }
            members.sort_unstable();
            ClusterState {
                members,
                vector_sum,
            }
        })
        .collect();
    set.clusters = merged;

    Ok(MergeRecord {
        nominations,
        components,
    })
}

/// Builds the hierarchical tree for a corpus of embeddings with the cosine
/// metric; merge rounds run until a single cluster remains, `max_rounds` is
/// exhausted, or the cluster count reaches `target_cluster_count`.
pub fn build_tree(embeddings: &EmbeddingSet, cfg: &ClusteringConfig) -> Result<ClusterTree> {
    build_tree_with_metric(embeddings, cfg, Metric::Cosine)
}

/// As [`build_tree`], with an explicit metric (Euclidean is a test hook).
pub fn build_tree_with_metric(
    embeddings: &EmbeddingSet,
    cfg: &ClusteringConfig,
    metric: Metric,
) -> Result<ClusterTree> {
    cfg.validate()?;
    if embeddings.is_empty() {
        return Err(Error::NoData);
    }

    let mut builder = TreeBuilder::new();
    let mut node_ids: Vec<NodeId> = embeddings
        .items()
        .iter()
        .map(|e| builder.leaf(vec![e.chunk_id.clone()]))
        .collect();
    let points: Vec<Vec<f64>> = embeddings.items().iter().map(|e| e.values.clone()).collect();
    let mut set = ClusterSet::singletons(points)?;

    for round in 0..cfg.max_rounds {
        if set.len() == 1 {
            break;
        }
        if let Some(target) = cfg.target_cluster_count {
            if set.len() <= target {
                break;
            }
        }
        let before = set.min_size();
        let record = affinity_round(&mut set, cfg.linkage, metric)?;
        debug_assert!(set.min_size() >= 2 * before);
        tracing::debug!(
            round,
            clusters = set.len(),
            min_size = set.min_size(),
            "affinity round merged"
        );
        node_ids = record
            .components
            .iter()
            .map(|group| {
                if group.len() == 1 {
                    Ok(node_ids[group[0]])
                } else {
                    builder.internal(group.iter().map(|&ci| node_ids[ci]).collect())
                }
            })
            .collect::<Result<_>>()?;
    }

    let root = if node_ids.len() == 1 {
        node_ids[0]
    } else {
        builder.internal(node_ids)?
    };
    let tree = builder.build(root)?;
    prune_single_child(&tree)
}

/// Plain union-find with path halving.
struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // Lower root wins, keeping component labels stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
