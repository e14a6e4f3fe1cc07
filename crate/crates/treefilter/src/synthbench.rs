//! Synthetic planted-tree benchmarks.
//!
//! Plants a balanced tree with a hidden low-complexity cut whose subtrees
//! are (almost) pure, runs the filter against the planted labels, and checks
//! the purity, cut-complexity, and sample-budget guarantees over many seeded
//! trials.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::corpus::ChunkId;
use crate::error::{Error, Result};
use crate::estimator::final_bound_width;
use crate::filter::{run_filter, FilterConfig};
use crate::oracle::{MemoizedOracle, TableOracle};
use crate::rng::{derive_seed, seeded_rng};
use crate::tree::{validate_cut, ClusterTree, Cut, NodeId, NodeRecord};

/// Distribution of the planted leaf labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// 0/1 labels: good subtrees draw Bernoulli(1 - beta'), bad ones
    /// Bernoulli(alpha').
    Binary,
    /// Continuous labels in [0, 1]: good leaves draw `1 - beta' * U`,
    /// bad leaves `alpha' * U`, with `U` uniform on [0, 2] and the result
    /// clipped to [0, 1] (means `1 - beta'` and `alpha'` whenever the
    /// parameter is at most 1/2).
    UnitInterval,
}

/// Parameters of a planted tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub branching: usize,
    pub depth: usize,
    /// Number of subtrees in the planted cut (K').
    pub k_prime: usize,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    /// Probability that a planted subtree is good.
    pub good_fraction: f64,
    pub label_kind: LabelKind,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.branching < 2 {
            return Err(Error::InvalidParameter("branching must be >= 2".into()));
        }
        if self.depth == 0 {
            return Err(Error::InvalidParameter("depth must be >= 1".into()));
        }
        if self.k_prime == 0 {
            return Err(Error::InvalidParameter("k_prime must be >= 1".into()));
        }
        if self.alpha_prime < 0.0
            || self.beta_prime < 0.0
            || self.alpha_prime + self.beta_prime >= 1.0
        {
            return Err(Error::InvalidParameter(
                "need alpha' >= 0, beta' >= 0, alpha' + beta' < 1".into(),
            ));
        }
        if !(self.good_fraction > 0.0 && self.good_fraction < 1.0) {
            return Err(Error::InvalidParameter(
                "good_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// A planted tree with its ground-truth labels and hidden cut.
#[derive(Debug, Clone)]
pub struct PlantedTree {
    pub tree: ClusterTree,
    pub labels: HashMap<ChunkId, f64>,
    /// The planted cut, node ids ascending.
    pub cut: Cut,
    /// Which planted cut nodes were marked good.
    pub good_nodes: Vec<NodeId>,
}

impl PlantedTree {
    /// Exact mean label under a node.
    pub fn subtree_mean(&self, node: NodeId) -> Result<f64> {
        let leaves = self.tree.leaves(node)?;
        Ok(leaves.iter().map(|c| self.labels[c]).sum::<f64>() / leaves.len() as f64)
    }

    /// Mean label over an arbitrary chunk set; `None` when empty.
    pub fn set_mean<'a>(&self, chunks: impl IntoIterator<Item = &'a ChunkId>) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0u64;
        for chunk in chunks {
            sum += self.labels[chunk];
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Checks that every planted subtree mean sits within `sd_factor`
    /// binomial standard deviations of its nominal value.
    pub fn verify_purity(&self, spec: &PlantedSpec, sd_factor: f64) -> Result<()> {
        for &node in &self.cut.node_ids {
            let mean = self.subtree_mean(node)?;
            let m = self.tree.node(node)?.leaf_count as f64;
            let (nominal, p) = if self.good_nodes.contains(&node) {
                (1.0 - self.beta_nominal(spec), self.beta_nominal(spec))
            } else {
                (self.alpha_nominal(spec), self.alpha_nominal(spec))
            };
            let tol = sd_factor * (p * (1.0 - p) / m).sqrt();
            if (mean - nominal).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "planted node {node} mean {mean} deviates from {nominal} by more than {tol}"
                )));
            }
        }
        Ok(())
    }

    fn alpha_nominal(&self, spec: &PlantedSpec) -> f64 {
        spec.alpha_prime
    }

    fn beta_nominal(&self, spec: &PlantedSpec) -> f64 {
        spec.beta_prime
    }
}

/// Builds a balanced `branching`-ary tree of the given depth with one chunk
/// per leaf. Node ids follow heap order (children of `i` are
/// `branching*i + 1 ..= branching*i + branching`).
pub fn balanced_tree(branching: usize, depth: usize) -> Result<ClusterTree> {
    if branching < 2 {
        return Err(Error::InvalidParameter("branching must be >= 2".into()));
    }
    let internal = ((branching.pow(depth as u32) - 1) / (branching - 1)) as usize;
    let leaves = branching.pow(depth as u32);
    let total = internal + leaves;
    let mut records = Vec::with_capacity(total);
    for id in 0..total {
        let parent_id = (id > 0).then(|| (id - 1) / branching);
        let (child_ids, leaf_chunk_ids) = if id < internal {
            (
                (branching * id + 1..=branching * id + branching).collect(),
                Vec::new(),
            )
        } else {
            (Vec::new(), vec![chunk_name(id - internal)])
        };
        records.push(NodeRecord {
            node_id: id,
            parent_id,
            child_ids,
            leaf_chunk_ids,
        });
    }
    ClusterTree::from_records(records, 0)
}

fn chunk_name(leaf_index: usize) -> ChunkId {
    ChunkId(format!("c{leaf_index:08}"))
}

/// Plants a balanced tree with a hidden cut of exactly `k_prime` subtrees.
///
/// The cut grows from the root by repeatedly expanding a uniformly chosen
/// frontier node into its children; each expansion adds `branching - 1`
/// subtrees, so `k_prime` must be `1 + m*(branching - 1)` and reachable
/// within the depth. Each cut subtree is marked good with probability
/// `good_fraction` and its leaf labels are drawn per `label_kind`.
pub fn plant_tree(spec: &PlantedSpec) -> Result<PlantedTree> {
    spec.validate()?;
    if (spec.k_prime - 1) % (spec.branching - 1) != 0
        || spec.k_prime > spec.branching.pow(spec.depth as u32)
    {
        return Err(Error::InvalidParameter(format!(
            "k_prime {} unreachable with branching {} and depth {}",
            spec.k_prime, spec.branching, spec.depth
        )));
    }
    let tree = balanced_tree(spec.branching, spec.depth)?;
    let mut rng = seeded_rng(spec.seed, PLANT_STREAM);

    // Grow the cut frontier.
    let mut frontier: Vec<NodeId> = vec![tree.root_id()];
    while frontier.len() < spec.k_prime {
        let expandable: Vec<usize> = frontier
            .iter()
            .enumerate()
            .filter(|(_, &n)| !tree.node(n).unwrap().is_leaf())
            .map(|(i, _)| i)
            .collect();
        if expandable.is_empty() {
            return Err(Error::InvalidParameter(
                "k_prime unreachable: frontier is all leaves".into(),
            ));
        }
        let pick = expandable[rng.random_range(0..expandable.len())];
        let node = frontier.swap_remove(pick);
        let mut children = tree.node(node)?.child_ids.clone();
        children.sort_unstable();
        frontier.extend(children);
    }
    frontier.sort_unstable();
    let cut = Cut {
        node_ids: frontier,
    };
    debug_assert!(validate_cut(&tree, &cut).unwrap());

    // Mark subtrees and draw leaf labels.
    let mut labels = HashMap::with_capacity(tree.corpus_size());
    let mut good_nodes = Vec::new();
    for &node in &cut.node_ids {
        let good = rng.random_bool(spec.good_fraction);
        if good {
            good_nodes.push(node);
        }
        for chunk in tree.leaves(node)? {
            let label = match spec.label_kind {
                LabelKind::Binary => {
                    let p = if good {
                        1.0 - spec.beta_prime
                    } else {
                        spec.alpha_prime
                    };
                    // random_bool rejects 0/1-degenerate probabilities on
                    // some backends; handle the pure cases directly.
                    if p <= 0.0 {
                        0.0
                    } else if p >= 1.0 {
                        1.0
                    } else if rng.random_bool(p) {
                        1.0
                    } else {
                        0.0
                    }
                }
                LabelKind::UnitInterval => {
                    let u: f64 = rng.random_range(0.0..2.0);
                    let raw = if good {
                        1.0 - spec.beta_prime * u
                    } else {
                        spec.alpha_prime * u
                    };
                    raw.clamp(0.0, 1.0)
                }
            };
            labels.insert(chunk.clone(), label);
        }
    }

    Ok(PlantedTree {
        tree,
        labels,
        cut,
        good_nodes,
    })
}

/// Tag separating the planting RNG stream from other users of the seed.
const PLANT_STREAM: u64 = 0x1A27;

/// Result of one planted trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    /// Complexity of the realized cut.
    pub realized_k: usize,
    /// Nodes evaluated by the run.
    pub evaluations: usize,
    /// Fresh oracle calls charged to the run.
    pub total_calls: u64,
    /// Exact mean label of the kept set (absent when empty).
    pub keep_mean: Option<f64>,
    /// Exact mean label of the discarded set (absent when empty).
    pub discard_mean: Option<f64>,
    /// `sqrt(log(1.3*K/delta)/n_max)` at the realized K.
    pub bound_width: f64,
    /// Purity guarantee: discard mean at most `alpha + width` and keep mean
    /// at least `1 - beta - width` (empty sides pass vacuously).
    pub prop1_ok: bool,
    /// Whether the thresholds met the complexity-guarantee margins.
    pub prop2_applicable: bool,
    /// Complexity guarantee: realized K at most K' (vacuous when the
    /// margins were not met).
    pub prop2_ok: bool,
    /// Budget guarantee: evaluations <= 2K and calls <= 2*K*n_max.
    pub complexity_ok: bool,
}

/// Plants a tree, filters it against the planted labels, and scores the run
/// against the purity/complexity/budget guarantees.
pub fn run_trial(spec: &PlantedSpec, cfg: &FilterConfig) -> Result<RunReport> {
    cfg.validate()?;
    let planted = plant_tree(spec)?;
    let oracle = match spec.label_kind {
        LabelKind::Binary => MemoizedOracle::new(TableOracle::from_binary_labels(
            planted.labels.iter().map(|(c, &v)| (c.clone(), v >= 0.5)),
        )),
        LabelKind::UnitInterval => MemoizedOracle::new(TableOracle::from_real_values(
            planted.labels.iter().map(|(c, &v)| (c.clone(), v)),
        )?),
    };
    let outcome = run_filter(&planted.tree, &oracle, cfg)?;

    let keep_mean = planted.set_mean(outcome.keep_chunks.iter());
    let discard_mean = planted.set_mean(outcome.discard_chunks.iter());
    let bound_width = final_bound_width(outcome.k as u64, cfg.delta, cfg.n_max)?;
    let prop1_ok = discard_mean.is_none_or(|m| m <= cfg.alpha + bound_width)
        && keep_mean.is_none_or(|m| m >= 1.0 - cfg.beta - bound_width);

    let margin = final_bound_width(spec.k_prime as u64, cfg.delta, cfg.n_max)?;
    let prop2_applicable =
        cfg.alpha >= spec.alpha_prime + margin && cfg.beta >= spec.beta_prime + margin;
    let prop2_ok = !prop2_applicable || outcome.k <= spec.k_prime;

    let evaluations = outcome.evaluation_order.len();
    let complexity_ok = evaluations as u64 <= 2 * outcome.k as u64
        && outcome.ledger.total_calls <= 2 * outcome.k as u64 * cfg.n_max;

    Ok(RunReport {
        seed: spec.seed,
        realized_k: outcome.k,
        evaluations,
        total_calls: outcome.ledger.total_calls,
        keep_mean,
        discard_mean,
        bound_width,
        prop1_ok,
        prop2_applicable,
        prop2_ok,
        complexity_ok,
    })
}

/// One-sided binomial check of an observed pass rate against a nominal rate.
///
/// Returns `true` unless the observed successes are so low that they would
/// occur with probability below `significance` under `Binomial(trials, rate)`
/// — i.e. a probabilistic guarantee only fails the gate when the data
/// actually contradicts it.
pub fn binomial_pass(successes: u64, trials: u64, nominal_rate: f64, significance: f64) -> bool {
    if successes >= trials {
        return true;
    }
    let dist = Binomial::new(nominal_rate, trials).expect("valid binomial parameters");
    dist.cdf(successes) >= significance
}

/// Aggregate results of `trials` runs of one (spec, cfg) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub branching: usize,
    pub depth: usize,
    pub k_prime: usize,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    pub label_kind: LabelKind,
    pub alpha: f64,
    pub beta: f64,
    pub n_max: u64,
    pub delta: f64,
    pub trials: u64,
    pub prop1_rate: f64,
    pub prop1_pass: bool,
    pub prop2_rate: f64,
    pub prop2_pass: bool,
    pub complexity_rate: f64,
    pub mean_k: f64,
    pub mean_calls: f64,
    pub mean_keep_mean: f64,
    pub mean_discard_mean: f64,
}

/// Runs `trials` independent seeded trials for every (spec, cfg) grid cell.
///
/// Trial seeds are derived from the cell seeds, trials run in parallel, and
/// rows are emitted in grid order, so the report is reproducible.
pub fn sweep(
    specs: &[PlantedSpec],
    cfgs: &[FilterConfig],
    trials: u64,
    significance: f64,
) -> Result<Vec<SweepRow>> {
    if specs.is_empty() || cfgs.is_empty() || trials == 0 {
        return Err(Error::InvalidParameter("empty sweep grid".into()));
    }
    let mut rows = Vec::with_capacity(specs.len() * cfgs.len());
    for spec in specs {
        for cfg in cfgs {
            let reports: Vec<RunReport> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut spec_t = spec.clone();
                    spec_t.seed = derive_seed(spec.seed, t);
                    let mut cfg_t = cfg.clone();
                    cfg_t.seed = derive_seed(cfg.seed ^ 0xCF6, t);
                    run_trial(&spec_t, &cfg_t)
                })
                .collect::<Result<_>>()?;
            rows.push(summarize_cell(spec, cfg, &reports, significance));
        }
    }
    Ok(rows)
}

fn summarize_cell(
    spec: &PlantedSpec,
    cfg: &FilterConfig,
    reports: &[RunReport],
    significance: f64,
) -> SweepRow {
    let n = reports.len() as f64;
    let count = |f: fn(&RunReport) -> bool| reports.iter().filter(|r| f(r)).count() as u64;
    let prop1 = count(|r| r.prop1_ok);
    let prop2 = count(|r| r.prop2_ok);
    let complexity = count(|r| r.complexity_ok);
    let mean_of = |f: fn(&RunReport) -> Option<f64>| {
        let vals: Vec<f64> = reports.iter().filter_map(f).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    SweepRow {
        branching: spec.branching,
        depth: spec.depth,
        k_prime: spec.k_prime,
        alpha_prime: spec.alpha_prime,
        beta_prime: spec.beta_prime,
        label_kind: spec.label_kind,
        alpha: cfg.alpha,
        beta: cfg.beta,
        n_max: cfg.n_max,
        delta: cfg.delta,
        trials: reports.len() as u64,
        prop1_rate: prop1 as f64 / n,
        prop1_pass: binomial_pass(prop1, reports.len() as u64, 1.0 - cfg.delta, significance),
        prop2_rate: prop2 as f64 / n,
        prop2_pass: binomial_pass(prop2, reports.len() as u64, 1.0 - cfg.delta, significance),
        complexity_rate: complexity as f64 / n,
        mean_k: reports.iter().map(|r| r.realized_k as f64).sum::<f64>() / n,
        mean_calls: reports.iter().map(|r| r.total_calls as f64).sum::<f64>() / n,
        mean_keep_mean: mean_of(|r| r.keep_mean),
        mean_discard_mean: mean_of(|r| r.discard_mean),
    }
}

/// Writes sweep rows as CSV with a header.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
