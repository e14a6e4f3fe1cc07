//! Statistical machinery for node quality estimates.
//!
//! Three interval flavors back the subtree decisions:
//! - anytime Hoeffding half-widths with the per-evaluation confidence
//!   schedule `delta_i = 6*delta / (i^2 * pi^2)` (summing to `delta`),
//! - the final purity bound width `sqrt(log(1.3*K/delta) / n_max)`,
//! - equal-tailed credible intervals from a Dirichlet posterior over the
//!   ordinal feedback histogram.

use std::f64::consts::PI;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::score::Score;
use crate::tree::NodeId;

/// Sampled quality statistics at one tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEstimate {
    pub node_id: NodeId,
    pub n_samples: u64,
    /// Histogram over ordinal levels `0..L`; empty when the oracle reported
    /// raw real-valued scores.
    pub level_counts: Vec<u64>,
    /// Evaluations that failed (scored as 0).
    pub failures: u64,
    /// Empirical mean of the normalized scores.
    pub mean: f64,
    /// True when every leaf of the node was evaluated, making `mean` exact.
    pub exhaustive: bool,
}

impl NodeEstimate {
    /// Accumulates a batch of oracle scores into an estimate.
    ///
    /// The mean sums normalized values in sample order, so exhaustive
    /// estimates reproduce a reference mean computed over the same leaf
    /// enumeration bit-for-bit.
    pub fn from_scores(
        node_id: NodeId,
        scores: &[Score],
        levels: u32,
        exhaustive: bool,
    ) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptySet);
        }
        let ordinal = scores.iter().all(|s| matches!(s, Score::Ordinal(_)));
        let mut level_counts = if ordinal {
            vec![0u64; levels as usize]
        } else {
            Vec::new()
        };
        let mut failures = 0u64;
        let mut sum = 0.0;
        for score in scores {
            sum += score.value();
            match score {
                Score::Ordinal(s) if s.is_failure() => failures += 1,
                Score::Ordinal(s) => {
                    if ordinal {
                        level_counts[s.level() as usize] += 1;
                    }
                }
                Score::Real(v) => {
                    if !(0.0..=1.0).contains(v) {
                        return Err(Error::InvalidParameter(format!(
                            "real-valued score {v} outside [0, 1]"
                        )));
                    }
                }
            }
        }
        Ok(NodeEstimate {
            node_id,
            n_samples: scores.len() as u64,
            level_counts,
            failures,
            mean: sum / scores.len() as f64,
            exhaustive,
        })
    }

    pub fn is_ordinal(&self) -> bool {
        !self.level_counts.is_empty()
    }
}

/// Hoeffding half-width `sqrt(log(2/delta_prime) / (2n))` for the empirical
/// mean of `n` samples bounded in `[0, 1]`.
pub fn hoeffding_halfwidth(n: u64, delta_prime: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta_prime {delta_prime} outside (0, 1)"
        )));
    }
    Ok(((2.0 / delta_prime).ln() / (2.0 * n as f64)).sqrt())
}

/// Confidence allocated to the `i`-th node evaluation:
/// `6*delta / (i^2 * pi^2)`. The series over all `i >= 1` sums to `delta`.
pub fn delta_schedule(i: u64, delta: f64) -> Result<f64> {
    if i == 0 {
        return Err(Error::InvalidParameter("index must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    let i = i as f64;
    Ok(6.0 * delta / (i * i * PI * PI))
}

/// Width `sqrt(log(1.3*K/delta) / n_max)` bounding the purity loss of a cut
/// of complexity `K`. Dominates `hoeffding_halfwidth(n_max, delta_schedule(2K, delta))`
/// whenever `delta < 3*1.69/(4*pi^2)` (~0.128), which covers all practical settings.
pub fn final_bound_width(k: u64, delta: f64, n_max: u64) -> Result<f64> {
    if k == 0 || n_max == 0 {
        return Err(Error::InvalidParameter(
            "k and n_max must be positive".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    let arg = 1.3 * k as f64 / delta;
    if arg <= 1.0 {
        return Err(Error::InvalidParameter(
            "1.3*K/delta must exceed 1".into(),
        ));
    }
    Ok((arg.ln() / n_max as f64).sqrt())
}

/// Configuration of the Bayesian credible interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalConfig {
    /// Overall failure probability budget (shared with the Hoeffding schedule).
    pub delta: f64,
    /// Mass of the equal-tailed interval.
    pub credible_mass: f64,
    /// Number of posterior draws used to form the interval.
    pub posterior_samples: u32,
    /// Dirichlet prior over the ordinal levels; all entries positive.
    pub prior: Vec<f64>,
    pub seed: u64,
}

impl IntervalConfig {
    /// Uniform Dirichlet(1, ..., 1) prior over `levels` ordinal outcomes.
    pub fn uniform(levels: u32) -> Self {
        IntervalConfig {
            delta: 0.05,
            credible_mass: 0.95,
            posterior_samples: 100,
            prior: vec![1.0; levels as usize],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter("delta outside (0, 1)".into()));
        }
        if !(self.credible_mass > 0.0 && self.credible_mass < 1.0) {
            return Err(Error::InvalidParameter(
                "credible_mass outside (0, 1)".into(),
            ));
        }
        if self.posterior_samples == 0 {
            return Err(Error::InvalidParameter(
                "posterior_samples must be positive".into(),
            ));
        }
        if self.prior.len() < 2 || self.prior.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidParameter(
                "prior needs >= 2 strictly positive entries".into(),
            ));
        }
        Ok(())
    }
}

impl Default for IntervalConfig {
    fn default() -> Self {
        IntervalConfig::uniform(6)
    }
}

/// Equal-tailed credible interval for the normalized mean of a node.
///
/// Draws `posterior_samples` probability vectors from
/// `Dirichlet(prior + level_counts)` (failures folded into level 0), maps
/// each to its normalized mean `sum_j p_j * j/(L-1)`, and returns the
/// empirical `((1-mass)/2, 1-(1-mass)/2)` quantiles. Deterministic given
/// the config seed: the generator is derived from `(seed, node_id)`.
pub fn credible_interval(est: &NodeEstimate, cfg: &IntervalConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    if est.n_samples == 0 {
        return Err(Error::InvalidParameter("estimate has no samples".into()));
    }
    if !est.is_ordinal() {
        return Err(Error::InvalidParameter(
            "credible interval requires ordinal level counts".into(),
        ));
    }
    if cfg.prior.len() != est.level_counts.len() {
        return Err(Error::InvalidParameter(format!(
            "prior length {} does not match {} ordinal levels",
            cfg.prior.len(),
            est.level_counts.len()
        )));
    }
    let levels = est.level_counts.len();
    let mut alphas: Vec<f64> = cfg
        .prior
        .iter()
        .zip(est.level_counts.iter())
        .map(|(&a, &c)| a + c as f64)
        .collect();
    // A failed evaluation is scored 0, so it acts as a level-0 observation.
    alphas[0] += est.failures as f64;

    let mut rng = seeded_rng(cfg.seed, est.node_id.0 as u64);
    let gammas: Vec<Gamma<f64>> = alphas
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<_>>()?;
    let mut means = Vec::with_capacity(cfg.posterior_samples as usize);
    let denom = (levels - 1) as f64;
    for _ in 0..cfg.posterior_samples {
        let draws: Vec<f64> = gammas.iter().map(|g| g.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        let mean = draws
            .iter()
            .enumerate()
            .map(|(j, &g)| (g / total) * (j as f64 / denom))
            .sum::<f64>();
        means.push(mean);
    }
    means.sort_by(|a, b| a.total_cmp(b));
    let tail = (1.0 - cfg.credible_mass) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}

/// Linear-interpolation quantile of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Shannon entropy (bits) of the empirical distribution of `counts`.
pub fn feedback_entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptySet);
    }
    let total = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.log2();
        }
    }
    Ok(h)
}
