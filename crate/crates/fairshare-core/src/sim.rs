//! Discrete-time simulation of the distributed sharing policy: each slot,
//! every node sends its entire draw to the neighbor(s) currently
//! announcing the smallest sharing ratio.
//!
//! The simulator runs in floating point for speed; exact rationals enter
//! only through the configured distributions (whose declared means must
//! match their analytic means exactly) and at comparison time against
//! solver output. Announcements are synchronous: all ratios for slot `t`
//! are computed from data through slot `t - 1`, then all transfers happen
//! at once. At the first slot every ratio is zero, so the tie-break policy
//! alone decides where the first draws go.

use crate::endowment::Endowments;
use crate::graph::{Graph, GraphError, NodeId};
use crate::num::{rat_to_f64, Rat};
use crate::polymatroid::RateVector;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no distribution configured for node {0}")]
    MissingDistribution(NodeId),
    #[error("draw for node {0} missing")]
    MissingDraw(NodeId),
    #[error("draw {value} for node {node} exceeds its bound {bound}")]
    DrawOutOfBounds { node: NodeId, value: f64, bound: f64 },
    #[error("rate vector missing node {0}")]
    MissingRate(NodeId),
    #[error("index sets differ")]
    IndexMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DistKind {
    Constant,
    Uniform { low: Rat, high: Rat },
    ScaledBernoulli { p: Rat, hi: Rat },
    Discrete { values: Vec<Rat>, probs: Vec<Rat> },
}

/// A bounded non-negative draw distribution with an exactly declared mean.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributionSpec {
    kind: DistKind,
    mean: Rat,
    bound: Rat,
}

impl DistributionSpec {
    pub fn constant(value: Rat) -> Result<Self, SimError> {
        if !value.is_positive() {
            return Err(SimError::InvalidDistribution(
                "constant draw must be positive".into(),
            ));
        }
        Ok(DistributionSpec {
            kind: DistKind::Constant,
            bound: value.clone(),
            mean: value,
        })
    }

    pub fn uniform(low: Rat, high: Rat) -> Result<Self, SimError> {
        if low.is_negative() || low >= high {
            return Err(SimError::InvalidDistribution(
                "uniform support needs 0 <= low < high".into(),
            ));
        }
        let mean = (&low + &high) / Rat::from_integer(2.into());
        if !mean.is_positive() {
            return Err(SimError::InvalidDistribution(
                "uniform mean must be positive".into(),
            ));
        }
        Ok(DistributionSpec {
            kind: DistKind::Uniform {
                low,
                high: high.clone(),
            },
            mean,
            bound: high,
        })
    }

    pub fn scaled_bernoulli(p: Rat, hi: Rat) -> Result<Self, SimError> {
        if !p.is_positive() || p > Rat::one() || !hi.is_positive() {
            return Err(SimError::InvalidDistribution(
                "scaled bernoulli needs 0 < p <= 1 and hi > 0".into(),
            ));
        }
        let mean = &p * &hi;
        Ok(DistributionSpec {
            kind: DistKind::ScaledBernoulli { p, hi: hi.clone() },
            mean,
            bound: hi,
        })
    }

    pub fn discrete(values: Vec<Rat>, probs: Vec<Rat>) -> Result<Self, SimError> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(SimError::InvalidDistribution(
                "discrete needs equally many values and probabilities".into(),
            ));
        }
        if values.iter().any(|v| v.is_negative()) {
            return Err(SimError::InvalidDistribution(
                "discrete support must be non-negative".into(),
            ));
        }
        if probs.iter().any(|p| p.is_negative()) || probs.iter().sum::<Rat>() != Rat::one() {
            return Err(SimError::InvalidDistribution(
                "probabilities must be non-negative and sum to one".into(),
            ));
        }
        let mean: Rat = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        if !mean.is_positive() {
            return Err(SimError::InvalidDistribution(
                "discrete mean must be positive".into(),
            ));
        }
        let bound = values.iter().max().expect("nonempty").clone();
        Ok(DistributionSpec {
            kind: DistKind::Discrete { values, probs },
            mean,
            bound,
        })
    }

    pub fn kind(&self) -> &DistKind {
        &self.kind
    }

    /// Declared mean; equals the analytic mean exactly by construction.
    pub fn mean(&self) -> &Rat {
        &self.mean
    }

    pub fn bound(&self) -> &Rat {
        &self.bound
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.kind {
            DistKind::Constant => rat_to_f64(&self.mean),
            DistKind::Uniform { low, high } => {
                let lo = rat_to_f64(low);
                let hi = rat_to_f64(high);
                lo + (hi - lo) * rng.gen::<f64>()
            }
            DistKind::ScaledBernoulli { p, hi } => {
                if rng.gen::<f64>() < rat_to_f64(p) {
                    rat_to_f64(hi)
                } else {
                    0.0
                }
            }
            DistKind::Discrete { values, probs } => {
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += rat_to_f64(p);
                    if u < acc {
                        return rat_to_f64(v);
                    }
                }
                rat_to_f64(values.last().expect("nonempty"))
            }
        }
    }
}

/// How a node estimates its own mean endowment when announcing ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    /// Use the declared mean directly.
    ExactMean,
    /// Running average of the draws so far; announces ratio zero until the
    /// first positive cumulative draw.
    RunningAverage,
    /// Exponential discounting with factor `alpha` in (0, 1): values near
    /// one track the running average closely while adapting to drift.
    Discounted { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Split the draw equally among all minimum-ratio neighbors.
    SplitEqually,
    /// Send everything to the minimum-ratio neighbor with the lowest id.
    LowestIndex,
    /// Send everything to one minimum-ratio neighbor chosen uniformly.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: u64,
    pub estimator: Estimator,
    pub tie_break: TieBreak,
    pub seed: u64,
    pub record_every: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon < 1 {
            return Err(SimError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.record_every < 1 {
            return Err(SimError::InvalidConfig(
                "record_every must be at least 1".into(),
            ));
        }
        if let Estimator::Discounted { alpha } = self.estimator {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(SimError::InvalidConfig(
                    "discount factor must lie strictly inside (0, 1)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Mutable simulation state: announced ratios, received averages, draw
/// statistics. Node order follows the graph's sorted ids.
#[derive(Debug, Clone)]
pub struct SimState {
    ids: Vec<NodeId>,
    adjacency: Vec<Vec<usize>>,
    dists: Vec<DistributionSpec>,
    bounds: Vec<f64>,
    completed: u64,
    rho: Vec<f64>,
    r_bar: Vec<f64>,
    cum_draw: Vec<f64>,
    estimate: Vec<f64>,
}

impl SimState {
    pub fn new(g: &Graph, dists: &BTreeMap<NodeId, DistributionSpec>) -> Result<Self, SimError> {
        g.ensure_connected()?;
        let ids: Vec<NodeId> = g.nodes().to_vec();
        let mut adjacency = Vec::with_capacity(ids.len());
        let mut specs = Vec::with_capacity(ids.len());
        for &id in &ids {
            adjacency.push(
                g.neighbors(id)?
                    .map(|nb| g.position(nb).expect("neighbor exists"))
                    .collect(),
            );
            specs.push(
                dists
                    .get(&id)
                    .cloned()
                    .ok_or(SimError::MissingDistribution(id))?,
            );
        }
        let n = ids.len();
        let bounds = specs.iter().map(|s| rat_to_f64(s.bound())).collect();
        Ok(SimState {
            ids,
            adjacency,
            dists: specs,
            bounds,
            completed: 0,
            rho: vec![0.0; n],
            r_bar: vec![0.0; n],
            cum_draw: vec![0.0; n],
            estimate: vec![0.0; n],
        })
    }

    /// Number of completed slots.
    pub fn completed_slots(&self) -> u64 {
        self.completed
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Announced ratios, aligned with [`Self::ids`].
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn r_bar(&self) -> &[f64] {
        &self.r_bar
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimate
    }
}

/// Advances the state by one slot with the given draws. Every node sends
/// its whole draw to the neighbor(s) with the smallest announced ratio;
/// received amounts fold into the running averages via
/// `avg += (new - avg) / t`, and fresh ratios are announced from the
/// configured estimator.
pub fn step(
    state: &mut SimState,
    draws: &BTreeMap<NodeId, f64>,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(), SimError> {
    let n = state.ids.len();
    let mut draw_vec = Vec::with_capacity(n);
    for (pos, &id) in state.ids.iter().enumerate() {
        let &value = draws.get(&id).ok_or(SimError::MissingDraw(id))?;
        if value < 0.0 || value > state.bounds[pos] {
            return Err(SimError::DrawOutOfBounds {
                node: id,
                value,
                bound: state.bounds[pos],
            });
        }
        draw_vec.push(value);
    }

    let mut received = vec![0.0f64; n];
    for (pos, &draw) in draw_vec.iter().enumerate() {
        let nbrs = &state.adjacency[pos];
        debug_assert!(!nbrs.is_empty(), "connected graph has no isolated nodes");
        let min = nbrs
            .iter()
            .map(|&j| state.rho[j])
            .fold(f64::INFINITY, f64::min);
        let targets: Vec<usize> = nbrs
            .iter()
            .copied()
            .filter(|&j| state.rho[j] == min)
            .collect();
        match cfg.tie_break {
            TieBreak::SplitEqually => {
                let share = draw / targets.len() as f64;
                for &j in &targets {
                    received[j] += share;
                }
            }
            TieBreak::LowestIndex => {
                received[targets[0]] += draw;
            }
            TieBreak::UniformRandom => {
                let pick = targets[rng.gen_range(0..targets.len())];
                received[pick] += draw;
            }
        }
    }

    let t_new = state.completed + 1;
    for pos in 0..n {
        state.r_bar[pos] += (received[pos] - state.r_bar[pos]) / t_new as f64;
        state.cum_draw[pos] += draw_vec[pos];
        state.estimate[pos] = match cfg.estimator {
            Estimator::ExactMean => rat_to_f64(state.dists[pos].mean()),
            Estimator::RunningAverage => state.cum_draw[pos] / t_new as f64,
            Estimator::Discounted { alpha } => {
                if t_new == 1 {
                    draw_vec[pos]
                } else {
                    (1.0 - alpha) * draw_vec[pos] + alpha * state.estimate[pos]
                }
            }
        };
        state.rho[pos] = if state.estimate[pos] > 0.0 {
            state.r_bar[pos] / state.estimate[pos]
        } else {
            0.0
        };
    }
    state.completed = t_new;
    Ok(())
}

/// One recorded slot of a simulation run.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub t: u64,
    pub r_bar: Vec<f64>,
    pub rho: Vec<f64>,
    pub estimate: Vec<f64>,
    /// Lyapunov value against the reference rates, when one was supplied.
    pub lyapunov: Option<f64>,
}

/// Recorded time series of a run; rows align with `ids`.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub ids: Vec<NodeId>,
    pub records: Vec<TraceRecord>,
}

impl SimTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a run records at least its final slot")
    }
}

fn lyapunov_f64(r_bar: &[f64], reference: &[f64], means: &[f64]) -> f64 {
    0.5 * r_bar
        .iter()
        .zip(reference)
        .zip(means)
        .map(|((x, r), d)| (x - r) * (x - r) / d)
        .sum::<f64>()
}

/// Runs the policy for `cfg.horizon` slots with seeded draws. Slots whose
/// index is a multiple of `record_every`, plus the final slot, land in the
/// trace. Supplying reference received rates adds Lyapunov values to every
/// record. Identical seed and configuration reproduce the trace exactly.
pub fn run(
    g: &Graph,
    dists: &BTreeMap<NodeId, DistributionSpec>,
    cfg: &SimConfig,
    reference: Option<&RateVector>,
) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    let mut state = SimState::new(g, dists)?;
    let ids = state.ids.clone();
    let reference_f: Option<Vec<f64>> = match reference {
        Some(r) => Some(
            ids.iter()
                .map(|id| r.get(id).map(rat_to_f64).ok_or(SimError::MissingRate(*id)))
                .collect::<Result<_, _>>()?,
        ),
        None => None,
    };
    let means_f: Vec<f64> = state.dists.iter().map(|s| rat_to_f64(s.mean())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    for t in 1..=cfg.horizon {
        let draws: BTreeMap<NodeId, f64> = ids
            .iter()
            .enumerate()
            .map(|(pos, &id)| (id, state.dists[pos].sample(&mut rng)))
            .collect();
        step(&mut state, &draws, cfg, &mut rng)?;
        if t % cfg.record_every == 0 || t == cfg.horizon {
            records.push(TraceRecord {
                t,
                r_bar: state.r_bar.clone(),
                rho: state.rho.clone(),
                estimate: state.estimate.clone(),
                lyapunov: reference_f
                    .as_ref()
                    .map(|r| lyapunov_f64(&state.r_bar, r, &means_f)),
            });
        }
    }
    Ok(SimTrace { ids, records })
}

/// The expected received amounts for announced ratios `rho`, exactly:
/// node `j` splits its mean endowment equally among the neighbors
/// attaining `min over N_j of rho`, and `J_i` collects node `i`'s shares.
///
/// For every level prefix of `rho` the totals satisfy
/// `sum of J over the prefix = f(prefix)`: a prefix absorbs everything its
/// neighbors generate, because any node with a prefix neighbor has its
/// whole minimizer set inside the prefix.
pub fn expected_step(
    g: &Graph,
    d: &Endowments,
    rho: &RateVector,
) -> Result<RateVector, SimError> {
    let mut out: RateVector = g.nodes().iter().map(|&i| (i, Rat::zero())).collect();
    for &j in g.nodes() {
        let mut min: Option<&Rat> = None;
        for nb in g.neighbors(j)? {
            let value = rho.get(&nb).ok_or(SimError::MissingRate(nb))?;
            if min.is_none_or(|m| value < m) {
                min = Some(value);
            }
        }
        let min = min.expect("connected graph has no isolated nodes").clone();
        let argmin: Vec<NodeId> = g
            .neighbors(j)?
            .filter(|nb| rho[nb] == min)
            .collect();
        let share = d
            .mean(j)
            .map_err(|_| SimError::MissingRate(j))?
            / Rat::from_integer((argmin.len() as i64).into());
        for i in argmin {
            *out.get_mut(&i).expect("graph node") += &share;
        }
    }
    Ok(out)
}

/// The quadratic divergence `1/2 sum (rbar_i - rstar_i)^2 / D_i`, exactly.
/// Zero precisely when the vectors coincide.
pub fn lyapunov(rbar: &RateVector, rstar: &RateVector, d: &Endowments) -> Result<Rat, SimError> {
    if rbar.len() != rstar.len() || !rbar.keys().eq(rstar.keys()) {
        return Err(SimError::IndexMismatch);
    }
    let mut acc = Rat::zero();
    for (id, x) in rbar {
        let diff = x - &rstar[id];
        let mean = d.mean(*id).map_err(|_| SimError::MissingRate(*id))?;
        acc += &diff * &diff / mean;
    }
    Ok(acc / Rat::from_integer(2.into()))
}

/// Convergence bands reported by [`convergence_report`].
pub const TOLERANCE_BANDS: [f64; 3] = [0.1, 0.05, 0.01];

#[derive(Debug, Clone)]
pub struct CheckpointMetric {
    pub t: u64,
    pub max_abs_dev: f64,
    pub lyapunov: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceMetrics {
    pub checkpoints: Vec<CheckpointMetric>,
    /// First recorded slot at which the ratio deviation enters each band.
    pub band_entries: Vec<(f64, Option<u64>)>,
    /// Fraction of consecutive checkpoint pairs with non-increasing
    /// Lyapunov value; a crude monotone-trend statistic.
    pub lyapunov_nonincreasing_fraction: f64,
    pub final_max_abs_dev: f64,
    pub final_lyapunov: f64,
}

/// Per-checkpoint distance of the announced ratios from the reference
/// ratios (`max over i of |rho_i(t) - rstar_i / D_i|`), Lyapunov values of
/// the received averages, and first-entry slots for the standard bands.
pub fn convergence_report(
    trace: &SimTrace,
    rstar: &RateVector,
    d: &Endowments,
) -> Result<ConvergenceMetrics, SimError> {
    let mut rho_star = Vec::with_capacity(trace.ids.len());
    let mut rstar_f = Vec::with_capacity(trace.ids.len());
    let mut means_f = Vec::with_capacity(trace.ids.len());
    for id in &trace.ids {
        let r = rstar.get(id).ok_or(SimError::MissingRate(*id))?;
        let mean = d.mean(*id).map_err(|_| SimError::MissingRate(*id))?;
        rho_star.push(rat_to_f64(&(r / mean)));
        rstar_f.push(rat_to_f64(r));
        means_f.push(rat_to_f64(mean));
    }
    let mut checkpoints = Vec::with_capacity(trace.records.len());
    for rec in &trace.records {
        let max_abs_dev = rec
            .rho
            .iter()
            .zip(&rho_star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let lyap = rec
            .lyapunov
            .unwrap_or_else(|| lyapunov_f64(&rec.r_bar, &rstar_f, &means_f));
        checkpoints.push(CheckpointMetric {
            t: rec.t,
            max_abs_dev,
            lyapunov: lyap,
        });
    }
    let band_entries = TOLERANCE_BANDS
        .iter()
        .map(|&band| {
            let entry = checkpoints
                .iter()
                .find(|c| c.max_abs_dev <= band)
                .map(|c| c.t);
            (band, entry)
        })
        .collect();
    let pairs = checkpoints.windows(2).count();
    let nonincreasing = checkpoints
        .windows(2)
        .filter(|w| w[1].lyapunov <= w[0].lyapunov)
        .count();
    let fraction = if pairs == 0 {
        1.0
    } else {
        nonincreasing as f64 / pairs as f64
    };
    let last = checkpoints.last().expect("trace has at least one record");
    Ok(ConvergenceMetrics {
        final_max_abs_dev: last.max_abs_dev,
        final_lyapunov: last.lyapunov,
        checkpoints,
        band_entries,
        lyapunov_nonincreasing_fraction: fraction,
    })
}
