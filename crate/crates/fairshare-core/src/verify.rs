//! Independent verifiers for the three views of an allocation: the
//! structural conditions of the optimal level decomposition, the
//! sharing-equilibrium conditions of a transfer assignment, and
//! coalitional strong stability via an exhaustive (or sampled) search for
//! blocking coalitions.
//!
//! These run against solver output but never share its code paths: the
//! structure checker reconstructs the residual sets from scratch and the
//! stability search reasons about feasibility with lower-bounded flows
//! only.

use crate::endowment::{EndowmentError, Endowments};
use crate::flow::{feasible_flow_lower_bounds, Capacity, FlowError, FlowNetwork, ResidualSearch};
use crate::graph::{Graph, GraphError, NodeId, NodeSet};
use crate::num::Rat;
use crate::polymatroid::RateVector;
use crate::solver::{Allocation, LevelDecomposition};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Exhaustive coalition search refuses instances above this many nodes.
pub const EXHAUSTIVE_COALITION_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Endowment(#[from] EndowmentError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("decomposition does not cover the graph's node set")]
    DecompositionMismatch,
    #[error(
        "{nodes} nodes exceeds the exhaustive coalition cap of {cap}; use sampled mode"
    )]
    ExhaustiveCap { nodes: usize, cap: usize },
    #[error("rate vector missing node {0}")]
    MissingRate(NodeId),
}

/// Result of a condition-by-condition check; failures carry a readable
/// description of the violated condition.
#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub checked: usize,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(describe());
        }
    }
}

/// Verifies the structural conditions a lex-optimal decomposition must
/// satisfy: per paired stage `k`, the low set is independent in the
/// residual subgraph, its residual neighborhood is exactly the paired high
/// set, paired values multiply to one, and the low set's received total
/// equals the high set's endowment total; an odd middle level sits at
/// value one, and the extreme values bracket one whenever there is more
/// than one level.
pub fn check_structure(
    g: &Graph,
    d: &Endowments,
    dec: &LevelDecomposition,
) -> Result<CheckReport, VerifyError> {
    if dec.node_set() != g.node_set() {
        return Err(VerifyError::DecompositionMismatch);
    }
    let mut report = CheckReport::default();
    let levels = dec.levels();
    let sets = dec.level_sets();
    let k_total = dec.level_count();
    let one = Rat::one();

    if k_total == 1 {
        report.check(levels[0] == one, || {
            format!("single level must sit at ratio 1, found {}", levels[0])
        });
    } else {
        report.check(levels[0] < one, || {
            format!("lowest level {} must be below 1", levels[0])
        });
        report.check(levels[k_total - 1] > one, || {
            format!("highest level {} must be above 1", levels[k_total - 1])
        });
    }

    let mut residual = g.node_set();
    for k in 0..k_total / 2 {
        let low = &sets[k];
        let high = &sets[k_total - 1 - k];
        let stage = g.induced_subgraph(&residual)?;
        report.check(stage.is_independent(low)?, || {
            format!("level {k} is not independent in its residual subgraph")
        });
        let nbr = stage.neighborhood(low)?;
        report.check(&nbr == high, || {
            format!(
                "residual neighborhood of level {k} is {nbr:?}, expected its paired level"
            )
        });
        let product = &levels[k] * &levels[k_total - 1 - k];
        report.check(product == one, || {
            format!(
                "paired level values {} and {} do not multiply to 1",
                levels[k],
                levels[k_total - 1 - k]
            )
        });
        let low_received = &levels[k] * d.total(low)?;
        let high_endowment = d.total(high)?;
        report.check(low_received == high_endowment, || {
            format!(
                "level {k} receives {low_received} but its paired level generates {high_endowment}"
            )
        });
        for id in low.iter().chain(high.iter()) {
            residual.remove(id);
        }
    }
    if k_total % 2 == 1 {
        let mid = k_total / 2;
        report.check(levels[mid] == one, || {
            format!("odd level count requires a unit middle value, found {}", levels[mid])
        });
    }
    Ok(report)
}

/// Verifies the sharing-equilibrium conditions of an allocation against a
/// decomposition: transfers ride edges, every node fully distributes its
/// endowment, every node receives exactly its ratio times its endowment,
/// and every positive transfer goes to a minimum-ratio neighbor of the
/// sender.
pub fn check_sharing_equilibrium(
    g: &Graph,
    d: &Endowments,
    alloc: &Allocation,
    dec: &LevelDecomposition,
) -> Result<CheckReport, VerifyError> {
    if dec.node_set() != g.node_set() {
        return Err(VerifyError::DecompositionMismatch);
    }
    let mut report = CheckReport::default();
    let mut sent: BTreeMap<NodeId, Rat> = g.nodes().iter().map(|&i| (i, Rat::zero())).collect();
    let mut received = sent.clone();
    for (i, j, v) in alloc.transfers() {
        if !g.contains_edge(i, j) {
            report.checked += 1;
            report
                .failures
                .push(format!("transfer {i}->{j} does not ride an edge"));
            continue;
        }
        *sent.get_mut(&i).expect("endpoints validated") += v;
        *received.get_mut(&j).expect("endpoints validated") += v;
    }
    for &i in g.nodes() {
        report.check(sent[&i] == *d.mean(i)?, || {
            format!("node {i} sends {} of its endowment {}", sent[&i], d.mean(i).unwrap())
        });
        let want = dec.ratio_of(i).expect("coverage validated") * d.mean(i)?;
        report.check(received[&i] == want, || {
            format!("node {i} receives {} instead of {}", received[&i], want)
        });
    }
    for (i, j, _) in alloc.transfers() {
        if !g.contains_edge(i, j) {
            continue;
        }
        let min_ratio = g
            .neighbors(i)?
            .map(|n| dec.ratio_of(n).expect("coverage validated"))
            .min()
            .expect("sender has at least one neighbor");
        let target = dec.ratio_of(j).expect("coverage validated");
        report.check(target == min_ratio, || {
            format!(
                "node {i} sends to {j} at ratio {target} although a neighbor sits at {min_ratio}"
            )
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityMode {
    Exhaustive,
    Sampled,
}

/// A coalition that can weakly improve every member and strictly improve
/// at least one, together with the witnessing received rates.
#[derive(Debug, Clone)]
pub struct BlockingWitness {
    pub coalition: NodeSet,
    pub improving_rates: RateVector,
}

#[derive(Debug)]
pub struct StabilityReport {
    pub checked_coalitions: usize,
    pub mode: StabilityMode,
    pub blocking: Option<BlockingWitness>,
}

impl StabilityReport {
    /// No blocking coalition found. In sampled mode this is evidence
    /// within the budget, not a proof.
    pub fn stable(&self) -> bool {
        self.blocking.is_none()
    }
}

/// Tests one coalition: can its members, trading only among themselves on
/// their induced subgraph, weakly beat the reference rates with at least
/// one strict improvement?
///
/// The transfer polytope is encoded bipartitely (a giver and a taker
/// vertex per member) so resources move one hop and are consumed, never
/// relayed. Feasibility of the reference rates is a lower-bounded flow;
/// strictness is one augmentation probe per member.
fn coalition_blocks(
    g: &Graph,
    d: &Endowments,
    reference: &RateVector,
    coalition: &NodeSet,
) -> Result<Option<RateVector>, VerifyError> {
    let members: Vec<NodeId> = coalition.iter().copied().collect();
    let k = members.len();
    let pos: BTreeMap<NodeId, usize> = members.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let giver = |p: usize| 2 + p;
    let taker = |p: usize| 2 + k + p;
    let mut net = FlowNetwork::new(2 + 2 * k, 0, 1)?;
    for (p, &i) in members.iter().enumerate() {
        net.add_arc(0, giver(p), Capacity::Finite(d.mean(i)?.clone()))?;
    }
    let induced = g.induced_subgraph(coalition)?;
    for (a, b) in induced.edges() {
        net.add_arc(giver(pos[&a]), taker(pos[&b]), Capacity::Unbounded)?;
        net.add_arc(giver(pos[&b]), taker(pos[&a]), Capacity::Unbounded)?;
    }
    let mut sink_arcs = Vec::with_capacity(k);
    for (p, &j) in members.iter().enumerate() {
        let bound = reference
            .get(&j)
            .ok_or(VerifyError::MissingRate(j))?
            .clone();
        sink_arcs.push(net.add_arc_with_lower(taker(p), 1, bound, Capacity::Unbounded)?);
    }
    let Some(flows) = feasible_flow_lower_bounds(&net)? else {
        return Ok(None);
    };
    let rates_of = |flows: &[Rat]| -> RateVector {
        members
            .iter()
            .zip(&sink_arcs)
            .map(|(&j, arc)| (j, flows[arc.0].clone()))
            .collect()
    };
    // The feasibility solve may already exceed a bound somewhere.
    for (&j, arc) in members.iter().zip(&sink_arcs) {
        if flows[arc.0] > reference[&j] {
            return Ok(Some(rates_of(&flows)));
        }
    }
    // Everyone sits exactly at the reference; probe each member for slack.
    let mut search = ResidualSearch::new(&net, flows);
    for arc in &sink_arcs {
        if search.try_increase_sink_arc(*arc).is_some() {
            return Ok(Some(rates_of(search.flows())));
        }
    }
    Ok(None)
}

/// Searches for a blocking coalition against the received rates of a
/// decomposition. Exhaustive mode scans every nonempty subset (refusing
/// instances above [`EXHAUSTIVE_COALITION_CAP`] nodes); sampled mode draws
/// `budget` uniform nonempty subsets from a seeded generator and is
/// explicitly not a proof of stability.
pub fn find_blocking_coalition(
    g: &Graph,
    d: &Endowments,
    dec: &LevelDecomposition,
    mode: StabilityMode,
    budget: usize,
    seed: u64,
) -> Result<StabilityReport, VerifyError> {
    if dec.node_set() != g.node_set() {
        return Err(VerifyError::DecompositionMismatch);
    }
    let mut reference = RateVector::new();
    for &i in g.nodes() {
        reference.insert(i, dec.ratio_of(i).expect("coverage validated") * d.mean(i)?);
    }
    find_blocking_for_rates(g, d, &reference, mode, budget, seed)
}

/// Same search against arbitrary reference rates; lets callers probe
/// deliberately suboptimal vectors, which a blocking coalition should
/// dominate.
pub fn find_blocking_for_rates(
    g: &Graph,
    d: &Endowments,
    reference: &RateVector,
    mode: StabilityMode,
    budget: usize,
    seed: u64,
) -> Result<StabilityReport, VerifyError> {
    let nodes: Vec<NodeId> = g.nodes().to_vec();
    let n = nodes.len();
    let mut checked = 0usize;
    let mut blocking = None;
    match mode {
        StabilityMode::Exhaustive => {
            if n > EXHAUSTIVE_COALITION_CAP {
                return Err(VerifyError::ExhaustiveCap {
                    nodes: n,
                    cap: EXHAUSTIVE_COALITION_CAP,
                });
            }
            for mask in 1u32..(1u32 << n) {
                let coalition: NodeSet = nodes
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| mask >> p & 1 == 1)
                    .map(|(_, &id)| id)
                    .collect();
                checked += 1;
                if let Some(rates) = coalition_blocks(g, d, reference, &coalition)? {
                    blocking = Some(BlockingWitness {
                        coalition,
                        improving_rates: rates,
                    });
                    break;
                }
            }
        }
        StabilityMode::Sampled => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..budget {
                let coalition: NodeSet = loop {
                    let s: NodeSet = nodes
                        .iter()
                        .copied()
                        .filter(|_| rng.gen::<bool>())
                        .collect();
                    if !s.is_empty() {
                        break s;
                    }
                };
                checked += 1;
                if let Some(rates) = coalition_blocks(g, d, reference, &coalition)? {
                    blocking = Some(BlockingWitness {
                        coalition,
                        improving_rates: rates,
                    });
                    break;
                }
            }
        }
    }
    Ok(StabilityReport {
        checked_coalitions: checked,
        mode,
        blocking,
    })
}
