//! The lex-optimal solver: minimum deficiency ratios, recursive peeling
//! into paired levels, the equality-based optimality certificate, and
//! extraction of an allocation realizing the optimal received rates.
//!
//! Everything here is exact. Level grouping and tight-set detection hinge
//! on equalities between rationals, so no floating point is allowed on
//! any path that decides set membership.

use crate::endowment::{EndowmentError, Endowments};
use crate::flow::{self, FlowError};
use crate::graph::{Graph, GraphError, NodeId, NodeSet};
use crate::num::Rat;
use crate::polymatroid::{self, PolymatroidError, RateVector, ENUMERATION_CAP};
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Endowment(#[from] EndowmentError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Polymatroid(#[from] PolymatroidError),
    #[error("restrict set must be nonempty")]
    EmptyRestrict,
    #[error(
        "node {0} is isolated inside the restricted subgraph but has a positive \
         endowment, so its deficiency ratio is 0"
    )]
    IsolatedNode(NodeId),
    #[error("malformed level decomposition: {0}")]
    MalformedDecomposition(String),
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

/// The level structure of a ratio vector: strictly increasing values
/// `v_1 < ... < v_K` and the disjoint node sets attaining them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelDecomposition {
    levels: Vec<Rat>,
    level_sets: Vec<NodeSet>,
    level_of: BTreeMap<NodeId, usize>,
}

impl LevelDecomposition {
    /// Well-formedness only: positive strictly increasing values, disjoint
    /// nonempty sets. The structural optimality conditions are the
    /// verifiers' business, so deliberately broken decompositions can be
    /// built for testing them.
    pub fn new(levels: Vec<Rat>, level_sets: Vec<NodeSet>) -> Result<Self, SolverError> {
        if levels.is_empty() || levels.len() != level_sets.len() {
            return Err(SolverError::MalformedDecomposition(
                "need equally many level values and level sets, at least one".into(),
            ));
        }
        for w in levels.windows(2) {
            if w[0] >= w[1] {
                return Err(SolverError::MalformedDecomposition(
                    "level values must be strictly increasing".into(),
                ));
            }
        }
        if !levels[0].is_positive() {
            return Err(SolverError::MalformedDecomposition(
                "level values must be positive".into(),
            ));
        }
        let mut level_of = BTreeMap::new();
        for (k, set) in level_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(SolverError::MalformedDecomposition(
                    "level sets must be nonempty".into(),
                ));
            }
            for &id in set {
                if level_of.insert(id, k).is_some() {
                    return Err(SolverError::MalformedDecomposition(format!(
                        "node {id} appears in two level sets"
                    )));
                }
            }
        }
        Ok(LevelDecomposition {
            levels,
            level_sets,
            level_of,
        })
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Level values in increasing order.
    pub fn levels(&self) -> &[Rat] {
        &self.levels
    }

    /// Level sets aligned with [`Self::levels`].
    pub fn level_sets(&self) -> &[NodeSet] {
        &self.level_sets
    }

    pub fn node_set(&self) -> NodeSet {
        self.level_of.keys().copied().collect()
    }

    /// 0-based level index of a node.
    pub fn level_of(&self, id: NodeId) -> Option<usize> {
        self.level_of.get(&id).copied()
    }

    /// The node's sharing ratio `rho_i`.
    pub fn ratio_of(&self, id: NodeId) -> Option<&Rat> {
        self.level_of.get(&id).map(|&k| &self.levels[k])
    }

    pub fn ratios(&self) -> RateVector {
        self.level_of
            .iter()
            .map(|(&id, &k)| (id, self.levels[k].clone()))
            .collect()
    }

    /// Received rates `r_i = rho_i * D_i`.
    pub fn received(&self, d: &Endowments) -> Result<RateVector, SolverError> {
        self.level_of
            .iter()
            .map(|(&id, &k)| Ok((id, &self.levels[k] * d.mean(id)?)))
            .collect()
    }
}

/// Directed per-edge transfer rates realizing a received-rate vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Allocation {
    transfers: BTreeMap<(NodeId, NodeId), Rat>,
}

impl Allocation {
    pub fn new(transfers: BTreeMap<(NodeId, NodeId), Rat>) -> Self {
        let transfers = transfers
            .into_iter()
            .filter(|(_, v)| v.is_positive())
            .collect();
        Allocation { transfers }
    }

    pub fn transfers(&self) -> impl Iterator<Item = (NodeId, NodeId, &Rat)> {
        self.transfers.iter().map(|(&(i, j), v)| (i, j, v))
    }

    pub fn rate(&self, from: NodeId, to: NodeId) -> Rat {
        self.transfers
            .get(&(from, to))
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    pub fn len(&self) -> usize {
        self.transfers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transfers.is_empty()
    }

    /// Total sent by a node.
    pub fn sent_by(&self, id: NodeId) -> Rat {
        self.transfers
            .iter()
            .filter(|(&(i, _), _)| i == id)
            .map(|(_, v)| v)
            .sum()
    }

    /// Total received by a node.
    pub fn received_by(&self, id: NodeId) -> Rat {
        self.transfers
            .iter()
            .filter(|(&(_, j), _)| j == id)
            .map(|(_, v)| v)
            .sum()
    }
}


/// The minimum deficiency ratio `lambda* = min over nonempty S of
/// f(S)/D(S)` on the restricted subgraph, together with the inclusion-
/// maximal set attaining it (the union of all tight sets at `lambda*`).
///
/// Dinkelbach iteration: start from the best singleton ratio and replace
/// `lambda` by the ratio of the current deficiency minimizer until the
/// deficiency reaches exactly zero. Each step strictly decreases `lambda`
/// within the finite set of achievable ratios, so termination is exact.
pub fn min_ratio(g: &Graph, d: &Endowments, restrict: &NodeSet) -> Result<(Rat, NodeSet), SolverError> {
    if restrict.is_empty() {
        return Err(SolverError::EmptyRestrict);
    }
    let induced = g.induced_subgraph(restrict)?;
    let mut lambda: Option<Rat> = None;
    for &id in restrict {
        let nbr: NodeSet = induced.neighbors(id)?.collect();
        if nbr.is_empty() {
            return Err(SolverError::IsolatedNode(id));
        }
        let ratio = d.total(&nbr)? / d.mean(id)?;
        if lambda.as_ref().is_none_or(|best| ratio < *best) {
            lambda = Some(ratio);
        }
    }
    let mut lambda = lambda.expect("restrict is nonempty");

    // Each achievable ratio appears at most once; the cap is defensive.
    for _ in 0..(4 * restrict.len() + 16) {
        let (value, s) = flow::min_deficiency_set(g, d, &lambda, restrict)?;
        if value.is_zero() {
            return Ok((lambda, s));
        }
        if value.is_positive() {
            return Err(SolverError::Internal(
                "deficiency became positive during Dinkelbach descent".into(),
            ));
        }
        let next = polymatroid::f_value(&induced, d, &s)? / d.total(&s)?;
        debug_assert!(next < lambda);
        lambda = next;
    }
    Err(SolverError::Internal(
        "Dinkelbach iteration failed to terminate".into(),
    ))
}

/// Computes the unique lex-optimal level decomposition by recursive
/// peeling: the minimum-ratio set gets `lambda*`, its neighborhood gets
/// the inverse, and the residual components are peeled independently.
/// When no deficient set remains (`lambda* >= 1`) every remaining node
/// settles at ratio one.
pub fn peel_solve(g: &Graph, d: &Endowments) -> Result<LevelDecomposition, SolverError> {
    g.ensure_connected()?;
    for &id in g.nodes() {
        d.mean(id)?;
    }
    let one = Rat::one();
    let mut groups: BTreeMap<Rat, NodeSet> = BTreeMap::new();
    let mut pending: Vec<NodeSet> = vec![g.node_set()];
    while let Some(q) = pending.pop() {
        let (lambda, low) = min_ratio(g, d, &q)?;
        if lambda >= one {
            groups.entry(one.clone()).or_default().extend(q);
            continue;
        }
        let induced = g.induced_subgraph(&q)?;
        let high = induced.neighborhood(&low)?;
        if !high.is_disjoint(&low) {
            return Err(SolverError::Internal(
                "deficiency minimizer is not independent in its subgraph".into(),
            ));
        }
        groups.entry(lambda.clone()).or_default().extend(low.iter().copied());
        groups.entry(one.clone() / &lambda).or_default().extend(high.iter().copied());
        let rest: NodeSet = q
            .iter()
            .copied()
            .filter(|id| !low.contains(id) && !high.contains(id))
            .collect();
        if !rest.is_empty() {
            let residual = g.induced_subgraph(&rest)?;
            pending.extend(residual.connected_components());
        }
    }
    let (levels, level_sets) = groups.into_iter().unzip();
    LevelDecomposition::new(levels, level_sets)
}

/// One checked optimality equality: the received total of a level set
/// against the marginal `f` gain of its level prefix.
#[derive(Debug, Clone)]
pub struct CertifyEquality {
    pub level: usize,
    pub lhs: Rat,
    pub rhs: Rat,
}

impl CertifyEquality {
    pub fn holds(&self) -> bool {
        self.lhs == self.rhs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseMethod {
    Exhaustive,
    Separation,
}

/// Outcome of the independent optimality certificate.
#[derive(Debug, Clone)]
pub struct CertifyReport {
    pub equalities: Vec<CertifyEquality>,
    pub in_base: bool,
    pub base_method: BaseMethod,
}

impl CertifyReport {
    pub fn passed(&self) -> bool {
        self.in_base && self.equalities.iter().all(|e| e.holds())
    }
}

/// The equality-based characterization of lex-optimality, checked exactly:
/// each level's received total must equal the marginal neighborhood
/// endowment of its prefix, and the received vector must lie in the base.
/// This is the independent oracle for [`peel_solve`] — the optimal vector
/// exists, is unique, and satisfies these equalities if and only if it is
/// optimal.
pub fn certify_lexopt(
    g: &Graph,
    d: &Endowments,
    dec: &LevelDecomposition,
) -> Result<CertifyReport, SolverError> {
    if dec.node_set() != g.node_set() {
        return Err(SolverError::MalformedDecomposition(
            "decomposition does not cover the graph's node set".into(),
        ));
    }
    let mut equalities = Vec::new();
    let mut prefix = NodeSet::new();
    let mut prev_f = Rat::zero();
    for (k, set) in dec.level_sets().iter().enumerate() {
        prefix.extend(set.iter().copied());
        let cur_f = polymatroid::f_value(g, d, &prefix)?;
        let lhs = &dec.levels()[k] * d.total(set)?;
        let rhs = &cur_f - &prev_f;
        prev_f = cur_f;
        equalities.push(CertifyEquality { level: k, lhs, rhs });
    }
    let received = dec.received(d)?;
    let (in_base, base_method) = if g.node_count() <= ENUMERATION_CAP {
        (
            polymatroid::in_base(g, d, &received)?,
            BaseMethod::Exhaustive,
        )
    } else {
        (
            polymatroid::in_base_separation(g, d, &received)?,
            BaseMethod::Separation,
        )
    };
    Ok(CertifyReport {
        equalities,
        in_base,
        base_method,
    })
}

fn edges_between(g: &Graph, from: &NodeSet, to: &NodeSet) -> Result<BTreeSet<(NodeId, NodeId)>, SolverError> {
    let mut out = BTreeSet::new();
    for &i in from {
        for j in g.neighbors(i)? {
            if to.contains(&j) {
                out.insert((i, j));
            }
        }
    }
    Ok(out)
}

fn merge_transfers(
    into: &mut BTreeMap<(NodeId, NodeId), Rat>,
    part: BTreeMap<(NodeId, NodeId), Rat>,
) -> Result<(), SolverError> {
    for (key, v) in part {
        if into.insert(key, v).is_some() {
            return Err(SolverError::Internal(format!(
                "transfer {key:?} produced by two level pairs"
            )));
        }
    }
    Ok(())
}

/// Builds one allocation realizing the decomposition's received rates.
///
/// Paired levels exchange with each other only: the top level's endowments
/// flow to the bottom level and vice versa, one transportation instance
/// per direction per pair. An odd middle level (ratio one) circulates its
/// endowments internally. Feasibility of every instance is guaranteed for
/// certified decompositions; an infeasible instance therefore signals an
/// implementation bug, not a user error.
pub fn extract_allocation(
    g: &Graph,
    d: &Endowments,
    dec: &LevelDecomposition,
) -> Result<Allocation, SolverError> {
    if dec.node_set() != g.node_set() {
        return Err(SolverError::MalformedDecomposition(
            "decomposition does not cover the graph's node set".into(),
        ));
    }
    let key = dec.level_count();
    let mut transfers = BTreeMap::new();
    for k in 0..key / 2 {
        let low = &dec.level_sets()[k];
        let high = &dec.level_sets()[key - 1 - k];
        let v_low = &dec.levels()[k];
        let v_high = &dec.levels()[key - 1 - k];

        let supplies_high: BTreeMap<NodeId, Rat> = high
            .iter()
            .map(|&i| Ok((i, d.mean(i)?.clone())))
            .collect::<Result<_, SolverError>>()?;
        let demands_low: BTreeMap<NodeId, Rat> = low
            .iter()
            .map(|&j| Ok((j, v_low * d.mean(j)?)))
            .collect::<Result<_, SolverError>>()?;
        let down = flow::transportation(&supplies_high, &demands_low, &edges_between(g, high, low)?)?
            .ok_or_else(|| {
                SolverError::Internal(format!("level pair {k} downward transportation infeasible"))
            })?;
        merge_transfers(&mut transfers, down)?;

        let supplies_low: BTreeMap<NodeId, Rat> = low
            .iter()
            .map(|&i| Ok((i, d.mean(i)?.clone())))
            .collect::<Result<_, SolverError>>()?;
        let demands_high: BTreeMap<NodeId, Rat> = high
            .iter()
            .map(|&j| Ok((j, v_high * d.mean(j)?)))
            .collect::<Result<_, SolverError>>()?;
        let up = flow::transportation(&supplies_low, &demands_high, &edges_between(g, low, high)?)?
            .ok_or_else(|| {
                SolverError::Internal(format!("level pair {k} upward transportation infeasible"))
            })?;
        merge_transfers(&mut transfers, up)?;
    }
    if key % 2 == 1 {
        let mid = &dec.level_sets()[key / 2];
        if !dec.levels()[key / 2].is_one() {
            return Err(SolverError::MalformedDecomposition(
                "odd decomposition must have a unit middle level".into(),
            ));
        }
        merge_transfers(&mut transfers, middle_circulation(g, d, mid)?)?;
    }
    Ok(Allocation::new(transfers))
}

/// Internal exchange of a unit-ratio level: everyone ships its endowment
/// to neighbors within the set and receives exactly its endowment back.
/// Encoded as a lower-bounded flow; since the delivery lower bounds sum to
/// the available supply, every feasible flow meets them with equality.
fn middle_circulation(
    g: &Graph,
    d: &Endowments,
    mid: &NodeSet,
) -> Result<BTreeMap<(NodeId, NodeId), Rat>, SolverError> {
    let members: Vec<NodeId> = mid.iter().copied().collect();
    let k = members.len();
    let pos: BTreeMap<NodeId, usize> = members.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let giver = |p: usize| 2 + p;
    let taker = |p: usize| 2 + k + p;
    let mut net = flow::FlowNetwork::new(2 + 2 * k, 0, 1)?;
    for (p, &i) in members.iter().enumerate() {
        net.add_arc(0, giver(p), flow::Capacity::Finite(d.mean(i)?.clone()))?;
    }
    let induced = g.induced_subgraph(mid)?;
    let mut middle_arcs = Vec::new();
    for (a, b) in induced.edges() {
        let ab = net.add_arc(giver(pos[&a]), taker(pos[&b]), flow::Capacity::Unbounded)?;
        let ba = net.add_arc(giver(pos[&b]), taker(pos[&a]), flow::Capacity::Unbounded)?;
        middle_arcs.push((ab, a, b));
        middle_arcs.push((ba, b, a));
    }
    for (p, &j) in members.iter().enumerate() {
        net.add_arc_with_lower(taker(p), 1, d.mean(j)?.clone(), flow::Capacity::Unbounded)?;
    }
    let flows = flow::feasible_flow_lower_bounds(&net)?
        .ok_or_else(|| SolverError::Internal("middle-level circulation infeasible".into()))?;
    Ok(middle_arcs
        .into_iter()
        .map(|(arc, a, b)| ((a, b), flows[arc.0].clone()))
        .collect())
}

/// Solve end to end: peel, then realize the rates as transfers.
pub fn solve(g: &Graph, d: &Endowments) -> Result<(LevelDecomposition, Allocation), SolverError> {
    let dec = peel_solve(g, d)?;
    let alloc = extract_allocation(g, d, &dec)?;
    Ok((dec, alloc))
}
