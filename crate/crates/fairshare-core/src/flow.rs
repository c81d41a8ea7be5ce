//! Exact max-flow / min-cut kernel and the two reductions everything else
//! leans on: weighted deficiency minimization (project-selection closure)
//! and transportation / lower-bounded feasibility.
//!
//! Capacities are exact rationals throughout; tight-set detection needs
//! exact zeros, so no floating point enters any solver path. Augmentation
//! order is deterministic (lowest arc index first), which makes every
//! emitted flow reproducible.

use crate::endowment::Endowments;
use crate::graph::{Graph, NodeId, NodeSet};
use crate::num::Rat;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("vertex {0} out of range")]
    InvalidVertex(usize),
    #[error("arcs into the source are not allowed")]
    ArcIntoSource,
    #[error("arcs out of the sink are not allowed")]
    ArcOutOfSink,
    #[error("arc capacity must be non-negative")]
    NegativeCapacity,
    #[error("arc lower bound must be non-negative")]
    NegativeLowerBound,
    #[error("arc lower bound exceeds its capacity")]
    LowerExceedsCapacity,
    #[error("max_flow does not accept lower bounds; use feasible_flow_lower_bounds")]
    LowerBoundsUnsupported,
    #[error("transportation totals are unbalanced")]
    Unbalanced,
    #[error("restrict set must be nonempty")]
    EmptyRestrict,
    #[error("lambda must be positive")]
    NonPositiveLambda,
}

/// Arc capacity; `Unbounded` is materialized as one more than the sum of
/// every finite capacity and lower bound in the network, which keeps the
/// arithmetic finite without ever binding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Capacity {
    Finite(Rat),
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArcId(pub usize);

#[derive(Debug, Clone)]
struct ArcSpec {
    from: usize,
    to: usize,
    capacity: Capacity,
    lower: Rat,
}

/// Directed network with a distinguished source and sink.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    vertices: usize,
    source: usize,
    sink: usize,
    arcs: Vec<ArcSpec>,
    has_lower_bounds: bool,
}

impl FlowNetwork {
    pub fn new(vertices: usize, source: usize, sink: usize) -> Result<Self, FlowError> {
        if source >= vertices {
            return Err(FlowError::InvalidVertex(source));
        }
        if sink >= vertices {
            return Err(FlowError::InvalidVertex(sink));
        }
        Ok(FlowNetwork {
            vertices,
            source,
            sink,
            arcs: Vec::new(),
            has_lower_bounds: false,
        })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arc_endpoints(&self, id: ArcId) -> (usize, usize) {
        (self.arcs[id.0].from, self.arcs[id.0].to)
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: Capacity) -> Result<ArcId, FlowError> {
        self.add_arc_with_lower(from, to, Rat::zero(), capacity)
    }

    pub fn add_arc_with_lower(
        &mut self,
        from: usize,
        to: usize,
        lower: Rat,
        capacity: Capacity,
    ) -> Result<ArcId, FlowError> {
        if from >= self.vertices {
            return Err(FlowError::InvalidVertex(from));
        }
        if to >= self.vertices {
            return Err(FlowError::InvalidVertex(to));
        }
        if to == self.source {
            return Err(FlowError::ArcIntoSource);
        }
        if from == self.sink {
            return Err(FlowError::ArcOutOfSink);
        }
        if lower.is_negative() {
            return Err(FlowError::NegativeLowerBound);
        }
        if let Capacity::Finite(c) = &capacity {
            if c.is_negative() {
                return Err(FlowError::NegativeCapacity);
            }
            if lower > *c {
                return Err(FlowError::LowerExceedsCapacity);
            }
        }
        if !lower.is_zero() {
            self.has_lower_bounds = true;
        }
        self.arcs.push(ArcSpec {
            from,
            to,
            capacity,
            lower,
        });
        Ok(ArcId(self.arcs.len() - 1))
    }

    /// Finite stand-in for every `Unbounded` capacity in this network.
    fn big_m(&self) -> Rat {
        let mut m = Rat::one();
        for arc in &self.arcs {
            if let Capacity::Finite(c) = &arc.capacity {
                m += c;
            }
            m += &arc.lower;
        }
        m
    }
}

/// Dinic with paired residual arcs. Deterministic: BFS and DFS scan
/// adjacency in insertion order.
struct Dinic {
    to: Vec<usize>,
    cap: Vec<Rat>,
    adj: Vec<Vec<usize>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    fn new(vertices: usize) -> Self {
        Dinic {
            to: Vec::new(),
            cap: Vec::new(),
            adj: vec![Vec::new(); vertices],
            level: vec![-1; vertices],
            iter: vec![0; vertices],
        }
    }

    /// Returns the forward half-arc index; its pair is `index + 1`.
    fn add(&mut self, from: usize, to: usize, cap: Rat) -> usize {
        let id = self.to.len();
        self.adj[from].push(id);
        self.to.push(to);
        self.cap.push(cap);
        self.adj[to].push(id + 1);
        self.to.push(from);
        self.cap.push(Rat::zero());
        id
    }

    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = VecDeque::from([source]);
        self.level[source] = 0;
        while let Some(v) = queue.pop_front() {
            for &a in &self.adj[v] {
                let w = self.to[a];
                if self.level[w] < 0 && self.cap[a].is_positive() {
                    self.level[w] = self.level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        self.level[sink] >= 0
    }

    fn dfs(&mut self, v: usize, sink: usize, limit: Rat) -> Rat {
        if v == sink {
            return limit;
        }
        while self.iter[v] < self.adj[v].len() {
            let a = self.adj[v][self.iter[v]];
            let w = self.to[a];
            if self.cap[a].is_positive() && self.level[v] < self.level[w] {
                let bottleneck = limit.clone().min(self.cap[a].clone());
                let pushed = self.dfs(w, sink, bottleneck);
                if pushed.is_positive() {
                    self.cap[a] -= &pushed;
                    self.cap[a ^ 1] += &pushed;
                    return pushed;
                }
            }
            self.iter[v] += 1;
        }
        Rat::zero()
    }

    fn max_flow(&mut self, source: usize, sink: usize, cap_bound: &Rat) -> Rat {
        let mut total = Rat::zero();
        while self.bfs(source, sink) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let pushed = self.dfs(source, sink, cap_bound.clone());
                if !pushed.is_positive() {
                    break;
                }
                total += pushed;
            }
        }
        total
    }

    /// Vertices with a residual path to `sink`.
    fn co_reachable(&self, sink: usize) -> Vec<bool> {
        let n = self.adj.len();
        let mut reach = vec![false; n];
        reach[sink] = true;
        let mut queue = VecDeque::from([sink]);
        while let Some(v) = queue.pop_front() {
            // arcs w -> v with residual capacity: the pair of each half-arc
            // out of v tells us who can step onto v.
            for &a in &self.adj[v] {
                let w = self.to[a];
                if !reach[w] && self.cap[a ^ 1].is_positive() {
                    reach[w] = true;
                    queue.push_back(w);
                }
            }
        }
        reach
    }
}

/// A solved max-flow: value, per-arc flows, and the residual state needed
/// for cut extraction.
pub struct MaxFlowOutcome {
    value: Rat,
    flows: Vec<Rat>,
    dinic: Dinic,
    sink: usize,
}

impl MaxFlowOutcome {
    pub fn value(&self) -> &Rat {
        &self.value
    }

    /// Flow on each arc, indexed like the [`ArcId`]s handed out by
    /// [`FlowNetwork::add_arc`].
    pub fn arc_flows(&self) -> &[Rat] {
        &self.flows
    }

    /// The inclusion-maximal source side of a minimum cut: the complement
    /// of the vertices that still reach the sink in the residual network.
    /// Minimum cuts form a lattice, so this maximal side is well defined
    /// and equals the union of every minimum cut's source side.
    pub fn min_cut_max_source(&self) -> BTreeSet<usize> {
        let reach = self.dinic.co_reachable(self.sink);
        (0..reach.len()).filter(|&v| !reach[v]).collect()
    }
}

/// Maximum flow of a network without lower bounds, certified maximum by a
/// saturated cut (the residual sink side).
pub fn max_flow(net: &FlowNetwork) -> Result<MaxFlowOutcome, FlowError> {
    if net.has_lower_bounds {
        return Err(FlowError::LowerBoundsUnsupported);
    }
    let m = net.big_m();
    let mut dinic = Dinic::new(net.vertices);
    let mut arc_half: Vec<usize> = Vec::with_capacity(net.arcs.len());
    for arc in &net.arcs {
        let cap = match &arc.capacity {
            Capacity::Finite(c) => c.clone(),
            Capacity::Unbounded => m.clone(),
        };
        arc_half.push(dinic.add(arc.from, arc.to, cap));
    }
    let value = dinic.max_flow(net.source, net.sink, &m);
    let flows = arc_half.iter().map(|&h| dinic.cap[h ^ 1].clone()).collect();
    Ok(MaxFlowOutcome {
        value,
        flows,
        dinic,
        sink: net.sink,
    })
}

/// A flow meeting every lower bound, or `None` when no such flow exists.
///
/// Standard circulation transform: excesses move to a super source/sink,
/// a return arc closes the sink back to the source, and feasibility is
/// equivalent to saturating every super-source arc.
pub fn feasible_flow_lower_bounds(net: &FlowNetwork) -> Result<Option<Vec<Rat>>, FlowError> {
    let m = net.big_m();
    let ss = net.vertices;
    let tt = net.vertices + 1;
    let mut dinic = Dinic::new(net.vertices + 2);
    let mut arc_half: Vec<usize> = Vec::with_capacity(net.arcs.len());
    let mut excess: Vec<Rat> = vec![Rat::zero(); net.vertices];
    for arc in &net.arcs {
        let cap = match &arc.capacity {
            Capacity::Finite(c) => c - &arc.lower,
            Capacity::Unbounded => m.clone(),
        };
        arc_half.push(dinic.add(arc.from, arc.to, cap));
        excess[arc.to] += &arc.lower;
        excess[arc.from] -= &arc.lower;
    }
    dinic.add(net.sink, net.source, m.clone());
    let mut required = Rat::zero();
    for (v, ex) in excess.iter().enumerate() {
        if ex.is_positive() {
            dinic.add(ss, v, ex.clone());
            required += ex;
        } else if ex.is_negative() {
            dinic.add(v, tt, -ex.clone());
        }
    }
    let value = dinic.max_flow(ss, tt, &m);
    if value != required {
        return Ok(None);
    }
    let flows = arc_half
        .iter()
        .zip(&net.arcs)
        .map(|(&h, arc)| &dinic.cap[h ^ 1] + &arc.lower)
        .collect();
    Ok(Some(flows))
}

/// Residual search over a network carrying a known feasible flow; used to
/// probe whether individual arcs admit strictly more flow without driving
/// any other arc below its lower bound.
pub struct ResidualSearch<'a> {
    net: &'a FlowNetwork,
    flows: Vec<Rat>,
    out_arcs: Vec<Vec<usize>>,
    in_arcs: Vec<Vec<usize>>,
    big_m: Rat,
}

impl<'a> ResidualSearch<'a> {
    pub fn new(net: &'a FlowNetwork, flows: Vec<Rat>) -> Self {
        assert_eq!(flows.len(), net.arcs.len());
        let mut out_arcs = vec![Vec::new(); net.vertices];
        let mut in_arcs = vec![Vec::new(); net.vertices];
        for (i, arc) in net.arcs.iter().enumerate() {
            out_arcs[arc.from].push(i);
            in_arcs[arc.to].push(i);
        }
        let big_m = net.big_m();
        ResidualSearch {
            net,
            flows,
            out_arcs,
            in_arcs,
            big_m,
        }
    }

    pub fn flows(&self) -> &[Rat] {
        &self.flows
    }

    fn forward_residual(&self, arc: usize) -> Rat {
        match &self.net.arcs[arc].capacity {
            Capacity::Finite(c) => c - &self.flows[arc],
            Capacity::Unbounded => self.big_m.clone(),
        }
    }

    fn backward_residual(&self, arc: usize) -> Rat {
        &self.flows[arc] - &self.net.arcs[arc].lower
    }

    /// Attempts to raise the flow on `final_arc` (an arc into the sink) by
    /// routing extra flow from the source to its tail, never touching any
    /// other sink arc. Returns the pushed amount if an augmenting path
    /// exists.
    pub fn try_increase_sink_arc(&mut self, final_arc: ArcId) -> Option<Rat> {
        let target = self.net.arcs[final_arc.0].from;
        debug_assert_eq!(self.net.arcs[final_arc.0].to, self.net.sink);
        // BFS from the source avoiding the sink, tracking the arc used.
        let n = self.net.vertices;
        let mut pred: Vec<Option<(usize, bool)>> = vec![None; n]; // (arc, forward?)
        let mut seen = vec![false; n];
        seen[self.net.source] = true;
        seen[self.net.sink] = true; // excluded from the search
        let mut queue = VecDeque::from([self.net.source]);
        while let Some(v) = queue.pop_front() {
            if v == target {
                break;
            }
            for &a in &self.out_arcs[v] {
                let w = self.net.arcs[a].to;
                if !seen[w] && self.forward_residual(a).is_positive() {
                    seen[w] = true;
                    pred[w] = Some((a, true));
                    queue.push_back(w);
                }
            }
            for &a in &self.in_arcs[v] {
                let w = self.net.arcs[a].from;
                if !seen[w] && self.backward_residual(a).is_positive() {
                    seen[w] = true;
                    pred[w] = Some((a, false));
                    queue.push_back(w);
                }
            }
        }
        if target != self.net.source && pred[target].is_none() {
            return None;
        }
        // Bottleneck along the path, capped by the final arc's headroom.
        let mut delta = self.forward_residual(final_arc.0);
        let mut v = target;
        while v != self.net.source {
            let (a, forward) = pred[v].expect("path reconstructed from BFS");
            let res = if forward {
                self.forward_residual(a)
            } else {
                self.backward_residual(a)
            };
            delta = delta.min(res);
            v = if forward {
                self.net.arcs[a].from
            } else {
                self.net.arcs[a].to
            };
        }
        if !delta.is_positive() {
            return None;
        }
        let mut v = target;
        while v != self.net.source {
            let (a, forward) = pred[v].expect("path reconstructed from BFS");
            if forward {
                self.flows[a] += &delta;
                v = self.net.arcs[a].from;
            } else {
                self.flows[a] -= &delta;
                v = self.net.arcs[a].to;
            }
        }
        self.flows[final_arc.0] += &delta;
        Some(delta)
    }
}

/// Solves `min over S subset of restrict of f_restrict(S) - w(S)` with one
/// min-cut over the project-selection closure network, where `w` assigns a
/// non-negative weight to each node of `restrict` and `f_restrict` is the
/// neighborhood set function of the induced subgraph. The empty set (value
/// zero) competes in the minimum; the returned set is the inclusion-maximal
/// minimizer, which may therefore be empty.
pub fn weighted_deficiency_minimum(
    g: &Graph,
    d: &Endowments,
    weights: &BTreeMap<NodeId, Rat>,
    restrict: &NodeSet,
) -> Result<(Rat, NodeSet), FlowError> {
    if restrict.is_empty() {
        return Err(FlowError::EmptyRestrict);
    }
    let members: Vec<NodeId> = restrict.iter().copied().collect();
    let pos: BTreeMap<NodeId, usize> = members.iter().enumerate().map(|(p, &id)| (id, p)).collect();
    let k = members.len();
    // vertices: 0 = source, 1 = sink, 2..2+k selectors, 2+k..2+2k resources
    let select = |p: usize| 2 + p;
    let resource = |p: usize| 2 + k + p;
    let mut net = FlowNetwork::new(2 + 2 * k, 0, 1)?;
    let mut total_w = Rat::zero();
    for (p, id) in members.iter().enumerate() {
        let w = weights.get(id).cloned().unwrap_or_else(Rat::zero);
        debug_assert!(!w.is_negative());
        total_w += &w;
        net.add_arc(0, select(p), Capacity::Finite(w))?;
        let dj = d
            .mean(*id)
            .expect("restrict nodes must carry endowments")
            .clone();
        net.add_arc(resource(p), 1, Capacity::Finite(dj))?;
    }
    let induced = g
        .induced_subgraph(restrict)
        .expect("restrict validated nonempty and within the graph");
    for (a, b) in induced.edges() {
        let (pa, pb) = (pos[&a], pos[&b]);
        net.add_arc(select(pa), resource(pb), Capacity::Unbounded)?;
        net.add_arc(select(pb), resource(pa), Capacity::Unbounded)?;
    }
    let outcome = max_flow(&net)?;
    let value = outcome.value() - &total_w;
    let cut = outcome.min_cut_max_source();
    let chosen: NodeSet = members
        .iter()
        .enumerate()
        .filter(|(p, _)| cut.contains(&select(*p)))
        .map(|(_, &id)| id)
        .collect();
    Ok((value, chosen))
}

/// `min over nonempty S of f_restrict(S) - lambda * D(S)` together with the
/// maximal minimizer. When only the empty set attains the cut minimum the
/// best singleton is returned instead, so the result is always nonempty.
pub fn min_deficiency_set(
    g: &Graph,
    d: &Endowments,
    lambda: &Rat,
    restrict: &NodeSet,
) -> Result<(Rat, NodeSet), FlowError> {
    if restrict.is_empty() {
        return Err(FlowError::EmptyRestrict);
    }
    if !lambda.is_positive() {
        return Err(FlowError::NonPositiveLambda);
    }
    let weights: BTreeMap<NodeId, Rat> = restrict
        .iter()
        .map(|&id| {
            let w = lambda * d.mean(id).expect("restrict nodes carry endowments");
            (id, w)
        })
        .collect();
    let (value, set) = weighted_deficiency_minimum(g, d, &weights, restrict)?;
    if !set.is_empty() {
        return Ok((value, set));
    }
    // Singleton fallback: keeps the result nonempty when lambda sits below
    // every deficiency ratio.
    let induced = g.induced_subgraph(restrict).expect("validated above");
    let mut best: Option<(Rat, NodeId)> = None;
    for &id in restrict {
        let nbr: NodeSet = induced.neighbors(id).expect("member of induced").collect();
        let deficiency = d.total(&nbr).expect("neighbors carry endowments") - &weights[&id];
        match &best {
            Some((cur, _)) if *cur <= deficiency => {}
            _ => best = Some((deficiency, id)),
        }
    }
    let (value, id) = best.expect("restrict is nonempty");
    Ok((value, NodeSet::from([id])))
}

/// Directed per-pair rates produced by [`transportation`].
pub type ArcAssignment = BTreeMap<(NodeId, NodeId), Rat>;

/// Non-negative arc assignment with exact row sums `supplies` and column
/// sums `demands`, supported on `allowed` pairs, or `None` if the instance
/// is infeasible. Totals must balance exactly.
pub fn transportation(
    supplies: &BTreeMap<NodeId, Rat>,
    demands: &BTreeMap<NodeId, Rat>,
    allowed: &BTreeSet<(NodeId, NodeId)>,
) -> Result<Option<ArcAssignment>, FlowError> {
    let total_supply: Rat = supplies.values().sum();
    let total_demand: Rat = demands.values().sum();
    if total_supply != total_demand {
        return Err(FlowError::Unbalanced);
    }
    let sup_ids: Vec<NodeId> = supplies.keys().copied().collect();
    let dem_ids: Vec<NodeId> = demands.keys().copied().collect();
    let sup_pos: BTreeMap<NodeId, usize> = sup_ids.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let dem_pos: BTreeMap<NodeId, usize> = dem_ids.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let mut net = FlowNetwork::new(2 + sup_ids.len() + dem_ids.len(), 0, 1)?;
    for (p, id) in sup_ids.iter().enumerate() {
        net.add_arc(0, 2 + p, Capacity::Finite(supplies[id].clone()))?;
    }
    for (p, id) in dem_ids.iter().enumerate() {
        net.add_arc(2 + sup_ids.len() + p, 1, Capacity::Finite(demands[id].clone()))?;
    }
    let mut middle: Vec<(ArcId, NodeId, NodeId)> = Vec::new();
    for &(from, to) in allowed {
        let (Some(&pf), Some(&pt)) = (sup_pos.get(&from), dem_pos.get(&to)) else {
            continue;
        };
        let arc = net.add_arc(2 + pf, 2 + sup_ids.len() + pt, Capacity::Unbounded)?;
        middle.push((arc, from, to));
    }
    let outcome = max_flow(&net)?;
    if *outcome.value() != total_supply {
        return Ok(None);
    }
    let flows = outcome.arc_flows();
    let mut assignment = ArcAssignment::new();
    for (arc, from, to) in middle {
        let v = &flows[arc.0];
        if v.is_positive() {
            assignment.insert((from, to), v.clone());
        }
    }
    Ok(Some(assignment))
}
