//! Undirected simple graphs over externally supplied integer node ids.
//!
//! Everything downstream (set function evaluation, peeling, coalition
//! checks) works on node *sets*, so the representation keeps all sets
//! canonically sorted: `BTreeSet` for membership, sorted `Vec` for node
//! order. Outputs are therefore deterministic and directly comparable in
//! tests.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

/// External node identifier. Ids need not be contiguous.
pub type NodeId = u64;

/// Canonically ordered set of node ids.
pub type NodeSet = BTreeSet<NodeId>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
    #[error("node set must be nonempty")]
    EmptySet,
    #[error("graph must be connected and have at least 2 nodes")]
    NotConnected,
}

/// An undirected simple graph: no self-loops, no duplicate edges.
///
/// Connectivity is *not* enforced by the constructor; induced subgraphs
/// of coalitions are legitimately disconnected. Top-level model instances
/// are validated once through [`Graph::ensure_connected`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    nodes: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    adj: Vec<BTreeSet<usize>>,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl Graph {
    /// Builds a graph from node ids and undirected edges. Edge pairs may
    /// come in either orientation; they are stored as `(min, max)`.
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        let mut sorted: Vec<NodeId> = nodes.into_iter().collect();
        sorted.sort_unstable();
        let mut index = BTreeMap::new();
        for (pos, &id) in sorted.iter().enumerate() {
            if index.insert(id, pos).is_some() {
                return Err(GraphError::DuplicateNode(id));
            }
        }
        let mut adj = vec![BTreeSet::new(); sorted.len()];
        let mut edge_set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let &pa = index.get(&a).ok_or(GraphError::UnknownNode(a))?;
            let &pb = index.get(&b).ok_or(GraphError::UnknownNode(b))?;
            let key = (a.min(b), a.max(b));
            if !edge_set.insert(key) {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
            adj[pa].insert(pb);
            adj[pb].insert(pa);
        }
        Ok(Graph {
            nodes: sorted,
            index,
            adj,
            edges: edge_set,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Node ids in ascending order.
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node_set(&self) -> NodeSet {
        self.nodes.iter().copied().collect()
    }

    /// Edges as canonical `(min, max)` pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn contains_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Position of `id` in the sorted node order, for dense indexing.
    pub fn position(&self, id: NodeId) -> Result<usize, GraphError> {
        self.index.get(&id).copied().ok_or(GraphError::UnknownNode(id))
    }

    pub fn degree(&self, id: NodeId) -> Result<usize, GraphError> {
        Ok(self.adj[self.position(id)?].len())
    }

    /// Neighbors of a single node, ascending.
    pub fn neighbors(&self, id: NodeId) -> Result<impl Iterator<Item = NodeId> + '_, GraphError> {
        let pos = self.position(id)?;
        Ok(self.adj[pos].iter().map(move |&p| self.nodes[p]))
    }

    fn check_subset(&self, s: &NodeSet) -> Result<(), GraphError> {
        for &id in s {
            if !self.contains_node(id) {
                return Err(GraphError::UnknownNode(id));
            }
        }
        Ok(())
    }

    /// N_S: the union of the neighborhoods of the nodes in `s`. May
    /// intersect `s`; N of the empty set is empty.
    pub fn neighborhood(&self, s: &NodeSet) -> Result<NodeSet, GraphError> {
        self.check_subset(s)?;
        let mut out = NodeSet::new();
        for &id in s {
            let pos = self.index[&id];
            out.extend(self.adj[pos].iter().map(|&p| self.nodes[p]));
        }
        Ok(out)
    }

    /// Subgraph induced by a nonempty node set: keeps exactly the edges
    /// with both endpoints in `s`. The result may be disconnected.
    pub fn induced_subgraph(&self, s: &NodeSet) -> Result<Graph, GraphError> {
        if s.is_empty() {
            return Err(GraphError::EmptySet);
        }
        self.check_subset(s)?;
        let edges: Vec<(NodeId, NodeId)> = self
            .edges
            .iter()
            .filter(|(a, b)| s.contains(a) && s.contains(b))
            .copied()
            .collect();
        Graph::new(s.iter().copied(), edges)
    }

    /// True iff no edge has both endpoints in `s` (vacuously true for the
    /// empty set and singletons).
    pub fn is_independent(&self, s: &NodeSet) -> Result<bool, GraphError> {
        self.check_subset(s)?;
        for &id in s {
            let pos = self.index[&id];
            if self.adj[pos].iter().any(|&p| s.contains(&self.nodes[p])) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Maximal connected node sets, ordered by their smallest member.
    pub fn connected_components(&self) -> Vec<NodeSet> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = NodeSet::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(pos) = queue.pop_front() {
                comp.insert(self.nodes[pos]);
                for &next in &self.adj[pos] {
                    if !seen[next] {
                        seen[next] = true;
                        queue.push_back(next);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().len() == 1
    }

    /// Validates the top-level model assumption: connected, at least two
    /// nodes.
    pub fn ensure_connected(&self) -> Result<(), GraphError> {
        if self.nodes.len() < 2 || !self.is_connected() {
            return Err(GraphError::NotConnected);
        }
        Ok(())
    }
}

/// Convenience constructor for paths, used pervasively in tests and docs:
/// nodes `ids[0] - ids[1] - ... - ids[n-1]` connected in a chain.
pub fn path_graph(ids: &[NodeId]) -> Graph {
    let edges: Vec<_> = ids.windows(2).map(|w| (w[0], w[1])).collect();
    Graph::new(ids.iter().copied(), edges).expect("path construction is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[NodeId]) -> NodeSet {
        ids.iter().copied().collect()
    }

    fn star() -> Graph {
        // center 0, leaves 1,2,3
        Graph::new(0..4, vec![(0, 1), (0, 2), (0, 3)]).unwrap()
    }

    #[test]
    fn rejects_malformed_input() {
        assert_eq!(
            Graph::new(vec![1, 1], vec![]).unwrap_err(),
            GraphError::DuplicateNode(1)
        );
        assert_eq!(
            Graph::new(vec![1, 2], vec![(1, 1)]).unwrap_err(),
            GraphError::SelfLoop(1)
        );
        assert_eq!(
            Graph::new(vec![1, 2], vec![(1, 2), (2, 1)]).unwrap_err(),
            GraphError::DuplicateEdge(1, 2)
        );
        assert_eq!(
            Graph::new(vec![1, 2], vec![(1, 3)]).unwrap_err(),
            GraphError::UnknownNode(3)
        );
    }

    #[test]
    fn neighborhood_basics() {
        let p = path_graph(&[1, 2, 3]);
        assert_eq!(p.neighborhood(&set(&[1, 3])).unwrap(), set(&[2]));
        assert_eq!(p.neighborhood(&set(&[])).unwrap(), set(&[]));
        let s = star();
        assert_eq!(s.neighborhood(&set(&[0])).unwrap(), set(&[1, 2, 3]));
        // N_S may intersect S
        assert_eq!(p.neighborhood(&set(&[1, 2])).unwrap(), set(&[1, 2, 3]));
        assert_eq!(
            p.neighborhood(&set(&[9])).unwrap_err(),
            GraphError::UnknownNode(9)
        );
    }

    #[test]
    fn induced_subgraph_basics() {
        let cycle = Graph::new(1..5, vec![(1, 2), (2, 3), (3, 4), (4, 1)]).unwrap();
        let g = cycle.induced_subgraph(&set(&[1, 3])).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 0);

        let p = path_graph(&[1, 2, 3]);
        let g = p.induced_subgraph(&set(&[1, 2])).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(1, 2)]);

        assert_eq!(p.induced_subgraph(&p.node_set()).unwrap(), p);
        assert_eq!(
            p.induced_subgraph(&set(&[])).unwrap_err(),
            GraphError::EmptySet
        );
    }

    #[test]
    fn independence() {
        let p = path_graph(&[1, 2, 3]);
        assert!(p.is_independent(&set(&[1, 3])).unwrap());
        assert!(!p.is_independent(&set(&[1, 2])).unwrap());
        assert!(p.is_independent(&set(&[])).unwrap());
        assert!(p.is_independent(&set(&[2])).unwrap());
        // six-node instance whose lowest level {1,6} is independent
        let g = Graph::new(
            1..7,
            vec![(1, 2), (2, 3), (2, 5), (3, 4), (5, 6)],
        )
        .unwrap();
        assert!(g.is_independent(&set(&[1, 6])).unwrap());
    }

    #[test]
    fn components() {
        let p = path_graph(&[1, 2, 3]);
        assert_eq!(p.connected_components(), vec![set(&[1, 2, 3])]);

        let g = Graph::new(1..5, vec![(1, 2)]).unwrap();
        assert_eq!(
            g.connected_components(),
            vec![set(&[1, 2]), set(&[3]), set(&[4])]
        );

        let cycle = Graph::new(1..5, vec![(1, 2), (2, 3), (3, 4), (4, 1)]).unwrap();
        assert_eq!(cycle.connected_components(), vec![set(&[1, 2, 3, 4])]);
        assert!(cycle.ensure_connected().is_ok());
        assert!(g.ensure_connected().is_err());

        let single = Graph::new(vec![7], vec![]).unwrap();
        assert_eq!(single.ensure_connected().unwrap_err(), GraphError::NotConnected);
    }

    #[test]
    fn induced_composes() {
        let g = Graph::new(
            1..7,
            vec![(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 1), (2, 5)],
        )
        .unwrap();
        let s = set(&[1, 2, 3, 5]);
        let t = set(&[2, 3, 5]);
        let once = g.induced_subgraph(&t).unwrap();
        let twice = g
            .induced_subgraph(&s)
            .unwrap()
            .induced_subgraph(&t)
            .unwrap();
        assert_eq!(once, twice);
    }
}
