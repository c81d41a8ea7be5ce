//! Seeded generators for the experiment graph families (lattice,
//! Erdos-Renyi, preferential attachment, small world) and endowment
//! profiles (homogeneous, hotspots). Identical spec and seed always
//! reproduce the same instance.

use crate::endowment::{EndowmentError, Endowments};
use crate::graph::{Graph, GraphError, NodeId};
use crate::num::Rat;
use num_traits::Signed;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

/// Bounded resampling attempts when connectivity is required.
const CONNECTIVITY_RETRIES: usize = 200;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("no connected sample found in {0} attempts")]
    ConnectivityExhausted(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Endowment(#[from] EndowmentError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphModel {
    /// rows x cols grid with 4-neighbor adjacency.
    Lattice { rows: usize, cols: usize },
    /// Every pair drawn independently with probability `p`.
    ErdosRenyi { n: usize, p: f64 },
    /// Growth by preferential attachment with probability proportional to
    /// `degree^power`; `m` edges per arriving node.
    PreferentialAttachment { n: usize, m: usize, power: f64 },
    /// Ring lattice over `k` nearest neighbors, each edge rewired with
    /// probability `beta`.
    SmallWorld { n: usize, k: usize, beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum HotspotPlacement {
    /// Draw the hotspot ids from the seeded generator.
    SeededRandom { count: usize },
    /// Exactly these ids.
    Listed(Vec<NodeId>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EndowmentProfile {
    Homogeneous { mean: Rat },
    Hotspots {
        base: Rat,
        hot: Rat,
        placement: HotspotPlacement,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub model: GraphModel,
    pub seed: u64,
    pub require_connected: bool,
    pub endowment: EndowmentProfile,
}

fn validate(spec: &GenSpec) -> Result<(), GenError> {
    let bad = |msg: &str| Err(GenError::InvalidSpec(msg.to_string()));
    match &spec.model {
        GraphModel::Lattice { rows, cols } => {
            if *rows == 0 || *cols == 0 || rows * cols < 2 {
                return bad("lattice needs at least 2 cells");
            }
        }
        GraphModel::ErdosRenyi { n, p } => {
            if *n < 2 {
                return bad("need at least 2 nodes");
            }
            if !(*p > 0.0 && *p <= 1.0) {
                return bad("edge probability must lie in (0, 1]");
            }
        }
        GraphModel::PreferentialAttachment { n, m, power } => {
            if *n < 2 {
                return bad("need at least 2 nodes");
            }
            if *m == 0 || *m >= *n {
                return bad("attachment count must satisfy 1 <= m < n");
            }
            if !power.is_finite() || *power < 0.0 {
                return bad("attachment power must be finite and non-negative");
            }
        }
        GraphModel::SmallWorld { n, k, beta } => {
            if *n < 3 {
                return bad("need at least 3 nodes");
            }
            if *k < 2 || *k % 2 != 0 || *k >= *n {
                return bad("ring degree must be even with 2 <= k < n");
            }
            if !(0.0..=1.0).contains(beta) {
                return bad("rewiring probability must lie in [0, 1]");
            }
        }
    }
    match &spec.endowment {
        EndowmentProfile::Homogeneous { mean } => {
            if !mean.is_positive() {
                return bad("endowment mean must be positive");
            }
        }
        EndowmentProfile::Hotspots { base, hot, placement } => {
            if !base.is_positive() || !hot.is_positive() {
                return bad("endowment values must be positive");
            }
            if let HotspotPlacement::SeededRandom { count } = placement {
                if *count == 0 {
                    return bad("hotspot count must be at least 1");
                }
            }
        }
    }
    Ok(())
}

fn sample_lattice(rows: usize, cols: usize) -> Result<Graph, GenError> {
    let at = |r: usize, c: usize| (r * cols + c) as NodeId;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((at(r, c), at(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((at(r, c), at(r + 1, c)));
            }
        }
    }
    Ok(Graph::new(0..(rows * cols) as NodeId, edges)?)
}

fn sample_er(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Result<Graph, GenError> {
    let mut edges = Vec::new();
    for i in 0..n as NodeId {
        for j in (i + 1)..n as NodeId {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok(Graph::new(0..n as NodeId, edges)?)
}

fn sample_ba(n: usize, m: usize, power: f64, rng: &mut ChaCha8Rng) -> Result<Graph, GenError> {
    // connected unbiased core: a path over the first m + 1 nodes
    let core = m + 1;
    let mut edges: Vec<(NodeId, NodeId)> = (0..core - 1)
        .map(|i| (i as NodeId, (i + 1) as NodeId))
        .collect();
    let mut degree = vec![0usize; n];
    for &(a, b) in &edges {
        degree[a as usize] += 1;
        degree[b as usize] += 1;
    }
    for v in core..n {
        let mut chosen: BTreeSet<usize> = BTreeSet::new();
        while chosen.len() < m {
            let weights: Vec<f64> = (0..v)
                .map(|u| {
                    if chosen.contains(&u) {
                        0.0
                    } else {
                        (degree[u] as f64).powf(power)
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            debug_assert!(total > 0.0, "existing nodes all have degree >= 1");
            let mut pick = rng.gen::<f64>() * total;
            let mut target = v - 1;
            for (u, w) in weights.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                if pick < *w {
                    target = u;
                    break;
                }
                pick -= w;
            }
            chosen.insert(target);
        }
        for u in chosen {
            edges.push((u as NodeId, v as NodeId));
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    Ok(Graph::new(0..n as NodeId, edges)?)
}

fn sample_ws(n: usize, k: usize, beta: f64, rng: &mut ChaCha8Rng) -> Result<Graph, GenError> {
    let mut edge_set: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let canon = |a: NodeId, b: NodeId| (a.min(b), a.max(b));
    for i in 0..n {
        for offset in 1..=k / 2 {
            edge_set.insert(canon(i as NodeId, ((i + offset) % n) as NodeId));
        }
    }
    let ring_edges: Vec<(NodeId, NodeId)> = edge_set.iter().copied().collect();
    for (a, b) in ring_edges {
        if rng.gen::<f64>() >= beta {
            continue;
        }
        // rewire the far endpoint of (a, b) to a fresh target
        let mut candidates: Vec<NodeId> = (0..n as NodeId)
            .filter(|&c| c != a && c != b && !edge_set.contains(&canon(a, c)))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let target = candidates.swap_remove(rng.gen_range(0..candidates.len()));
        edge_set.remove(&canon(a, b));
        edge_set.insert(canon(a, target));
    }
    Ok(Graph::new(0..n as NodeId, edge_set)?)
}

fn sample_graph(model: &GraphModel, rng: &mut ChaCha8Rng) -> Result<Graph, GenError> {
    match model {
        GraphModel::Lattice { rows, cols } => sample_lattice(*rows, *cols),
        GraphModel::ErdosRenyi { n, p } => sample_er(*n, *p, rng),
        GraphModel::PreferentialAttachment { n, m, power } => sample_ba(*n, *m, *power, rng),
        GraphModel::SmallWorld { n, k, beta } => sample_ws(*n, *k, *beta, rng),
    }
}

/// Generates a graph and its endowments from the spec, resampling a
/// bounded number of times when connectivity is required.
pub fn generate(spec: &GenSpec) -> Result<(Graph, Endowments), GenError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut graph = None;
    for _ in 0..CONNECTIVITY_RETRIES {
        let candidate = sample_graph(&spec.model, &mut rng)?;
        if !spec.require_connected || (candidate.node_count() >= 2 && candidate.is_connected()) {
            graph = Some(candidate);
            break;
        }
    }
    let g = graph.ok_or(GenError::ConnectivityExhausted(CONNECTIVITY_RETRIES))?;

    let endowments = match &spec.endowment {
        EndowmentProfile::Homogeneous { mean } => {
            Endowments::homogeneous(g.nodes().iter().copied(), mean.clone())?
        }
        EndowmentProfile::Hotspots { base, hot, placement } => {
            let hot_ids: BTreeSet<NodeId> = match placement {
                HotspotPlacement::SeededRandom { count } => {
                    if *count > g.node_count() {
                        return Err(GenError::InvalidSpec(
                            "more hotspots than nodes".to_string(),
                        ));
                    }
                    let mut pool: Vec<NodeId> = g.nodes().to_vec();
                    pool.shuffle(&mut rng);
                    pool.truncate(*count);
                    pool.into_iter().collect()
                }
                HotspotPlacement::Listed(ids) => {
                    let set: BTreeSet<NodeId> = ids.iter().copied().collect();
                    if set.len() != ids.len() {
                        return Err(GenError::InvalidSpec("duplicate hotspot ids".to_string()));
                    }
                    for &id in &set {
                        if !g.contains_node(id) {
                            return Err(GenError::InvalidSpec(format!(
                                "hotspot id {id} not in the graph"
                            )));
                        }
                    }
                    set
                }
            };
            Endowments::new(
                g.nodes()
                    .iter()
                    .map(|&id| {
                        let mean = if hot_ids.contains(&id) { hot } else { base };
                        (id, mean.clone())
                    })
                    .collect(),
            )?
        }
    };
    Ok((g, endowments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rat_int;

    fn homogeneous(mean: i64) -> EndowmentProfile {
        EndowmentProfile::Homogeneous { mean: rat_int(mean) }
    }

    #[test]
    fn lattice_counts_match_closed_form() {
        let spec = GenSpec {
            model: GraphModel::Lattice { rows: 5, cols: 6 },
            seed: 0,
            require_connected: true,
            endowment: homogeneous(30),
        };
        let (g, d) = generate(&spec).unwrap();
        assert_eq!(g.node_count(), 30);
        assert_eq!(g.edge_count(), 49);
        assert!(g.is_connected());
        assert_eq!(d.mean(0).unwrap(), &rat_int(30));
    }

    #[test]
    fn er_connected_sampling() {
        let spec = GenSpec {
            model: GraphModel::ErdosRenyi { n: 30, p: 0.2 },
            seed: 7,
            require_connected: true,
            endowment: homogeneous(30),
        };
        let (g, _) = generate(&spec).unwrap();
        assert_eq!(g.node_count(), 30);
        assert!(g.is_connected());
    }

    #[test]
    fn er_edge_count_is_statistically_sane() {
        // total edges over 100 seeds within 4 sigma of the binomial mean
        let n = 30usize;
        let p = 0.2f64;
        let pairs = (n * (n - 1) / 2) as f64;
        let mut total = 0f64;
        for seed in 0..100 {
            let spec = GenSpec {
                model: GraphModel::ErdosRenyi { n, p },
                seed,
                require_connected: false,
                endowment: homogeneous(1),
            };
            let (g, _) = generate(&spec).unwrap();
            total += g.edge_count() as f64;
        }
        let mean = 100.0 * pairs * p;
        let sigma = (100.0 * pairs * p * (1.0 - p)).sqrt();
        assert!((total - mean).abs() <= 4.0 * sigma, "total {total} vs mean {mean}");
    }

    #[test]
    fn ba_grows_hubs() {
        let spec = GenSpec {
            model: GraphModel::PreferentialAttachment {
                n: 30,
                m: 1,
                power: 1.0,
            },
            seed: 3,
            require_connected: true,
            endowment: homogeneous(30),
        };
        let (g, _) = generate(&spec).unwrap();
        assert_eq!(g.node_count(), 30);
        assert_eq!(g.edge_count(), 29); // m = 1 grows a tree
        assert!(g.is_connected());
        let max_degree = g.nodes().iter().map(|&i| g.degree(i).unwrap()).max().unwrap();
        assert!(max_degree > 2, "preferential attachment should grow hubs");
    }

    #[test]
    fn ws_ring_without_rewiring() {
        let spec = GenSpec {
            model: GraphModel::SmallWorld {
                n: 30,
                k: 4,
                beta: 0.0,
            },
            seed: 0,
            require_connected: true,
            endowment: homogeneous(30),
        };
        let (g, _) = generate(&spec).unwrap();
        assert_eq!(g.edge_count(), 30 * 2);
        assert!(g.nodes().iter().all(|&i| g.degree(i).unwrap() == 4));
    }

    #[test]
    fn ws_rewired_stays_reasonable() {
        let spec = GenSpec {
            model: GraphModel::SmallWorld {
                n: 30,
                k: 4,
                beta: 0.3,
            },
            seed: 11,
            require_connected: true,
            endowment: homogeneous(30),
        };
        let (g, _) = generate(&spec).unwrap();
        assert_eq!(g.node_count(), 30);
        assert_eq!(g.edge_count(), 60);
        assert!(g.is_connected());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GenSpec {
            model: GraphModel::ErdosRenyi { n: 20, p: 0.15 },
            seed: 99,
            require_connected: true,
            endowment: EndowmentProfile::Hotspots {
                base: rat_int(30),
                hot: rat_int(300),
                placement: HotspotPlacement::SeededRandom { count: 2 },
            },
        };
        let (g1, d1) = generate(&spec).unwrap();
        let (g2, d2) = generate(&spec).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(d1, d2);
        let hot: Vec<NodeId> = d1
            .iter()
            .filter(|(_, m)| *m == &rat_int(300))
            .map(|(id, _)| id)
            .collect();
        assert_eq!(hot.len(), 2);
    }

    #[test]
    fn listed_hotspots_are_validated() {
        let base = GenSpec {
            model: GraphModel::Lattice { rows: 2, cols: 2 },
            seed: 0,
            require_connected: true,
            endowment: EndowmentProfile::Hotspots {
                base: rat_int(30),
                hot: rat_int(300),
                placement: HotspotPlacement::Listed(vec![0, 3]),
            },
        };
        let (_, d) = generate(&base).unwrap();
        assert_eq!(d.mean(0).unwrap(), &rat_int(300));
        assert_eq!(d.mean(1).unwrap(), &rat_int(30));

        let mut bad = base.clone();
        bad.endowment = EndowmentProfile::Hotspots {
            base: rat_int(30),
            hot: rat_int(300),
            placement: HotspotPlacement::Listed(vec![0, 9]),
        };
        assert!(matches!(generate(&bad), Err(GenError::InvalidSpec(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mk = |model| GenSpec {
            model,
            seed: 0,
            require_connected: false,
            endowment: homogeneous(1),
        };
        assert!(generate(&mk(GraphModel::ErdosRenyi { n: 1, p: 0.5 })).is_err());
        assert!(generate(&mk(GraphModel::ErdosRenyi { n: 5, p: 0.0 })).is_err());
        assert!(generate(&mk(GraphModel::PreferentialAttachment {
            n: 5,
            m: 5,
            power: 1.0
        }))
        .is_err());
        assert!(generate(&mk(GraphModel::SmallWorld {
            n: 5,
            k: 3,
            beta: 0.1
        }))
        .is_err());
    }
}
