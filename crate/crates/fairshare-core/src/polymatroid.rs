//! The neighborhood set function `f(S) = sum of D_j over j in N_S`, the
//! polytope it induces, and the base where the total constraint is tight.
//!
//! `f` is submodular with `f(empty) = 0`; monotonicity is deliberately not
//! assumed anywhere. The base of the polytope is exactly the region of
//! long-run received-rate vectors any sharing policy can achieve, which is
//! why membership tests double as feasibility certificates downstream.

use crate::endowment::{Endowments, EndowmentError};
use crate::graph::{Graph, GraphError, NodeId, NodeSet};
use crate::num::Rat;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Per-node rate assignment, canonically ordered by node id.
pub type RateVector = BTreeMap<NodeId, Rat>;

/// Exhaustive subset enumeration is restricted to this many nodes; larger
/// instances must use the min-cut separation route.
pub const ENUMERATION_CAP: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolymatroidError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Endowment(#[from] EndowmentError),
    #[error("sigma is not a permutation of the node ids")]
    NotPermutation,
    #[error(
        "{nodes} nodes exceeds the exhaustive enumeration cap of {cap}; \
         use the flow-based separation check (in_base_separation)"
    )]
    EnumerationCap { nodes: usize, cap: usize },
    #[error("rate vector missing node {0}")]
    MissingRate(NodeId),
    #[error("rate for node {0} is negative")]
    NegativeRate(NodeId),
}

/// `f(S)`: the total endowment of the neighborhood of `S`, exactly.
pub fn f_value(g: &Graph, d: &Endowments, s: &NodeSet) -> Result<Rat, PolymatroidError> {
    let nbr = g.neighborhood(s)?;
    Ok(d.total(&nbr)?)
}

/// Dense bitmask view of an instance, for exhaustive subset work.
///
/// Subset sums go through two half-tables so each evaluation costs two
/// additions regardless of the subset's size.
pub(crate) struct DenseInstance {
    pub ids: Vec<NodeId>,
    pub nbr_mask: Vec<u64>,
    d_low: Vec<Rat>,
    d_high: Vec<Rat>,
    split: u32,
}

impl DenseInstance {
    pub fn build(g: &Graph, d: &Endowments) -> Result<Self, PolymatroidError> {
        let ids: Vec<NodeId> = g.nodes().to_vec();
        let n = ids.len();
        assert!(n <= 63, "dense view limited to 63 nodes");
        let mut nbr_mask = vec![0u64; n];
        for (pos, &id) in ids.iter().enumerate() {
            for nb in g.neighbors(id)? {
                let nb_pos = g.position(nb)?;
                nbr_mask[pos] |= 1 << nb_pos;
            }
        }
        let values: Vec<Rat> = ids
            .iter()
            .map(|&id| d.mean(id).cloned())
            .collect::<Result<_, _>>()?;
        let split = (n as u32).div_ceil(2);
        let (d_low, d_high) = Self::sum_tables(&values, split);
        Ok(DenseInstance {
            ids,
            nbr_mask,
            d_low,
            d_high,
            split,
        })
    }

    fn sum_tables(values: &[Rat], split: u32) -> (Vec<Rat>, Vec<Rat>) {
        let n = values.len() as u32;
        let low_bits = split.min(n);
        let high_bits = n - low_bits;
        let mut low = vec![Rat::zero(); 1 << low_bits];
        for m in 1usize..(1 << low_bits) {
            let b = m.trailing_zeros() as usize;
            low[m] = &low[m & (m - 1)] + &values[b];
        }
        let mut high = vec![Rat::zero(); 1 << high_bits];
        for m in 1usize..(1 << high_bits) {
            let b = m.trailing_zeros() as usize;
            high[m] = &high[m & (m - 1)] + &values[b + low_bits as usize];
        }
        (low, high)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Sum of endowments over a membership mask.
    pub fn d_sum(&self, mask: u64) -> Rat {
        let low = (mask & ((1 << self.split) - 1)) as usize;
        let high = (mask >> self.split) as usize;
        &self.d_low[low] + &self.d_high[high]
    }

    /// Neighborhood mask of a membership mask.
    pub fn nbr_of(&self, mask: u64) -> u64 {
        let mut out = 0u64;
        let mut rest = mask;
        while rest != 0 {
            let b = rest.trailing_zeros() as usize;
            out |= self.nbr_mask[b];
            rest &= rest - 1;
        }
        out
    }

    /// `f` on a membership mask.
    pub fn f_of(&self, mask: u64) -> Rat {
        self.d_sum(self.nbr_of(mask))
    }

    pub fn mask_to_set(&self, mask: u64) -> NodeSet {
        (0..self.n())
            .filter(|&p| mask >> p & 1 == 1)
            .map(|p| self.ids[p])
            .collect()
    }

}

#[derive(Debug, Clone)]
pub struct SubmodularViolation {
    pub s: NodeSet,
    pub t: NodeSet,
    /// f(S and T) + f(S or T)
    pub lhs: Rat,
    /// f(S) + f(T)
    pub rhs: Rat,
}

#[derive(Debug, Clone)]
pub struct SubmodularReport {
    pub sampled_pairs: usize,
    pub exhaustive: bool,
    pub violations: Vec<SubmodularViolation>,
}

impl SubmodularReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples `trials` random subset pairs and checks the submodular
/// inequality exactly on each; instances of at most 10 nodes additionally
/// get the full deterministic pair sweep. Violations are collected, never
/// raised.
pub fn check_submodular(
    g: &Graph,
    d: &Endowments,
    trials: usize,
    seed: u64,
) -> Result<SubmodularReport, PolymatroidError> {
    let dense = DenseInstance::build(g, d)?;
    let n = dense.n();
    let full: u64 = if n == 64 { u64::MAX } else { (1 << n) - 1 };
    let mut violations = Vec::new();

    let check_pair = |s_mask: u64, t_mask: u64, violations: &mut Vec<SubmodularViolation>| {
        let lhs = dense.f_of(s_mask & t_mask) + dense.f_of(s_mask | t_mask);
        let rhs = dense.f_of(s_mask) + dense.f_of(t_mask);
        if lhs > rhs {
            violations.push(SubmodularViolation {
                s: dense.mask_to_set(s_mask),
                t: dense.mask_to_set(t_mask),
                lhs,
                rhs,
            });
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let s_mask = rng.gen::<u64>() & full;
        let t_mask = rng.gen::<u64>() & full;
        check_pair(s_mask, t_mask, &mut violations);
    }

    let exhaustive = n <= 10;
    if exhaustive {
        // f values memoized once; the pair sweep is then two additions and
        // one comparison per pair.
        let f_table: Vec<Rat> = (0..=full).map(|m| dense.f_of(m)).collect();
        for s_mask in 0..=full {
            for t_mask in s_mask..=full {
                let lhs = &f_table[(s_mask & t_mask) as usize] + &f_table[(s_mask | t_mask) as usize];
                let rhs = &f_table[s_mask as usize] + &f_table[t_mask as usize];
                if lhs > rhs {
                    violations.push(SubmodularViolation {
                        s: dense.mask_to_set(s_mask),
                        t: dense.mask_to_set(t_mask),
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }

    Ok(SubmodularReport {
        sampled_pairs: trials,
        exhaustive,
        violations,
    })
}

fn validated_dense_rates(
    dense: &DenseInstance,
    r: &RateVector,
) -> Result<Vec<Rat>, PolymatroidError> {
    let mut rates = Vec::with_capacity(dense.n());
    for &id in &dense.ids {
        let v = r.get(&id).ok_or(PolymatroidError::MissingRate(id))?;
        if v.is_negative() {
            return Err(PolymatroidError::NegativeRate(id));
        }
        rates.push(v.clone());
    }
    Ok(rates)
}

/// Exhaustive membership test for the base: every proper-subset inequality
/// `r(S) <= f(S)` plus the total equality `r(N) = f(N)`, in exact
/// arithmetic. This is the desk-scale certificate oracle; it refuses
/// instances above [`ENUMERATION_CAP`] nodes.
pub fn in_base(g: &Graph, d: &Endowments, r: &RateVector) -> Result<bool, PolymatroidError> {
    let n = g.node_count();
    if n > ENUMERATION_CAP {
        return Err(PolymatroidError::EnumerationCap {
            nodes: n,
            cap: ENUMERATION_CAP,
        });
    }
    let dense = DenseInstance::build(g, d)?;
    let rates = validated_dense_rates(&dense, r)?;
    let split = (n as u32).div_ceil(2);
    let (r_low, r_high) = DenseInstance::sum_tables(&rates, split);
    let r_sum = |mask: u64| -> Rat {
        let low = (mask & ((1 << split) - 1)) as usize;
        let high = (mask >> split) as usize;
        &r_low[low] + &r_high[high]
    };

    let full: u64 = (1 << n) - 1;
    if r_sum(full) != dense.f_of(full) {
        return Ok(false);
    }
    for mask in 1..full {
        if r_sum(mask) > dense.f_of(mask) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Polynomial membership test via one min-cut separation: usable at any
/// size. Equivalent to [`in_base`] (cross-checked in tests).
pub fn in_base_separation(
    g: &Graph,
    d: &Endowments,
    r: &RateVector,
) -> Result<bool, PolymatroidError> {
    let all = g.node_set();
    if all.is_empty() {
        return Ok(r.is_empty());
    }
    let mut total_r = Rat::zero();
    for &id in &all {
        let v = r.get(&id).ok_or(PolymatroidError::MissingRate(id))?;
        if v.is_negative() {
            return Err(PolymatroidError::NegativeRate(id));
        }
        total_r += v;
    }
    if total_r != f_value(g, d, &all)? {
        return Ok(false);
    }
    let weights: BTreeMap<NodeId, Rat> = all.iter().map(|&id| (id, r[&id].clone())).collect();
    let (min_value, _) = crate::flow::weighted_deficiency_minimum(g, d, &weights, &all)
        .expect("separation network over a nonempty validated graph is well-formed");
    Ok(!min_value.is_negative())
}

/// The extreme point of the base selected by a visiting order: each node
/// gets the marginal `f(first i nodes) - f(first i-1 nodes)`.
pub fn extreme_point(
    g: &Graph,
    d: &Endowments,
    sigma: &[NodeId],
) -> Result<RateVector, PolymatroidError> {
    let mut expected = g.node_set();
    for &id in sigma {
        if !expected.remove(&id) {
            return Err(PolymatroidError::NotPermutation);
        }
    }
    if !expected.is_empty() {
        return Err(PolymatroidError::NotPermutation);
    }

    let mut out = RateVector::new();
    let mut prefix = NodeSet::new();
    let mut prev = Rat::zero();
    for &id in sigma {
        prefix.insert(id);
        let cur = f_value(g, d, &prefix)?;
        out.insert(id, &cur - &prev);
        prev = cur;
    }
    Ok(out)
}
