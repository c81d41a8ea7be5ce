//! Shared instance generators and brute-force oracles for the integration
//! suites. The oracles enumerate subsets directly and share no code with
//! the flow-based solver paths they cross-check.

#![allow(dead_code)]

use fairshare_core::num::Rat;
use fairshare_core::{Endowments, Graph, NodeId, NodeSet};
use num_traits::Zero;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Random connected graph: a random attachment tree plus independent extra
/// edges.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, extra_edge_prob: f64) -> Graph {
    assert!(n >= 2);
    let mut edges = Vec::new();
    for v in 1..n as NodeId {
        let parent = rng.gen_range(0..v);
        edges.push((parent, v));
    }
    for i in 0..n as NodeId {
        for j in (i + 1)..n as NodeId {
            if !edges.contains(&(i, j)) && rng.gen::<f64>() < extra_edge_prob {
                edges.push((i, j));
            }
        }
    }
    Graph::new(0..n as NodeId, edges).expect("construction is well-formed")
}

/// Random positive rational endowments with small numerators and
/// denominators.
pub fn random_endowments(rng: &mut ChaCha8Rng, g: &Graph, max_num: i64, max_den: i64) -> Endowments {
    let means: BTreeMap<NodeId, Rat> = g
        .nodes()
        .iter()
        .map(|&id| {
            let num = rng.gen_range(1..=max_num);
            let den = rng.gen_range(1..=max_den);
            (id, Rat::new(num.into(), den.into()))
        })
        .collect();
    Endowments::new(means).expect("positive by construction")
}

/// Dense brute-force view of an instance for subset enumeration.
pub struct EnumOracle {
    pub ids: Vec<NodeId>,
    nbr_mask: Vec<u64>,
    d: Vec<Rat>,
}

impl EnumOracle {
    pub fn new(g: &Graph, d: &Endowments) -> Self {
        let ids: Vec<NodeId> = g.nodes().to_vec();
        assert!(ids.len() <= 20, "oracle meant for desk-scale instances");
        let nbr_mask = ids
            .iter()
            .map(|&id| {
                let mut mask = 0u64;
                for nb in g.neighbors(id).unwrap() {
                    mask |= 1 << g.position(nb).unwrap();
                }
                mask
            })
            .collect();
        let d = ids.iter().map(|&id| d.mean(id).unwrap().clone()).collect();
        EnumOracle { ids, nbr_mask, d }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn full_mask(&self) -> u64 {
        (1u64 << self.n()) - 1
    }

    pub fn d_of(&self, mask: u64) -> Rat {
        let mut acc = Rat::zero();
        let mut rest = mask;
        while rest != 0 {
            let b = rest.trailing_zeros() as usize;
            acc += &self.d[b];
            rest &= rest - 1;
        }
        acc
    }

    pub fn f_of(&self, mask: u64) -> Rat {
        let mut nbr = 0u64;
        let mut rest = mask;
        while rest != 0 {
            let b = rest.trailing_zeros() as usize;
            nbr |= self.nbr_mask[b];
            rest &= rest - 1;
        }
        self.d_of(nbr)
    }

    /// `f` of the subgraph induced by `restrict_mask`, evaluated at `mask`.
    pub fn f_restrict_of(&self, mask: u64, restrict_mask: u64) -> Rat {
        let mut nbr = 0u64;
        let mut rest = mask & restrict_mask;
        while rest != 0 {
            let b = rest.trailing_zeros() as usize;
            nbr |= self.nbr_mask[b] & restrict_mask;
            rest &= rest - 1;
        }
        self.d_of(nbr)
    }

    pub fn mask_to_set(&self, mask: u64) -> NodeSet {
        (0..self.n())
            .filter(|&p| mask >> p & 1 == 1)
            .map(|p| self.ids[p])
            .collect()
    }

    pub fn set_to_mask(&self, s: &NodeSet) -> u64 {
        self.ids
            .iter()
            .enumerate()
            .filter(|(_, id)| s.contains(id))
            .map(|(p, _)| 1u64 << p)
            .sum()
    }

    /// `min over nonempty S of f(S)/D(S)` and the union of every set
    /// attaining it, by full enumeration.
    pub fn min_ratio(&self) -> (Rat, NodeSet) {
        let mut best: Option<Rat> = None;
        let mut union = 0u64;
        for mask in 1..=self.full_mask() {
            let ratio = self.f_of(mask) / self.d_of(mask);
            match &best {
                Some(b) if ratio > *b => {}
                Some(b) if ratio == *b => union |= mask,
                _ => {
                    best = Some(ratio);
                    union = mask;
                }
            }
        }
        (best.expect("nonempty instance"), self.mask_to_set(union))
    }

    /// `min over nonempty S within restrict of f_restrict(S) - lambda D(S)`
    /// and the union of every minimizer, where `f_restrict` only sees
    /// neighbors inside the restricted mask.
    pub fn min_deficiency(&self, lambda: &Rat, restrict_mask: u64) -> (Rat, NodeSet) {
        let mut best: Option<Rat> = None;
        let mut union = 0u64;
        let mut sub = restrict_mask;
        loop {
            if sub != 0 {
                let mut nbr = 0u64;
                let mut rest = sub;
                while rest != 0 {
                    let b = rest.trailing_zeros() as usize;
                    nbr |= self.nbr_mask[b] & restrict_mask;
                    rest &= rest - 1;
                }
                let value = self.d_of(nbr) - lambda * self.d_of(sub);
                match &best {
                    Some(b) if value > *b => {}
                    Some(b) if value == *b => union |= sub,
                    _ => {
                        best = Some(value);
                        union = sub;
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & restrict_mask;
        }
        (best.expect("restrict nonempty"), self.mask_to_set(union))
    }
}

/// The standard battery: seeded random connected instances with rational
/// endowments, sizes cycling up to `max_n`.
pub fn battery(rng: &mut ChaCha8Rng, count: usize, max_n: usize) -> Vec<(Graph, Endowments)> {
    (0..count)
        .map(|i| {
            let n = 2 + (i % (max_n - 1));
            let p = rng.gen_range(0.1..0.6);
            let g = random_connected_graph(rng, n, p);
            let d = random_endowments(rng, &g, 24, 6);
            (g, d)
        })
        .collect()
}
