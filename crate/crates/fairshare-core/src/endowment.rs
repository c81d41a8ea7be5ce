//! Per-node mean endowments: the exact inputs to every solver path.

use crate::graph::{NodeId, NodeSet};
use crate::num::Rat;
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EndowmentError {
    #[error("endowment for node {0} must be positive")]
    NonPositive(NodeId),
    #[error("bound must be at least the largest mean")]
    BoundTooSmall,
    #[error("no endowment configured for node {0}")]
    Missing(NodeId),
}

/// Mean per-slot resource generation `D_i > 0` for every node, plus a
/// uniform bound `B` dominating every draw any configured distribution can
/// produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endowments {
    means: BTreeMap<NodeId, Rat>,
    bound: Rat,
}

impl Endowments {
    /// Means only; the bound defaults to the largest mean (tight for
    /// constant draws).
    pub fn new(means: BTreeMap<NodeId, Rat>) -> Result<Self, EndowmentError> {
        let bound = means
            .values()
            .max()
            .cloned()
            .unwrap_or_else(Rat::zero);
        Self::with_bound(means, bound)
    }

    pub fn with_bound(means: BTreeMap<NodeId, Rat>, bound: Rat) -> Result<Self, EndowmentError> {
        for (&id, d) in &means {
            if !d.is_positive() {
                return Err(EndowmentError::NonPositive(id));
            }
        }
        if let Some(max) = means.values().max() {
            if bound < *max {
                return Err(EndowmentError::BoundTooSmall);
            }
        }
        Ok(Endowments { means, bound })
    }

    /// Same mean for every listed node.
    pub fn homogeneous(ids: impl IntoIterator<Item = NodeId>, mean: Rat) -> Result<Self, EndowmentError> {
        Self::new(ids.into_iter().map(|id| (id, mean.clone())).collect())
    }

    pub fn mean(&self, id: NodeId) -> Result<&Rat, EndowmentError> {
        self.means.get(&id).ok_or(EndowmentError::Missing(id))
    }

    pub fn bound(&self) -> &Rat {
        &self.bound
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Rat)> {
        self.means.iter().map(|(&id, d)| (id, d))
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Exact `sum_{i in s} D_i`.
    pub fn total(&self, s: &NodeSet) -> Result<Rat, EndowmentError> {
        let mut acc = Rat::zero();
        for &id in s {
            acc += self.mean(id)?;
        }
        Ok(acc)
    }

    /// Every mean multiplied by a positive constant, bound included.
    pub fn scaled(&self, c: &Rat) -> Result<Self, EndowmentError> {
        Self::with_bound(
            self.means
                .iter()
                .map(|(&id, d)| (id, d * c))
                .collect(),
            &self.bound * c,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, rat_int};

    #[test]
    fn rejects_non_positive_means() {
        let mut means = BTreeMap::new();
        means.insert(1, rat_int(3));
        means.insert(2, rat_int(0));
        assert_eq!(
            Endowments::new(means).unwrap_err(),
            EndowmentError::NonPositive(2)
        );
    }

    #[test]
    fn bound_must_cover_means() {
        let means: BTreeMap<_, _> = [(1, rat_int(5)), (2, rat_int(2))].into();
        assert!(Endowments::with_bound(means.clone(), rat_int(4)).is_err());
        let e = Endowments::with_bound(means, rat_int(5)).unwrap();
        assert_eq!(e.bound(), &rat_int(5));
    }

    #[test]
    fn totals_and_scaling() {
        let e = Endowments::homogeneous(1..=3, rat_int(2)).unwrap();
        let all: NodeSet = (1..=3).collect();
        assert_eq!(e.total(&all).unwrap(), rat_int(6));
        let scaled = e.scaled(&rat(1, 2)).unwrap();
        assert_eq!(scaled.mean(1).unwrap(), &rat_int(1));
        assert_eq!(scaled.total(&all).unwrap(), rat_int(3));
    }
}
