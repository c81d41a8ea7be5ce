//! Fair resource sharing on graphs: an exact lex-optimal allocation
//! solver, equilibrium and coalitional-stability verifiers, and a
//! stochastic simulator of the distributed sharing policy.
//!
//! Agents sit on an undirected connected graph and generate resource at
//! mean rates (their *endowments*); resource moves only across edges and
//! is consumed where it lands. The per-node figure of merit is the
//! *sharing ratio* — long-run received resource over endowment. This
//! crate computes the unique allocation whose sorted ratio vector is
//! lexicographically maximal, certifies it against an independent
//! characterization, verifies its market-equilibrium and coalition-
//! stability properties, and simulates the online policy that converges
//! to it.
//!
//! The narrative guide under `book/` walks through the concepts; its code
//! snippets compile and run as doc-tests via the [`guide`] module.

pub mod endowment;
pub mod flow;
pub mod graph;
pub mod guide;
pub mod num;
pub mod polymatroid;
pub mod io;
pub mod netgen;
pub mod sim;
pub mod solver;
pub mod verify;

pub use endowment::{EndowmentError, Endowments};
pub use graph::{Graph, GraphError, NodeId, NodeSet};
pub use num::{format_rat, parse_rat, rat, rat_int, Rat};
pub use polymatroid::RateVector;
pub use solver::{Allocation, LevelDecomposition, SolverError};
