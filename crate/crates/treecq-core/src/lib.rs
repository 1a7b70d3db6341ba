//! Conjunctive queries over unranked labeled trees.
//!
//! The crate covers the tree and query models, X̄-property analysis and the
//! tractability classifier, several evaluators, the rewrite system into unions of
//! acyclic queries, NP-hardness gadget generators, and the n-diamond succinctness
//! experiments.

pub mod eval;
pub mod gadgets;
pub mod query;
pub mod random;
pub mod rewrite;
pub mod succinct;
pub mod tree;
pub mod xbar;

pub use query::{Atom, ConjunctiveQuery, PositiveQuery, QueryError, Unary};
pub use tree::{Axis, NodeId, Tree, TreeError};
