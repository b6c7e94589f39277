//! Walk enumeration, the coordination graph and entropy-maximizing walk
//! selection.

pub mod bound;
pub mod chain_rule;
pub mod coordination;
pub mod phi;
pub mod planner;
pub mod walks;

pub use bound::{theorem2_check, BoundReport};
pub use chain_rule::{chain_rule_check, ChainRuleReport};
pub use coordination::{adjacency_vector, adjacent, build_coordination_graph, CoordinationGraph};
pub use phi::{cholesky_global, compute_phi, PhiSet};
pub use planner::{CandidatePosterior, JointWalk, Plan, SensingRound};
pub use walks::{enumerate_walks, Walk, WalkSet};
