//! Sequential Bayesian persuasion with a restricted set of feasible experiments.
//!
//! A sender repeatedly runs experiments from a feasible set `F`, each a
//! mean-preserving spread of the receiver's current belief, and is paid
//! `v(belief)` once it stops. The crate computes the finite-horizon values
//! `v_n` and their limit `v_inf` on the reachable belief graph, checks
//! superharmonic certificates, decides whether the concave-closure support can
//! be reached, and extracts optimal Markov policies when they exist.

pub mod belief;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod generators;
pub mod graph;
pub mod instance;
mod linalg;
pub mod regression;
pub mod solver;
pub mod structure;
pub mod utility;
pub mod value;

pub use belief::{rat, Atom, Belief, Experiment, Rational};
pub use engine::{MarkovPolicy, PolicyRule, StrategyTree};
pub use error::{Error, Result};
pub use graph::{BeliefGraph, GraphLimits};
pub use instance::{load_instance, save_instance, Instance};
pub use solver::{value_limit, value_recursion, ValueTable};
pub use utility::UtilitySpec;
pub use value::Value;
