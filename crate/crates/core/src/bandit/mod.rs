//! Restless reward chains, selection policies and regret accounting.

pub mod bounds;
pub mod chain;
pub mod ensemble;
pub mod policy;
pub mod regret;

pub use bounds::{bound_check, BoundReport};
pub use chain::{stationary_means, theta, RestlessChain, StationaryAnalysis, TransitionMatrix};
pub use ensemble::{build_ensemble, EnsembleParams};
pub use policy::{
    Alg1, Ecop, Mass, Optimal, Phase, Policy, PolicyKind, RandomPolicy, Selection, SelectorState, SlotContext,
};
pub use regret::{regret, RegretTracker};
