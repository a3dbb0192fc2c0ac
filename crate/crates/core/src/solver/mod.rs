//! Equilibria of the finite games induced by a machine base, and the
//! samplers that realise mixed strategies as machines.

pub mod finite;
pub mod linalg;
pub mod regret;
pub mod sampler;
pub mod support;

pub use finite::{induce_finite_game, FiniteBayesianGame, InduceMode, InducedGame, MixedEquilibrium, World};
pub use regret::{epsilon_ne_regret, ROUNDING_DENOMINATOR};
pub use sampler::{lift_to_sampler_machine, sampler_law, thresholds};
pub use support::{solve_support_enumeration, MAX_PLANS, MAX_SUPPORT_UNIVERSE};

use crate::game::GameError;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("game is not computationally cheap: {0}")]
    NotComputationallyCheap(String),
    #[error("size limit: {0}")]
    SizeLimit(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no support pair yields an equilibrium")]
    NoEquilibriumInSupports,
    #[error("iteration cap reached; best residual {residual}")]
    IterationCapExceeded { residual: String },
    #[error(transparent)]
    Game(#[from] GameError),
}
