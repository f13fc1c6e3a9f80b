//! Learning algorithms: the variational Gaussian-exploration agent and its
//! Dirac/rescaled reductions, exact Thompson sampling for Gaussian bandits,
//! DDPG with deterministic or randomized critics, and a tabular
//! value-iteration oracle for verification.

mod bandit;
mod ddpg;
mod ge;
mod oracle;
mod replay;

pub use bandit::BanditPosterior;
pub use ddpg::{CriticMode, DdpgAgent, DdpgConfig};
pub use ge::{GeAgent, GeConfig, TrainMode};
pub use oracle::{chain_backward_induction, value_iteration, ChainPlan, TabularMdp, ValueIterationResult};
pub use replay::ReplayBuffer;

use thiserror::Error;

use crate::numerics::NumericsError;
use crate::returns::ReturnsError;
use crate::variational::VariationalError;

#[derive(Debug, Error)]
pub enum AgentsError {
    #[error("bandit arm {0} has no observations yet; pull every arm once first")]
    BanditUninitialized(usize),
    #[error("bandit arm index {got} out of range for {arms} arms")]
    BanditArmOutOfRange { got: usize, arms: usize },
    #[error("value iteration requires gamma in (0,1), got {0}; use backward induction for finite horizons")]
    OracleInvalidGamma(f64),
    #[error("tolerance must be positive, got {0}")]
    OracleInvalidTolerance(f64),
    #[error(transparent)]
    Returns(#[from] ReturnsError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, AgentsError>;

/// One experience tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: crate::envs::Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}
