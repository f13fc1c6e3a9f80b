//! Natively implemented benchmark environments: the chain MDP, classic
//! control tasks, and sparse-reward wrappers. All dynamics are deterministic
//! given a seeded rng at reset.

mod acrobot;
mod cartpole;
mod chain;
mod mountain_car;

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use chain::{chain_next_state, chain_reward, ChainMdp, LEFT, RIGHT};
pub use mountain_car::MountainCar;

use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid action {got} for {env}: {reason}")]
    InvalidAction {
        env: &'static str,
        got: String,
        reason: String,
    },
    #[error("episode already finished; reset before stepping")]
    EpisodeFinished,
    #[error("unknown environment id {0:?}")]
    UnknownEnv(String),
    #[error("chain size must be at least 3, got {0}")]
    ChainTooSmall(usize),
    #[error("sparse wrapper does not apply to {0:?}")]
    SparseUnsupported(EnvId),
}

pub type Result<T> = std::result::Result<T, EnvError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    Chain(usize),
    CartPole,
    MountainCar,
    Acrobot,
    PendulumContinuous,
}

impl EnvId {
    /// Parses the CLI vocabulary: `chain(N)`, `cartpole`, `mountaincar`,
    /// `acrobot`, `pendulum_continuous`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("chain(").and_then(|r| r.strip_suffix(')')) {
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| EnvError::UnknownEnv(s.to_string()))?;
            if n < 3 {
                return Err(EnvError::ChainTooSmall(n));
            }
            return Ok(EnvId::Chain(n));
        }
        match s {
            "cartpole" => Ok(EnvId::CartPole),
            "mountaincar" => Ok(EnvId::MountainCar),
            "acrobot" => Ok(EnvId::Acrobot),
            "pendulum_continuous" => Ok(EnvId::PendulumContinuous),
            _ => Err(EnvError::UnknownEnv(s.to_string())),
        }
    }
}

impl std::fmt::Display for EnvId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvId::Chain(n) => write!(f, "chain({n})"),
            EnvId::CartPole => write!(f, "cartpole"),
            EnvId::MountainCar => write!(f, "mountaincar"),
            EnvId::Acrobot => write!(f, "acrobot"),
            EnvId::PendulumContinuous => write!(f, "pendulum_continuous"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Box {
        dim: usize,
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub id: EnvId,
    pub action_space: ActionSpace,
    pub obs_dim: usize,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Extra per-step facts that the metrics layer records.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Reward before any sparsification.
    pub raw_reward: f64,
    /// Chain state index (1-based), chain only.
    pub state_index: Option<usize>,
    /// Natural termination (goal reached / failure), as opposed to the
    /// step-cap truncation folded into `done`.
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<StepResult>;
}

/// Applies the sparse-reward rule: goal tasks pay `+1` on natural
/// termination, balance tasks pay `-1`; every other step pays `0`.
/// Time-limit truncation is not a termination and pays `0`.
pub fn sparsify(id: EnvId, mut raw: StepResult) -> Result<StepResult> {
    let on_terminal = match id {
        EnvId::MountainCar | EnvId::Acrobot => 1.0,
        EnvId::CartPole | EnvId::PendulumContinuous => -1.0,
        EnvId::Chain(_) => return Err(EnvError::SparseUnsupported(id)),
    };
    raw.reward = if raw.info.terminated { on_terminal } else { 0.0 };
    Ok(raw)
}

/// An environment with the sparse-reward rule applied to every step.
pub struct SparseEnv {
    inner: Box<dyn Environment>,
}

impl SparseEnv {
    pub fn new(inner: Box<dyn Environment>) -> Result<Self> {
        // validate the id up front
        sparsify(
            inner.spec().id,
            StepResult {
                obs: vec![],
                reward: 0.0,
                done: false,
                info: StepInfo {
                    raw_reward: 0.0,
                    state_index: None,
                    terminated: false,
                },
            },
        )?;
        Ok(SparseEnv { inner })
    }
}

impl Environment for SparseEnv {
    fn spec(&self) -> EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.inner.reset(rng)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let raw = self.inner.step(action)?;
        sparsify(self.inner.spec().id, raw)
    }
}

/// Builds an environment from its id string, optionally sparse-wrapped.
pub fn make_env(id: &str, sparse: bool) -> Result<Box<dyn Environment>> {
    let id = EnvId::parse(id)?;
    let base: Box<dyn Environment> = match id {
        EnvId::Chain(n) => Box::new(ChainMdp::new(n)?),
        EnvId::CartPole => Box::new(CartPole::discrete()),
        EnvId::PendulumContinuous => Box::new(CartPole::continuous()),
        EnvId::MountainCar => Box::new(MountainCar::new()),
        EnvId::Acrobot => Box::new(Acrobot::new()),
    };
    if sparse {
        Ok(Box::new(SparseEnv::new(base)?))
    } else {
        Ok(base)
    }
}
