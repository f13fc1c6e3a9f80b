//! The N-state chain: a deterministic line of states with a tiny sure
//! reward at the left absorbing end and a large distant reward at the
//! right absorbing end. Every episode starts at state 2 and lasts exactly
//! N + 9 steps; reward is paid according to the state a step lands in.

use rand::RngCore;

use super::{Action, ActionSpace, EnvError, EnvId, EnvSpec, Environment, Result, StepInfo, StepResult};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Reward for a step landing in (or staying at) the given 1-based state.
pub fn chain_reward(n: usize, landing_state: usize) -> f64 {
    if landing_state == 1 {
        0.001
    } else if landing_state == n {
        1.0
    } else {
        0.0
    }
}

/// Deterministic transition: interior states move by one, the two
/// absorbing ends map to themselves under both actions.
pub fn chain_next_state(n: usize, state: usize, action: usize) -> usize {
    if state == 1 || state == n {
        state
    } else if action == LEFT {
        state - 1
    } else {
        state + 1
    }
}

pub struct ChainMdp {
    n: usize,
    state: usize,
    step_count: usize,
    active: bool,
}

impl ChainMdp {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(EnvError::ChainTooSmall(n));
        }
        Ok(ChainMdp {
            n,
            state: 2,
            step_count: 0,
            active: false,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.n + 9
    }

    fn one_hot(&self, state: usize) -> Vec<f64> {
        let mut obs = vec![0.0; self.n];
        obs[state - 1] = 1.0;
        obs
    }
}

impl Environment for ChainMdp {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            id: EnvId::Chain(self.n),
            action_space: ActionSpace::Discrete(2),
            obs_dim: self.n,
            max_steps: self.horizon(),
        }
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.state = 2;
        self.step_count = 0;
        self.active = true;
        self.one_hot(2)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if !self.active {
            return Err(EnvError::EpisodeFinished);
        }
        let a = match action {
            Action::Discrete(a) if *a == LEFT || *a == RIGHT => *a,
            other => {
                return Err(EnvError::InvalidAction {
                    env: "chain",
                    got: format!("{other:?}"),
                    reason: "expected discrete left(0) or right(1)".into(),
                })
            }
        };
        let next = chain_next_state(self.n, self.state, a);
        let reward = chain_reward(self.n, next);
        self.state = next;
        self.step_count += 1;
        let done = self.step_count == self.horizon();
        if done {
            self.active = false;
        }
        Ok(StepResult {
            obs: self.one_hot(next),
            reward,
            done,
            info: StepInfo {
                raw_reward: reward,
                state_index: Some(next),
                terminated: false,
            },
        })
    }
}
