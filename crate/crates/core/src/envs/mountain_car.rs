//! Mountain car with the standard benchmark constants: an underpowered
//! car must rock back and forth to escape a valley.

use rand::{Rng, RngCore};

use super::{Action, ActionSpace, EnvError, EnvId, EnvSpec, Environment, Result, StepInfo, StepResult};

const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GOAL_POSITION: f64 = 0.5;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;
const MAX_STEPS: usize = 200;

pub struct MountainCar {
    position: f64,
    velocity: f64,
    step_count: usize,
    active: bool,
}

impl MountainCar {
    pub fn new() -> Self {
        MountainCar {
            position: 0.0,
            velocity: 0.0,
            step_count: 0,
            active: false,
        }
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            id: EnvId::MountainCar,
            action_space: ActionSpace::Discrete(3),
            obs_dim: 2,
            max_steps: MAX_STEPS,
        }
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.position = rng.gen_range(-0.6..-0.4);
        self.velocity = 0.0;
        self.step_count = 0;
        self.active = true;
        vec![self.position, self.velocity]
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if !self.active {
            return Err(EnvError::EpisodeFinished);
        }
        let a = match action {
            Action::Discrete(a) if *a < 3 => *a as f64,
            other => {
                return Err(EnvError::InvalidAction {
                    env: "mountaincar",
                    got: format!("{other:?}"),
                    reason: "expected discrete 0 (reverse), 1 (coast), 2 (forward)".into(),
                })
            }
        };
        self.velocity += (a - 1.0) * FORCE - (3.0 * self.position).cos() * GRAVITY;
        self.velocity = self.velocity.clamp(-MAX_SPEED, MAX_SPEED);
        self.position += self.velocity;
        self.position = self.position.clamp(MIN_POSITION, MAX_POSITION);
        if self.position == MIN_POSITION && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        self.step_count += 1;
        let terminated = self.position >= GOAL_POSITION;
        let done = terminated || self.step_count == MAX_STEPS;
        if done {
            self.active = false;
        }
        Ok(StepResult {
            obs: vec![self.position, self.velocity],
            reward: -1.0,
            done,
            info: StepInfo {
                raw_reward: -1.0,
                state_index: None,
                terminated,
            },
        })
    }
}
