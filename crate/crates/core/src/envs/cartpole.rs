//! Cart-pole balancing with the standard published constants, in two
//! flavors: the discrete push-left/push-right benchmark and a torque-bounded
//! continuous-force variant that stands in for the physics-engine inverted
//! pendulum.

use rand::{Rng, RngCore};

use super::{Action, ActionSpace, EnvError, EnvId, EnvSpec, Environment, Result, StepInfo, StepResult};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const DT: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;
const MAX_STEPS: usize = 200;

pub struct CartPole {
    continuous: bool,
    // [x, x_dot, theta, theta_dot]
    state: [f64; 4],
    step_count: usize,
    active: bool,
}

impl CartPole {
    pub fn discrete() -> Self {
        CartPole {
            continuous: false,
            state: [0.0; 4],
            step_count: 0,
            active: false,
        }
    }

    pub fn continuous() -> Self {
        CartPole {
            continuous: true,
            ..CartPole::discrete()
        }
    }

    /// Semi-implicit-free Euler step of the standard dynamics.
    fn integrate(state: &mut [f64; 4], force: f64) {
        let [x, x_dot, theta, theta_dot] = *state;
        let (sin_t, cos_t) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin_t) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin_t - cos_t * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_t * cos_t / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_t / TOTAL_MASS;
        state[0] = x + DT * x_dot;
        state[1] = x_dot + DT * x_acc;
        state[2] = theta + DT * theta_dot;
        state[3] = theta_dot + DT * theta_acc;
    }

    fn failed(state: &[f64; 4]) -> bool {
        state[0].abs() > X_THRESHOLD || state[2].abs() > THETA_THRESHOLD
    }
}

impl Environment for CartPole {
    fn spec(&self) -> EnvSpec {
        let (id, action_space) = if self.continuous {
            (
                EnvId::PendulumContinuous,
                ActionSpace::Box {
                    dim: 1,
                    low: vec![-FORCE_MAG],
                    high: vec![FORCE_MAG],
                },
            )
        } else {
            (EnvId::CartPole, ActionSpace::Discrete(2))
        };
        EnvSpec {
            id,
            action_space,
            obs_dim: 4,
            max_steps: MAX_STEPS,
        }
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        for v in self.state.iter_mut() {
            *v = rng.gen_range(-0.05..0.05);
        }
        self.step_count = 0;
        self.active = true;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if !self.active {
            return Err(EnvError::EpisodeFinished);
        }
        let force = match (self.continuous, action) {
            (false, Action::Discrete(0)) => -FORCE_MAG,
            (false, Action::Discrete(1)) => FORCE_MAG,
            // out-of-bounds continuous actions clip to the force bounds
            (true, Action::Continuous(f)) if f.len() == 1 => {
                f[0].clamp(-FORCE_MAG, FORCE_MAG)
            }
            (_, other) => {
                return Err(EnvError::InvalidAction {
                    env: if self.continuous { "pendulum_continuous" } else { "cartpole" },
                    got: format!("{other:?}"),
                    reason: if self.continuous {
                        "expected a length-1 continuous force".into()
                    } else {
                        "expected discrete 0 (left) or 1 (right)".into()
                    },
                })
            }
        };
        Self::integrate(&mut self.state, force);
        self.step_count += 1;
        let terminated = Self::failed(&self.state);
        let done = terminated || self.step_count == MAX_STEPS;
        if done {
            self.active = false;
        }
        Ok(StepResult {
            obs: self.state.to_vec(),
            reward: 1.0,
            done,
            info: StepInfo {
                raw_reward: 1.0,
                state_index: None,
                terminated,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn constant_push_deflects_the_pole() {
        // A sustained push destabilizes the pole: the deflection magnitude
        // grows monotonically once the cart accelerates away.
        let mut env = CartPole::discrete();
        env.reset(&mut ChaCha12Rng::seed_from_u64(0));
        env.state = [0.0, 0.0, 0.01, 0.0];
        for _ in 0..10 {
            env.step(&Action::Discrete(1)).unwrap();
        }
        assert!(env.state[2].abs() > 0.01, "pole stayed near upright: {}", env.state[2]);
        assert!(env.state[0] > 0.0, "cart did not move in the push direction");
    }

    #[test]
    fn reset_is_seed_reproducible() {
        let mut env = CartPole::discrete();
        let a = env.reset(&mut ChaCha12Rng::seed_from_u64(9));
        let b = env.reset(&mut ChaCha12Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn unstable_equilibrium_is_a_fixed_point_of_continuous_dynamics() {
        let mut env = CartPole::continuous();
        env.reset(&mut ChaCha12Rng::seed_from_u64(0));
        env.state = [0.0; 4];
        for _ in 0..50 {
            let r = env.step(&Action::Continuous(vec![0.0])).unwrap();
            assert_eq!(r.obs, vec![0.0; 4]);
        }
    }

    #[test]
    fn continuous_actions_clip_to_bounds() {
        let mut env = CartPole::continuous();
        env.reset(&mut ChaCha12Rng::seed_from_u64(0));
        env.state = [0.0; 4];
        let mut clipped = CartPole::continuous();
        clipped.reset(&mut ChaCha12Rng::seed_from_u64(0));
        clipped.state = [0.0; 4];
        let a = env.step(&Action::Continuous(vec![1e6])).unwrap();
        let b = clipped.step(&Action::Continuous(vec![FORCE_MAG])).unwrap();
        assert_eq!(a.obs, b.obs);
    }

    #[test]
    fn episode_caps_at_two_hundred_steps() {
        let mut env = CartPole::continuous();
        env.reset(&mut ChaCha12Rng::seed_from_u64(0));
        env.state = [0.0; 4];
        for t in 1..=MAX_STEPS {
            let r = env.step(&Action::Continuous(vec![0.0])).unwrap();
            assert_eq!(r.done, t == MAX_STEPS);
            if r.done {
                assert!(!r.info.terminated);
            }
        }
    }
}
