//! Acrobot swing-up: a two-link underactuated pendulum with torque on the
//! middle joint, integrated with a fourth-order Runge-Kutta step. Constants
//! are the standard two-link benchmark parameters.

use rand::{Rng, RngCore};

use super::{Action, ActionSpace, EnvError, EnvId, EnvSpec, Environment, Result, StepInfo, StepResult};

const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const GRAVITY: f64 = 9.8;
const DT: f64 = 0.2;
const MAX_VEL_1: f64 = 4.0 * std::f64::consts::PI;
const MAX_VEL_2: f64 = 9.0 * std::f64::consts::PI;
const MAX_STEPS: usize = 500;

pub struct Acrobot {
    // [theta1, theta2, dtheta1, dtheta2]
    state: [f64; 4],
    step_count: usize,
    active: bool,
}

fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = (x + std::f64::consts::PI) % two_pi;
    if y < 0.0 {
        y += two_pi;
    }
    y - std::f64::consts::PI
}

fn derivatives(s: &[f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2) = (LINK_MASS_1, LINK_MASS_2);
    let (l1, lc1, lc2) = (LINK_LENGTH_1, LINK_COM_1, LINK_COM_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let g = GRAVITY;
    let [theta1, theta2, dtheta1, dtheta2] = *s;

    let d1 = m1 * lc1 * lc1
        + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos())
        + i1
        + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - std::f64::consts::FRAC_PI_2).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * (theta1 - std::f64::consts::FRAC_PI_2).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1
        - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin()
        - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4_step(s: &[f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |a: &[f64; 4], b: &[f64; 4], h: f64| {
        [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]]
    };
    let k1 = derivatives(s, torque);
    let k2 = derivatives(&add(s, &k1, dt / 2.0), torque);
    let k3 = derivatives(&add(s, &k2, dt / 2.0), torque);
    let k4 = derivatives(&add(s, &k3, dt), torque);
    [
        s[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        s[2] + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        s[3] + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    ]
}

impl Acrobot {
    pub fn new() -> Self {
        Acrobot {
            state: [0.0; 4],
            step_count: 0,
            active: false,
        }
    }

    fn observation(&self) -> Vec<f64> {
        let [t1, t2, d1, d2] = self.state;
        vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), d1, d2]
    }

    fn goal_reached(&self) -> bool {
        let [t1, t2, _, _] = self.state;
        -t1.cos() - (t1 + t2).cos() > 1.0
    }
}

impl Default for Acrobot {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Acrobot {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            id: EnvId::Acrobot,
            action_space: ActionSpace::Discrete(3),
            obs_dim: 6,
            max_steps: MAX_STEPS,
        }
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        for v in self.state.iter_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
        self.step_count = 0;
        self.active = true;
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if !self.active {
            return Err(EnvError::EpisodeFinished);
        }
        let torque = match action {
            Action::Discrete(a) if *a < 3 => *a as f64 - 1.0,
            other => {
                return Err(EnvError::InvalidAction {
                    env: "acrobot",
                    got: format!("{other:?}"),
                    reason: "expected discrete torque index 0..3".into(),
                })
            }
        };
        let mut next = rk4_step(&self.state, torque, DT);
        next[0] = wrap_angle(next[0]);
        next[1] = wrap_angle(next[1]);
        next[2] = next[2].clamp(-MAX_VEL_1, MAX_VEL_1);
        next[3] = next[3].clamp(-MAX_VEL_2, MAX_VEL_2);
        self.state = next;
        self.step_count += 1;
        let terminated = self.goal_reached();
        let done = terminated || self.step_count == MAX_STEPS;
        if done {
            self.active = false;
        }
        let reward = if terminated { 0.0 } else { -1.0 };
        Ok(StepResult {
            obs: self.observation(),
            reward,
            done,
            info: StepInfo {
                raw_reward: reward,
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
    fn hanging_rest_is_an_equilibrium() {
        let d = derivatives(&[0.0; 4], 0.0);
        for v in d {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn energy_injection_raises_the_tip() {
        let mut env = Acrobot::new();
        env.reset(&mut ChaCha12Rng::seed_from_u64(1));
        let height = |s: &[f64; 4]| -s[0].cos() - (s[0] + s[1]).cos();
        let mut best: f64 = height(&env.state);
        // bang-bang torque against the first joint velocity pumps energy
        for _ in 0..300 {
            let a = if env.state[2] >= 0.0 { 0 } else { 2 };
            let r = env.step(&Action::Discrete(a)).unwrap();
            best = best.max(height(&env.state));
            if r.done {
                break;
            }
        }
        assert!(best > 0.3, "tip height never rose: {best}");
    }

    #[test]
    fn velocities_stay_clamped() {
        let mut env = Acrobot::new();
        env.reset(&mut ChaCha12Rng::seed_from_u64(2));
        for _ in 0..300 {
            let r = env.step(&Action::Discrete(2)).unwrap();
            assert!(r.obs[4].abs() <= MAX_VEL_1 + 1e-12);
            assert!(r.obs[5].abs() <= MAX_VEL_2 + 1e-12);
            if r.done {
                break;
            }
        }
    }

    #[test]
    fn angle_wrapping_stays_in_pi_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12
            || (wrap_angle(3.0 * std::f64::consts::PI) + std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-12);
    }
}
