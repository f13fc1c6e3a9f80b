//! Deterministic-policy learning for continuous control. The critic is a
//! one-output return head over the concatenated state-action vector, wrapped
//! in the same parameter distribution the discrete agent uses, so the critic
//! update is the shared variational objective verbatim. Exploration comes
//! either from additive action noise (the plain baseline) or from acting and
//! bootstrapping under sampled critic parameters.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ReplayBuffer, Result};
use crate::envs::Action;
use crate::numerics::{MlpSpec, Optimizer, OptimizerConfig, Tape, Tensor};
use crate::returns::{
    sample_return, variational_objective_sampled, EmpiricalTargets, ObjectiveWeights, ReturnHead,
};
use crate::variational::{FactorizedGaussian, Mode};

/// How the critic is randomized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticMode {
    /// Deterministic critic; exploration via additive Gaussian action noise.
    Plain,
    /// Gaussian critic parameters, entropy off, likelihood rescaled.
    Noisy,
    /// Gaussian critic parameters with the full entropy-regularized objective.
    Ge,
}

#[derive(Debug, Clone)]
pub struct DdpgConfig {
    pub critic_mode: CriticMode,
    pub state_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub critic_sigma: f64,
    pub rho: f64,
    pub gamma: f64,
    pub target_sync_period: u64,
    /// `Some(tau)` mixes targets toward the online parameters every step
    /// instead of hard-copying on the sync period.
    pub polyak: Option<f64>,
    pub actor_optimizer: OptimizerConfig,
    pub critic_optimizer: OptimizerConfig,
    /// Plain-mode exploration noise, as a fraction of the action range.
    pub noise_frac: f64,
}

pub struct DdpgAgent {
    pub config: DdpgConfig,
    pub actor_spec: MlpSpec,
    pub actor: Vec<Tensor>,
    pub actor_target: Vec<Tensor>,
    pub critic_head: ReturnHead,
    pub critic: FactorizedGaussian,
    pub critic_target: FactorizedGaussian,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    step_counter: u64,
}

impl DdpgAgent {
    pub fn new<R: Rng>(config: DdpgConfig, rng: &mut R) -> Result<Self> {
        let a_dim = config.action_low.len();
        assert_eq!(config.action_high.len(), a_dim);
        assert!(config
            .action_low
            .iter()
            .zip(&config.action_high)
            .all(|(l, h)| l < h));

        let mut actor_widths = vec![config.state_dim];
        actor_widths.extend(&config.actor_hidden);
        actor_widths.push(a_dim);
        let actor_spec = MlpSpec::new(actor_widths, crate::numerics::Activation::Tanh)?;
        let actor = actor_spec.init_params(rng);
        let actor_target = actor.clone();

        let mut critic_widths = vec![config.state_dim + a_dim];
        critic_widths.extend(&config.critic_hidden);
        critic_widths.push(1);
        let critic_spec = MlpSpec::new(critic_widths, crate::numerics::Activation::Tanh)?;
        let critic_mu = critic_spec.init_params(rng);
        let critic_head = ReturnHead::gaussian(critic_spec, config.critic_sigma);
        let critic = match config.critic_mode {
            CriticMode::Plain => FactorizedGaussian::dirac(critic_mu),
            CriticMode::Noisy | CriticMode::Ge => {
                FactorizedGaussian::new_shared(critic_mu, config.rho, Mode::Gaussian)
            }
        };
        let critic_target = critic.clone();

        let actor_opt = Optimizer::new(config.actor_optimizer)?;
        let critic_opt = Optimizer::new(config.critic_optimizer)?;
        Ok(DdpgAgent {
            config,
            actor_spec,
            actor,
            actor_target,
            critic_head,
            critic,
            critic_target,
            actor_opt,
            critic_opt,
            step_counter: 0,
        })
    }

    fn action_dim(&self) -> usize {
        self.config.action_low.len()
    }

    fn bound(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.config.action_low.iter().zip(&self.config.action_high))
            .map(|(&r, (&lo, &hi))| {
                let center = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                center + half * r.tanh()
            })
            .collect()
    }

    /// The deterministic policy output, bounded into the action box.
    pub fn policy(&self, state: &[f64]) -> Vec<f64> {
        self.bound(&self.actor_spec.forward_values(&self.actor, state))
    }

    fn policy_target(&self, state: &[f64]) -> Vec<f64> {
        self.bound(&self.actor_spec.forward_values(&self.actor_target, state))
    }

    /// Exploration action. Plain mode adds clipped Gaussian noise; the
    /// randomized-critic modes act on the deterministic policy, whose
    /// training noise comes from sampled critic parameters.
    pub fn act<R: Rng>(&self, state: &[f64], rng: &mut R) -> Action {
        let mut a = self.policy(state);
        if self.config.critic_mode == CriticMode::Plain {
            for (v, (&lo, &hi)) in a
                .iter_mut()
                .zip(self.config.action_low.iter().zip(&self.config.action_high))
            {
                let eps: f64 = rng.sample(StandardNormal);
                *v = (*v + self.config.noise_frac * (hi - lo) * eps).clamp(lo, hi);
            }
        }
        Action::Continuous(a)
    }

    fn critic_input(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = state.to_vec();
        x.extend_from_slice(action);
        x
    }

    fn objective_weights(&self) -> ObjectiveWeights {
        match self.config.critic_mode {
            CriticMode::Ge => ObjectiveWeights {
                entropy_on: true,
                likelihood_scale: 1.0,
            },
            CriticMode::Noisy => ObjectiveWeights {
                entropy_on: false,
                likelihood_scale: self.config.critic_sigma * self.config.critic_sigma,
            },
            CriticMode::Plain => ObjectiveWeights {
                entropy_on: false,
                likelihood_scale: 1.0,
            },
        }
    }

    /// One critic step: bootstrap through the target actor and a sampled
    /// target critic, then descend the shared variational objective.
    pub fn critic_update<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Option<f64>> {
        if buffer.len() < batch_size {
            return Ok(None);
        }
        let indices = buffer.sample_indices(batch_size, rng);
        let mut states = Vec::with_capacity(batch_size);
        let mut targets = Vec::with_capacity(batch_size);
        for &i in &indices {
            let t = buffer.get(i);
            let a = match &t.action {
                Action::Continuous(a) => a.clone(),
                Action::Discrete(_) => unreachable!("ddpg acts in continuous spaces"),
            };
            states.push(self.critic_input(&t.state, &a));
            if t.done {
                targets.push(t.reward);
            } else {
                let theta = self.critic_target.sample_parameters(rng)?;
                let a_next = self.policy_target(&t.next_state);
                let x = self.critic_input(&t.next_state, &a_next);
                let draw: f64 = rng.sample(StandardNormal);
                let z = sample_return(&self.critic_head, &theta.theta, &x, 0, draw)?;
                targets.push(t.reward + self.config.gamma * z);
            }
        }
        let actions = vec![0usize; batch_size];
        let eval = variational_objective_sampled(
            &self.critic,
            &self.critic_head,
            &states,
            &actions,
            &EmpiricalTargets::new(targets)?,
            self.objective_weights(),
            1,
            rng,
        )?;

        let trainable_rho = self.critic.mode == Mode::Gaussian;
        match (&mut self.critic.rho, trainable_rho) {
            (crate::variational::Rho::Shared(r), true) => {
                let mut rho_tensor = Tensor::scalar(*r);
                {
                    let mut params: Vec<&mut Tensor> = self.critic.mu.iter_mut().collect();
                    params.push(&mut rho_tensor);
                    let mut grads: Vec<Option<&Tensor>> = eval.grad_mu.iter().map(Some).collect();
                    grads.push(Some(&eval.grad_rho[0]));
                    self.critic_opt.step(&mut params, &grads)?;
                }
                *r = rho_tensor.item();
            }
            (crate::variational::Rho::PerParam(rhos), true) => {
                let mut params: Vec<&mut Tensor> = self.critic.mu.iter_mut().collect();
                params.extend(rhos.iter_mut());
                let mut grads: Vec<Option<&Tensor>> = eval.grad_mu.iter().map(Some).collect();
                grads.extend(eval.grad_rho.iter().map(Some));
                self.critic_opt.step(&mut params, &grads)?;
            }
            (_, false) => {
                let mut params: Vec<&mut Tensor> = self.critic.mu.iter_mut().collect();
                let grads: Vec<Option<&Tensor>> = eval.grad_mu.iter().map(Some).collect();
                self.critic_opt.step(&mut params, &grads)?;
            }
        }
        Ok(Some(eval.loss))
    }

    /// One actor step: ascend the mean critic value of the policy's own
    /// actions, holding one sampled critic realization fixed.
    pub fn actor_update<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Option<f64>> {
        if buffer.len() < batch_size {
            return Ok(None);
        }
        let indices = buffer.sample_indices(batch_size, rng);
        let states: Vec<&[f64]> = indices.iter().map(|&i| buffer.get(i).state.as_slice()).collect();
        let theta_hat = self.critic.sample_parameters(rng)?.theta;

        let n = batch_size;
        let s_dim = self.config.state_dim;
        let a_dim = self.action_dim();
        let mut tape = Tape::new();
        let actor_nodes: Vec<_> = self.actor.iter().map(|p| tape.leaf(p.clone())).collect();
        let critic_nodes: Vec<_> = theta_hat.iter().map(|p| tape.constant(p.clone())).collect();

        let flat: Vec<f64> = states.iter().flat_map(|s| s.iter().copied()).collect();
        let state_node = tape.constant(Tensor::matrix(n, s_dim, flat));
        let raw = self.actor_spec.forward(&mut tape, state_node, &actor_nodes)?;
        let squashed = tape.tanh(raw);
        let half: Vec<f64> = self
            .config
            .action_low
            .iter()
            .zip(&self.config.action_high)
            .map(|(&lo, &hi)| 0.5 * (hi - lo))
            .collect();
        let center: Vec<f64> = self
            .config
            .action_low
            .iter()
            .zip(&self.config.action_high)
            .map(|(&lo, &hi)| 0.5 * (lo + hi))
            .collect();
        let half_node = tape.constant(Tensor::matrix(
            n,
            a_dim,
            half.iter().cycle().take(n * a_dim).copied().collect(),
        ));
        let scaled = tape.mul(squashed, half_node)?;
        let center_node = tape.constant(Tensor::vector(center));
        let bounded = tape.add_bias(scaled, center_node)?;

        let joint = tape.concat(state_node, bounded)?;
        let q = self.critic_head.mlp().forward(&mut tape, joint, &critic_nodes)?;
        let mean_q = tape.mean(q);
        let loss = tape.neg(mean_q);
        tape.backward(loss)?;

        let grads: Vec<Option<Tensor>> = actor_nodes.iter().map(|&nd| tape.grad(nd).cloned()).collect();
        let grad_refs: Vec<Option<&Tensor>> = grads.iter().map(|g| g.as_ref()).collect();
        let mut params: Vec<&mut Tensor> = self.actor.iter_mut().collect();
        self.actor_opt.step(&mut params, &grad_refs)?;
        Ok(Some(tape.value(mean_q).item()))
    }

    /// Critic step, actor step, then target maintenance.
    pub fn train_step<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Option<f64>> {
        let Some(loss) = self.critic_update(buffer, batch_size, rng)? else {
            return Ok(None);
        };
        self.actor_update(buffer, batch_size, rng)?;
        self.step_counter += 1;
        match self.config.polyak {
            Some(tau) => self.polyak_mix(tau),
            None => {
                if self.step_counter % self.config.target_sync_period == 0 {
                    self.sync_targets();
                }
            }
        }
        Ok(Some(loss))
    }

    pub fn sync_targets(&mut self) {
        self.actor_target = self.actor.clone();
        self.critic_target = self.critic.clone();
    }

    /// `target <- (1 - tau) * target + tau * online` on every parameter.
    pub fn polyak_mix(&mut self, tau: f64) {
        debug_assert!((0.0..=1.0).contains(&tau));
        let mix = |dst: &mut Tensor, src: &Tensor| {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d = (1.0 - tau) * *d + tau * s;
            }
        };
        for (t, o) in self.actor_target.iter_mut().zip(&self.actor) {
            mix(t, o);
        }
        for (t, o) in self.critic_target.mu.iter_mut().zip(&self.critic.mu) {
            mix(t, o);
        }
        use crate::variational::Rho;
        match (&mut self.critic_target.rho, &self.critic.rho) {
            (Rho::Shared(t), Rho::Shared(o)) => *t = (1.0 - tau) * *t + tau * o,
            (Rho::PerParam(ts), Rho::PerParam(os)) => {
                for (t, o) in ts.iter_mut().zip(os) {
                    mix(t, o);
                }
            }
            _ => unreachable!("online and target rho layouts always match"),
        }
    }

    /// Mean critic Q-value of the policy's own action at `state`, under the
    /// critic means.
    pub fn q_of_policy(&self, state: &[f64]) -> f64 {
        let a = self.policy(state);
        let x = self.critic_input(state, &a);
        self.critic_head.mlp().forward_values(&self.critic.mu, &x)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn config(mode: CriticMode) -> DdpgConfig {
        DdpgConfig {
            critic_mode: mode,
            state_dim: 2,
            action_low: vec![-2.0],
            action_high: vec![2.0],
            actor_hidden: vec![4],
            critic_hidden: vec![4],
            critic_sigma: 1.0,
            rho: 2.0,
            gamma: 0.9,
            target_sync_period: 50,
            polyak: None,
            actor_optimizer: OptimizerConfig::sgd(0.05),
            critic_optimizer: OptimizerConfig::sgd(0.05),
            noise_frac: 0.1,
        }
    }

    #[test]
    fn actions_always_respect_the_box() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for mode in [CriticMode::Plain, CriticMode::Noisy, CriticMode::Ge] {
            let agent = DdpgAgent::new(config(mode), &mut rng).unwrap();
            for i in 0..100 {
                let s = [(i as f64).sin() * 3.0, (i as f64).cos() * 3.0];
                match agent.act(&s, &mut rng) {
                    Action::Continuous(a) => {
                        assert!(a[0] >= -2.0 && a[0] <= 2.0, "action {a:?} out of box");
                    }
                    other => panic!("unexpected action {other:?}"),
                }
            }
        }
    }

    #[test]
    fn plain_mode_noise_perturbs_the_policy() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let agent = DdpgAgent::new(config(CriticMode::Plain), &mut rng).unwrap();
        let s = [0.3, -0.7];
        let det = agent.policy(&s);
        let noisy = match agent.act(&s, &mut rng) {
            Action::Continuous(a) => a,
            _ => unreachable!(),
        };
        assert_ne!(det, noisy);
    }

    #[test]
    fn randomized_modes_act_deterministically() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let agent = DdpgAgent::new(config(CriticMode::Ge), &mut rng).unwrap();
        let s = [0.3, -0.7];
        let a1 = agent.act(&s, &mut rng);
        let a2 = agent.act(&s, &mut rng);
        assert_eq!(a1, a2);
        assert_eq!(a1, Action::Continuous(agent.policy(&s)));
    }

    fn push_terminal(buffer: &mut ReplayBuffer, reward: f64) {
        buffer.push(Transition {
            state: vec![0.1, -0.2],
            action: Action::Continuous(vec![0.5]),
            reward,
            next_state: vec![0.0, 0.0],
            done: true,
        });
    }

    #[test]
    fn critic_update_pulls_q_toward_terminal_reward() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut agent = DdpgAgent::new(config(CriticMode::Plain), &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(8);
        push_terminal(&mut buffer, 3.0);
        let x = [0.1, -0.2, 0.5];
        let q0 = agent.critic_head.mlp().forward_values(&agent.critic.mu, &x)[0];
        for _ in 0..60 {
            agent.critic_update(&buffer, 1, &mut rng).unwrap();
        }
        let q1 = agent.critic_head.mlp().forward_values(&agent.critic.mu, &x)[0];
        assert!((q1 - 3.0).abs() < (q0 - 3.0).abs(), "Q moved away: {q0} -> {q1}");
        assert!((q1 - 3.0).abs() < 0.2, "Q did not converge: {q1}");
    }

    #[test]
    fn actor_update_increases_policy_value() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut agent = DdpgAgent::new(config(CriticMode::Plain), &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(8);
        push_terminal(&mut buffer, 1.0);
        // make the critic non-trivially prefer some actions first
        for _ in 0..20 {
            agent.critic_update(&buffer, 1, &mut rng).unwrap();
        }
        let before = agent.q_of_policy(&[0.1, -0.2]);
        for _ in 0..30 {
            agent.actor_update(&buffer, 1, &mut rng).unwrap();
        }
        let after = agent.q_of_policy(&[0.1, -0.2]);
        assert!(after >= before - 1e-9, "policy value fell: {before} -> {after}");
    }

    #[test]
    fn polyak_mix_moves_target_by_tau() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut agent = DdpgAgent::new(config(CriticMode::Plain), &mut rng).unwrap();
        let online = agent.actor[0].data()[0];
        // separate the target from the online net
        agent.actor_target[0].data_mut()[0] = online + 1.0;
        agent.polyak_mix(0.25);
        let mixed = agent.actor_target[0].data()[0];
        assert!((mixed - (online + 0.75)).abs() < 1e-12);
    }

    #[test]
    fn insufficient_buffer_is_a_no_op() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut agent = DdpgAgent::new(config(CriticMode::Plain), &mut rng).unwrap();
        let buffer = ReplayBuffer::new(8);
        assert!(matches!(agent.train_step(&buffer, 4, &mut rng), Ok(None)));
    }
}
