//! The variational exploration agent: Thompson-style control by sampling
//! network parameters per step, and training by minimizing the expected
//! bootstrap NLL minus the distribution entropy. Its configuration knobs
//! degenerate into plain DQN, the likelihood-rescaled NoisyNet objective,
//! and categorical distributional learning.

use rand::Rng;

use super::{ReplayBuffer, Result};
use crate::envs::Action;
use crate::numerics::{Optimizer, OptimizerConfig, Tensor};
use crate::returns::{
    self, build_target_samples, ObjectiveWeights, ReturnHead, TransitionView,
};
use crate::variational::{FactorizedGaussian, Mode, Rho};

/// Which objective reduction the agent trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Full objective: Gaussian parameter distribution, entropy bonus on.
    Ge,
    /// Gaussian parameter distribution, entropy off, likelihood scaled by
    /// the return-noise variance.
    NoisyNet,
    /// Dirac parameter distribution, entropy off.
    Dqn,
    /// Categorical head with a Dirac parameter distribution.
    CategoricalDirac,
}

impl TrainMode {
    pub fn parameter_mode(self) -> Mode {
        match self {
            TrainMode::Ge | TrainMode::NoisyNet => Mode::Gaussian,
            TrainMode::Dqn | TrainMode::CategoricalDirac => Mode::Dirac,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeConfig {
    pub mode: TrainMode,
    pub rho: f64,
    pub per_param_rho: bool,
    pub gamma: f64,
    pub target_sync_period: u64,
    pub optimizer: OptimizerConfig,
    /// Reparameterized theta samples per gradient step.
    pub theta_samples: usize,
}

pub struct GeAgent {
    pub head: ReturnHead,
    pub online: FactorizedGaussian,
    pub target: FactorizedGaussian,
    pub config: GeConfig,
    optimizer: Optimizer,
    step_counter: u64,
}

impl GeAgent {
    pub fn new<R: Rng>(head: ReturnHead, config: GeConfig, rng: &mut R) -> Result<Self> {
        let mu = head.mlp().init_params(rng);
        let rho = if config.per_param_rho {
            Rho::PerParam(
                mu.iter()
                    .map(|m| Tensor::new(m.shape().to_vec(), vec![config.rho; m.len()]))
                    .collect(),
            )
        } else {
            Rho::Shared(config.rho)
        };
        let online = FactorizedGaussian {
            mu,
            rho,
            mode: config.mode.parameter_mode(),
        };
        let target = online.clone();
        let optimizer = Optimizer::new(config.optimizer)?;
        Ok(GeAgent {
            head,
            online,
            target,
            config,
            optimizer,
            step_counter: 0,
        })
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    fn objective_weights(&self) -> ObjectiveWeights {
        match self.config.mode {
            TrainMode::Ge => ObjectiveWeights {
                entropy_on: true,
                likelihood_scale: 1.0,
            },
            TrainMode::NoisyNet => {
                let sigma = match &self.head {
                    ReturnHead::Gaussian(h) => h.sigma,
                    ReturnHead::Categorical(_) => 1.0,
                };
                ObjectiveWeights {
                    entropy_on: false,
                    likelihood_scale: sigma * sigma,
                }
            }
            TrainMode::Dqn | TrainMode::CategoricalDirac => ObjectiveWeights {
                entropy_on: false,
                likelihood_scale: 1.0,
            },
        }
    }

    /// Samples a fresh theta from the online distribution and acts greedily
    /// under it. In dirac mode this is greedy on the means every call.
    pub fn act_thompson<R: Rng>(&self, state: &[f64], rng: &mut R) -> Result<usize> {
        let sample = self.online.sample_parameters(rng)?;
        Ok(returns::greedy_action(&self.head, &sample.theta, state)?)
    }

    /// Epsilon-greedy on the mean network.
    pub fn act_epsilon_greedy<R: Rng>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        debug_assert!((0.0..=1.0).contains(&epsilon));
        if rng.gen::<f64>() < epsilon {
            Ok(rng.gen_range(0..self.head.n_actions()))
        } else {
            self.greedy_on_mean(state)
        }
    }

    /// Greedy action under the distribution means (the learned policy).
    pub fn greedy_on_mean(&self, state: &[f64]) -> Result<usize> {
        Ok(returns::greedy_action(&self.head, &self.online.mu, state)?)
    }

    /// One training step: bootstrap targets under the target distribution,
    /// one optimizer step on the variational parameters, periodic target
    /// sync. Returns `None` when the buffer cannot fill a batch yet.
    pub fn train_step<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Option<f64>> {
        if buffer.len() < batch_size {
            return Ok(None);
        }
        let indices = buffer.sample_indices(batch_size, rng);
        let views: Vec<TransitionView> = indices
            .iter()
            .map(|&i| {
                let t = buffer.get(i);
                TransitionView {
                    reward: t.reward,
                    next_state: &t.next_state,
                    done: t.done,
                }
            })
            .collect();
        let targets =
            build_target_samples(&views, &self.target, &self.head, self.config.gamma, rng)?;

        let states: Vec<Vec<f64>> = indices.iter().map(|&i| buffer.get(i).state.clone()).collect();
        let actions: Vec<usize> = indices
            .iter()
            .map(|&i| match &buffer.get(i).action {
                Action::Discrete(a) => *a,
                Action::Continuous(_) => unreachable!("GE agent acts in discrete spaces"),
            })
            .collect();

        let eval = returns::variational_objective_sampled(
            &self.online,
            &self.head,
            &states,
            &actions,
            &targets,
            self.objective_weights(),
            self.config.theta_samples,
            rng,
        )?;
        self.apply_gradients(&eval.grad_mu, &eval.grad_rho)?;

        self.step_counter += 1;
        if self.step_counter % self.config.target_sync_period == 0 {
            self.sync_target();
        }
        Ok(Some(eval.loss))
    }

    fn apply_gradients(&mut self, grad_mu: &[Tensor], grad_rho: &[Tensor]) -> Result<()> {
        let trainable_rho = self.online.mode == Mode::Gaussian;
        match (&mut self.online.rho, trainable_rho) {
            (Rho::Shared(r), true) => {
                let mut rho_tensor = Tensor::scalar(*r);
                {
                    let mut params: Vec<&mut Tensor> = self.online.mu.iter_mut().collect();
                    params.push(&mut rho_tensor);
                    let mut grads: Vec<Option<&Tensor>> = grad_mu.iter().map(Some).collect();
                    grads.push(Some(&grad_rho[0]));
                    self.optimizer.step(&mut params, &grads)?;
                }
                *r = rho_tensor.item();
            }
            (Rho::PerParam(rhos), true) => {
                let mut params: Vec<&mut Tensor> = self.online.mu.iter_mut().collect();
                params.extend(rhos.iter_mut());
                let mut grads: Vec<Option<&Tensor>> = grad_mu.iter().map(Some).collect();
                grads.extend(grad_rho.iter().map(Some));
                self.optimizer.step(&mut params, &grads)?;
            }
            (_, false) => {
                let mut params: Vec<&mut Tensor> = self.online.mu.iter_mut().collect();
                let grads: Vec<Option<&Tensor>> = grad_mu.iter().map(Some).collect();
                self.optimizer.step(&mut params, &grads)?;
            }
        }
        Ok(())
    }

    /// Hard copy of the online distribution into the target slot.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Transition;
    use crate::numerics::{Activation, MlpSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn toy_head(sigma: f64) -> ReturnHead {
        let mlp = MlpSpec::new(vec![1, 3, 2], Activation::Tanh).unwrap();
        ReturnHead::gaussian(mlp, sigma)
    }

    fn config(mode: TrainMode) -> GeConfig {
        GeConfig {
            mode,
            rho: -1.0,
            per_param_rho: false,
            gamma: 0.9,
            target_sync_period: 100,
            optimizer: OptimizerConfig::sgd(0.05),
            theta_samples: 1,
        }
    }

    #[test]
    fn dirac_thompson_equals_greedy_on_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let agent = GeAgent::new(toy_head(1.0), config(TrainMode::Dqn), &mut rng).unwrap();
        for i in 0..20 {
            let s = [i as f64 / 10.0 - 1.0];
            let a = agent.act_thompson(&s, &mut rng).unwrap();
            assert_eq!(a, agent.greedy_on_mean(&s).unwrap());
        }
    }

    #[test]
    fn tight_distribution_collapses_to_greedy() {
        // rho = +40 drives sigma to ~4e-18, far below any Q gap
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut cfg = config(TrainMode::Ge);
        cfg.rho = 40.0;
        let agent = GeAgent::new(toy_head(1.0), cfg, &mut rng).unwrap();
        let s = [0.4];
        let greedy = agent.greedy_on_mean(&s).unwrap();
        for _ in 0..200 {
            assert_eq!(agent.act_thompson(&s, &mut rng).unwrap(), greedy);
        }
    }

    #[test]
    fn epsilon_zero_is_always_greedy() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let agent = GeAgent::new(toy_head(1.0), config(TrainMode::Dqn), &mut rng).unwrap();
        let s = [0.2];
        let greedy = agent.greedy_on_mean(&s).unwrap();
        for _ in 0..100 {
            assert_eq!(agent.act_epsilon_greedy(&s, 0.0, &mut rng).unwrap(), greedy);
        }
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let agent = GeAgent::new(toy_head(1.0), config(TrainMode::Dqn), &mut rng).unwrap();
        let n = 10_000;
        let mut count = [0usize; 2];
        for _ in 0..n {
            count[agent.act_epsilon_greedy(&[0.0], 1.0, &mut rng).unwrap()] += 1;
        }
        // 3 sigma for a fair coin over 10^4 draws
        let tol = 3.0 * 0.5 * (n as f64).sqrt();
        assert!((count[0] as f64 - 5000.0).abs() < tol, "{count:?}");
    }

    #[test]
    fn epsilon_mass_splits_over_non_greedy_arms() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let agent = GeAgent::new(toy_head(1.0), config(TrainMode::Dqn), &mut rng).unwrap();
        let s = [0.3];
        let greedy = agent.greedy_on_mean(&s).unwrap();
        let other = 1 - greedy;
        let n = 10_000;
        let mut hits = 0usize;
        for _ in 0..n {
            if agent.act_epsilon_greedy(&s, 0.1, &mut rng).unwrap() == other {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.05).abs() < 0.01, "non-greedy frequency {freq}");
    }

    #[test]
    fn insufficient_buffer_is_a_distinct_no_op() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut agent = GeAgent::new(toy_head(1.0), config(TrainMode::Dqn), &mut rng).unwrap();
        let buffer = ReplayBuffer::new(10);
        assert!(matches!(agent.train_step(&buffer, 4, &mut rng), Ok(None)));
        assert_eq!(agent.step_counter(), 0);
    }

    fn terminal_transition() -> Transition {
        Transition {
            state: vec![0.0],
            action: Action::Discrete(0),
            reward: 1.0,
            next_state: vec![0.0],
            done: true,
        }
    }

    #[test]
    fn sync_makes_target_an_independent_copy() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut agent = GeAgent::new(toy_head(1.0), config(TrainMode::Dqn), &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(10);
        buffer.push(terminal_transition());
        agent.train_step(&buffer, 1, &mut rng).unwrap();
        agent.sync_target();
        for (a, b) in agent.online.mu.iter().zip(&agent.target.mu) {
            assert_eq!(a, b);
        }
        let frozen = agent.target.mu.clone();
        agent.train_step(&buffer, 1, &mut rng).unwrap();
        // target untouched by the online update
        for (a, b) in frozen.iter().zip(&agent.target.mu) {
            assert_eq!(a, b);
        }
        // sync is idempotent
        agent.sync_target();
        let once = agent.target.mu.clone();
        agent.sync_target();
        assert_eq!(once, agent.target.mu);
    }

    #[test]
    fn tau_one_syncs_every_step() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut cfg = config(TrainMode::Dqn);
        cfg.target_sync_period = 1;
        let mut agent = GeAgent::new(toy_head(1.0), cfg, &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(10);
        buffer.push(terminal_transition());
        agent.train_step(&buffer, 1, &mut rng).unwrap();
        for (a, b) in agent.online.mu.iter().zip(&agent.target.mu) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn terminal_dqn_loss_matches_hand_value_and_pulls_q_up() {
        // Single terminal tuple, r = 1, sigma = 1: loss = (Q - 1)^2 / 2.
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut cfg = config(TrainMode::Dqn);
        cfg.optimizer = OptimizerConfig::sgd(0.1);
        let mut agent = GeAgent::new(toy_head(1.0), cfg, &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(10);
        buffer.push(terminal_transition());

        let q_before = crate::returns::expected_value(&agent.head, &agent.online.mu, &[0.0]).unwrap()[0];
        let loss = agent.train_step(&buffer, 1, &mut rng).unwrap().unwrap();
        let expected = (q_before - 1.0).powi(2) / 2.0;
        assert!((loss - expected).abs() < 1e-12, "loss {loss} vs {expected}");
        let q_after = crate::returns::expected_value(&agent.head, &agent.online.mu, &[0.0]).unwrap()[0];
        assert!(q_after > q_before, "gradient failed to pull Q toward the target");
    }

    #[test]
    fn ge_loss_is_nll_expectation_minus_entropy() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut agent = GeAgent::new(toy_head(1.0), config(TrainMode::Ge), &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(10);
        buffer.push(terminal_transition());
        let entropy = agent.online.entropy().unwrap();
        let loss = agent.train_step(&buffer, 1, &mut rng).unwrap().unwrap();
        // The NLL term is nonnegative for the Gaussian head, so the loss is
        // bounded below by -H(q).
        assert!(loss >= -entropy - 1e-12);
    }
}
