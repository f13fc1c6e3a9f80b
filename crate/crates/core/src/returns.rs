//! Parametric return distributions over actions: Gaussian and categorical
//! heads, greedy selection via the head's expectation, bootstrap target
//! construction, and the variational training objectives including their
//! degenerate (Dirac / likelihood-rescaled) modes.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numerics::{MlpSpec, NodeId, NumericsError, Tape, Tensor};
use crate::variational::{FactorizedGaussian, Mode, VariationalError};

#[derive(Debug, Error)]
pub enum ReturnsError {
    #[error("state dimension {got} does not match network input {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("discount factor must satisfy 0 < gamma <= 1, got {0}")]
    InvalidGamma(f64),
    #[error("empirical target set must be nonempty")]
    EmptyTargets,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("entropy term requires gaussian mode")]
    EntropyWithDirac,
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, ReturnsError>;

/// Gaussian return head: an MLP mapping state to one Q-value per action,
/// with a fixed return-noise scale `sigma`.
#[derive(Debug, Clone)]
pub struct GaussianHead {
    pub mlp: MlpSpec,
    pub sigma: f64,
}

/// Categorical return head: a fixed atom grid and an MLP emitting
/// `n_actions * atoms.len()` logits per state.
#[derive(Debug, Clone)]
pub struct CategoricalHead {
    pub atoms: Vec<f64>,
    pub mlp: MlpSpec,
    pub n_actions: usize,
}

#[derive(Debug, Clone)]
pub enum ReturnHead {
    Gaussian(GaussianHead),
    Categorical(CategoricalHead),
}

impl ReturnHead {
    pub fn gaussian(mlp: MlpSpec, sigma: f64) -> Self {
        assert!(sigma > 0.0, "return-noise sigma must be positive");
        ReturnHead::Gaussian(GaussianHead { mlp, sigma })
    }

    pub fn categorical(mlp: MlpSpec, atoms: Vec<f64>, n_actions: usize) -> Self {
        assert!(atoms.windows(2).all(|w| w[0] < w[1]), "atoms must be strictly increasing");
        assert_eq!(mlp.output_dim(), n_actions * atoms.len());
        ReturnHead::Categorical(CategoricalHead { atoms, mlp, n_actions })
    }

    pub fn mlp(&self) -> &MlpSpec {
        match self {
            ReturnHead::Gaussian(h) => &h.mlp,
            ReturnHead::Categorical(h) => &h.mlp,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            ReturnHead::Gaussian(h) => h.mlp.output_dim(),
            ReturnHead::Categorical(h) => h.n_actions,
        }
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        let expected = self.mlp().input_dim();
        if state.len() != expected {
            return Err(ReturnsError::DimMismatch {
                expected,
                got: state.len(),
            });
        }
        Ok(())
    }
}

/// One real return sample per minibatch tuple.
#[derive(Debug, Clone)]
pub struct EmpiricalTargets {
    pub samples: Vec<f64>,
}

impl EmpiricalTargets {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(ReturnsError::EmptyTargets);
        }
        debug_assert!(samples.iter().all(|x| x.is_finite()));
        Ok(EmpiricalTargets { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `E[Z_theta(s, .)]`: the Q-vector over actions under parameters `theta`.
pub fn expected_value(head: &ReturnHead, theta: &[Tensor], state: &[f64]) -> Result<Vec<f64>> {
    head.check_state(state)?;
    match head {
        ReturnHead::Gaussian(h) => Ok(h.mlp.forward_values(theta, state)),
        ReturnHead::Categorical(h) => {
            let logits = h.mlp.forward_values(theta, state);
            let k = h.atoms.len();
            Ok((0..h.n_actions)
                .map(|a| {
                    let probs = softmax(&logits[a * k..(a + 1) * k]);
                    probs.iter().zip(&h.atoms).map(|(p, z)| p * z).sum()
                })
                .collect())
        }
    }
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_action(head: &ReturnHead, theta: &[Tensor], state: &[f64]) -> Result<usize> {
    Ok(argmax(&expected_value(head, theta, state)?))
}

/// One draw from `Z_theta(s, a)` given a pre-drawn standard normal (Gaussian
/// head) or a pre-drawn uniform in `[0, 1)` (categorical head).
pub fn sample_return(
    head: &ReturnHead,
    theta: &[Tensor],
    state: &[f64],
    action: usize,
    draw: f64,
) -> Result<f64> {
    head.check_state(state)?;
    match head {
        ReturnHead::Gaussian(h) => {
            let q = h.mlp.forward_values(theta, state)[action];
            Ok(q + h.sigma * draw)
        }
        ReturnHead::Categorical(h) => {
            let logits = h.mlp.forward_values(theta, state);
            let k = h.atoms.len();
            let probs = softmax(&logits[action * k..(action + 1) * k]);
            let mut acc = 0.0;
            for (p, z) in probs.iter().zip(&h.atoms) {
                acc += p;
                if draw < acc {
                    return Ok(*z);
                }
            }
            Ok(*h.atoms.last().unwrap())
        }
    }
}

/// Minimal view of a replay tuple needed for target construction.
#[derive(Debug, Clone, Copy)]
pub struct TransitionView<'a> {
    pub reward: f64,
    pub next_state: &'a [f64],
    pub done: bool,
}

/// Bootstrap targets `x_j = r_j + gamma * sample(Z_{theta_j}(s_j', a'))`,
/// one independently drawn target-parameter sample per tuple, greedy `a'`
/// under that sample. Terminal tuples contribute `x_j = r_j`.
pub fn build_target_samples<R: Rng>(
    batch: &[TransitionView<'_>],
    target_q: &FactorizedGaussian,
    head: &ReturnHead,
    gamma: f64,
    rng: &mut R,
) -> Result<EmpiricalTargets> {
    if gamma <= 0.0 || gamma > 1.0 {
        return Err(ReturnsError::InvalidGamma(gamma));
    }
    if batch.is_empty() {
        return Err(ReturnsError::EmptyBatch);
    }
    let mut samples = Vec::with_capacity(batch.len());
    for view in batch {
        if view.done {
            samples.push(view.reward);
            continue;
        }
        let theta = target_q.sample_parameters(rng)?;
        let a = greedy_action(head, &theta.theta, view.next_state)?;
        let draw = match head {
            ReturnHead::Gaussian(_) => rng.sample(StandardNormal),
            ReturnHead::Categorical(_) => rng.gen::<f64>(),
        };
        let z = sample_return(head, &theta.theta, view.next_state, a, draw)?;
        samples.push(view.reward + gamma * z);
    }
    EmpiricalTargets::new(samples)
}

/// Splits a target value onto the two adjacent atoms by linear
/// interpolation; values outside the support clip to the boundary atom.
fn project_onto_atoms(atoms: &[f64], x: f64) -> Vec<(usize, f64)> {
    let k = atoms.len();
    if x <= atoms[0] {
        return vec![(0, 1.0)];
    }
    if x >= atoms[k - 1] {
        return vec![(k - 1, 1.0)];
    }
    let j = atoms.partition_point(|&z| z <= x) - 1;
    let (lo, hi) = (atoms[j], atoms[j + 1]);
    if x == lo {
        return vec![(j, 1.0)];
    }
    let frac = (x - lo) / (hi - lo);
    vec![(j, 1.0 - frac), (j + 1, frac)]
}

/// Average negative log-likelihood of the targets at a single `(s, a)`,
/// matching the reduced Gaussian form with constants dropped.
pub fn nll_empirical(
    head: &ReturnHead,
    theta: &[Tensor],
    state: &[f64],
    action: usize,
    targets: &EmpiricalTargets,
) -> Result<f64> {
    head.check_state(state)?;
    let n = targets.len() as f64;
    match head {
        ReturnHead::Gaussian(h) => {
            let q = h.mlp.forward_values(theta, state)[action];
            let total: f64 = targets
                .samples
                .iter()
                .map(|&x| (q - x).powi(2) / (2.0 * h.sigma * h.sigma))
                .sum();
            Ok(total / n)
        }
        ReturnHead::Categorical(h) => {
            let logits = h.mlp.forward_values(theta, state);
            let k = h.atoms.len();
            let probs = softmax(&logits[action * k..(action + 1) * k]);
            let total: f64 = targets
                .samples
                .iter()
                .map(|&x| {
                    let ll: f64 = project_onto_atoms(&h.atoms, x)
                        .iter()
                        .map(|&(j, m)| m * probs[j].ln())
                        .sum();
                    -ll
                })
                .sum();
            Ok(total / n)
        }
    }
}

/// Knobs selecting between the full variational objective and its
/// degenerate reductions: `likelihood_scale` multiplies the expected NLL
/// term, `entropy_on` subtracts the distribution entropy.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveWeights {
    pub entropy_on: bool,
    pub likelihood_scale: f64,
}

/// Loss value plus gradients with respect to the distribution parameters,
/// laid out to match `FactorizedGaussian::mu` and its rho storage.
#[derive(Debug)]
pub struct ObjectiveEval {
    pub loss: f64,
    pub grad_mu: Vec<Tensor>,
    pub grad_rho: Vec<Tensor>,
}

/// Per-tuple NLL summed over the batch, as a tape node. `q_nodes` supplies
/// the theta nodes to forward through.
fn batch_nll_on_tape(
    tape: &mut Tape,
    head: &ReturnHead,
    theta_nodes: &[NodeId],
    states: &[Vec<f64>],
    actions: &[usize],
    targets: &EmpiricalTargets,
) -> Result<NodeId> {
    let n = states.len();
    assert_eq!(actions.len(), n);
    assert_eq!(targets.len(), n);
    let d = head.mlp().input_dim();
    for s in states {
        head.check_state(s)?;
    }
    let flat: Vec<f64> = states.iter().flat_map(|s| s.iter().copied()).collect();
    let state_node = tape.constant(Tensor::matrix(n, d, flat));
    match head {
        ReturnHead::Gaussian(h) => {
            let q = h.mlp.forward(tape, state_node, theta_nodes)?;
            let a_count = h.mlp.output_dim();
            let mut mask = vec![0.0; n * a_count];
            for (i, &a) in actions.iter().enumerate() {
                mask[i * a_count + a] = 1.0;
            }
            let mask_node = tape.constant(Tensor::matrix(n, a_count, mask));
            let masked = tape.mul(q, mask_node)?;
            let q_sel = tape.row_sum(masked)?;
            let target_node = tape.constant(Tensor::vector(targets.samples.clone()));
            let resid = tape.sub(q_sel, target_node)?;
            let sq = tape.square(resid);
            // Raw sum of squared residuals; the caller folds in 1/(2 sigma^2).
            Ok(tape.sum(sq))
        }
        ReturnHead::Categorical(h) => {
            let logits = h.mlp.forward(tape, state_node, theta_nodes)?;
            let k = h.atoms.len();
            let rows = tape.reshape(logits, vec![n * h.n_actions, k])?;
            let log_probs = tape.log_softmax(rows)?;
            let mut mass = vec![0.0; n * h.n_actions * k];
            for i in 0..n {
                let row = i * h.n_actions + actions[i];
                for (j, m) in project_onto_atoms(&h.atoms, targets.samples[i]) {
                    mass[row * k + j] += m;
                }
            }
            let mass_node = tape.constant(Tensor::matrix(n * h.n_actions, k, mass));
            let weighted = tape.mul(log_probs, mass_node)?;
            let total = tape.sum(weighted);
            Ok(tape.neg(total))
        }
    }
}

/// The training objective: `scale * E_theta[sum_i NLL_i] - entropy`, where
/// the expectation averages over the provided noise draws (one reparameterized
/// theta sample per draw). Returns gradients for mu and rho.
pub fn variational_objective(
    q: &FactorizedGaussian,
    head: &ReturnHead,
    states: &[Vec<f64>],
    actions: &[usize],
    targets: &EmpiricalTargets,
    weights: ObjectiveWeights,
    noise_draws: &[Vec<Tensor>],
) -> Result<ObjectiveEval> {
    if weights.entropy_on && q.mode == Mode::Dirac {
        return Err(ReturnsError::EntropyWithDirac);
    }
    assert!(!noise_draws.is_empty(), "need at least one theta sample");
    let n_samples = noise_draws.len() as f64;

    let mut loss = 0.0;
    let mut grad_mu: Vec<Tensor> = q.mu.iter().map(Tensor::zeros_like).collect();
    let mut grad_rho = rho_zeros(q);

    for noise in noise_draws {
        let mut tape = Tape::new();
        let q_nodes = q.instantiate_on_tape(&mut tape, noise)?;
        let nll = batch_nll_on_tape(&mut tape, head, &q_nodes.theta_nodes, states, actions, targets)?;
        // Apply the Gaussian 1/(2 sigma^2) factor and the likelihood scale
        // together so the tape stays identical across modes.
        let factor = match head {
            ReturnHead::Gaussian(h) => {
                weights.likelihood_scale / (2.0 * h.sigma * h.sigma) / n_samples
            }
            ReturnHead::Categorical(_) => weights.likelihood_scale / n_samples,
        };
        let factor_node = tape.constant(Tensor::scalar(factor));
        let scaled = tape.scale(nll, factor_node)?;
        tape.backward(scaled)?;
        loss += tape.value(scaled).item();
        for (acc, node) in grad_mu.iter_mut().zip(&q_nodes.mu_nodes) {
            if let Some(g) = tape.grad(*node) {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
        for (acc, node) in grad_rho.iter_mut().zip(&q_nodes.rho_nodes) {
            if let Some(g) = tape.grad(*node) {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }

    if weights.entropy_on {
        let mut tape = Tape::new();
        let zero_noise: Vec<Tensor> = q.mu.iter().map(Tensor::zeros_like).collect();
        let q_nodes = q.instantiate_on_tape(&mut tape, &zero_noise)?;
        let h = q.entropy_on_tape(&mut tape, &q_nodes)?;
        let out = tape.neg(h);
        tape.backward(out)?;
        loss += tape.value(out).item();
        for (acc, node) in grad_mu.iter_mut().zip(&q_nodes.mu_nodes) {
            if let Some(g) = tape.grad(*node) {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
        for (acc, node) in grad_rho.iter_mut().zip(&q_nodes.rho_nodes) {
            if let Some(g) = tape.grad(*node) {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }

    Ok(ObjectiveEval {
        loss,
        grad_mu,
        grad_rho,
    })
}

fn rho_zeros(q: &FactorizedGaussian) -> Vec<Tensor> {
    use crate::variational::Rho;
    match (&q.mode, &q.rho) {
        (Mode::Dirac, _) => Vec::new(),
        (Mode::Gaussian, Rho::Shared(_)) => vec![Tensor::scalar(0.0)],
        (Mode::Gaussian, Rho::PerParam(rhos)) => rhos.iter().map(Tensor::zeros_like).collect(),
    }
}

/// Draws `n_samples` noise sets from `rng` and evaluates the objective.
pub fn variational_objective_sampled<R: Rng>(
    q: &FactorizedGaussian,
    head: &ReturnHead,
    states: &[Vec<f64>],
    actions: &[usize],
    targets: &EmpiricalTargets,
    weights: ObjectiveWeights,
    n_samples: usize,
    rng: &mut R,
) -> Result<ObjectiveEval> {
    let draws: Vec<Vec<Tensor>> = (0..n_samples.max(1))
        .map(|_| {
            q.mu.iter()
                .map(|m| {
                    let eps: Vec<f64> = (0..m.len()).map(|_| rng.sample(StandardNormal)).collect();
                    Tensor::new(m.shape().to_vec(), eps)
                })
                .collect()
        })
        .collect();
    variational_objective(q, head, states, actions, targets, weights, &draws)
}
