//! Factorized Gaussian distribution over all network parameters:
//! reparameterized sampling, closed-form entropy, the softplus
//! sigma-from-rho parameterization, and a degenerate Dirac mode.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numerics::{NodeId, NumericsError, Tape, Tensor};

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error("rho must be finite, got {0}")]
    NonFiniteRho(f64),
    #[error("entropy is undefined in dirac mode; disable the entropy term instead")]
    DiracEntropy,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, VariationalError>;

/// `sigma = ln(1 + e^(-rho))`: strictly positive and strictly decreasing
/// in rho, computed overflow-safely.
pub fn sigma_from_rho(rho: f64) -> Result<f64> {
    if !rho.is_finite() {
        return Err(VariationalError::NonFiniteRho(rho));
    }
    Ok(crate::numerics::softplus_scalar(-rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Gaussian,
    Dirac,
}

/// The pre-sigma parameter: one shared scalar for every network parameter
/// (the default) or a tensor per parameter tensor.
#[derive(Debug, Clone)]
pub enum Rho {
    Shared(f64),
    PerParam(Vec<Tensor>),
}

/// Independent Gaussian over each network parameter, with means `mu` and
/// standard deviations derived from `rho`. In dirac mode `rho` is ignored
/// and the distribution collapses onto `mu`.
#[derive(Debug, Clone)]
pub struct FactorizedGaussian {
    pub mu: Vec<Tensor>,
    pub rho: Rho,
    pub mode: Mode,
}

/// A realization of the network parameters together with the standard
/// normal draws that produced it, retained so objectives can be
/// re-evaluated under identical noise.
#[derive(Debug, Clone)]
pub struct ParameterSample {
    pub theta: Vec<Tensor>,
    pub noise: Vec<Tensor>,
}

/// Handles for one instantiation of the distribution on a tape: mu leaves,
/// rho leaves, and the reparameterized theta nodes downstream code forwards
/// through.
pub struct QOnTape {
    pub mu_nodes: Vec<NodeId>,
    pub rho_nodes: Vec<NodeId>,
    pub theta_nodes: Vec<NodeId>,
}

impl FactorizedGaussian {
    pub fn new_shared(mu: Vec<Tensor>, rho: f64, mode: Mode) -> Self {
        FactorizedGaussian {
            mu,
            rho: Rho::Shared(rho),
            mode,
        }
    }

    pub fn dirac(mu: Vec<Tensor>) -> Self {
        FactorizedGaussian {
            mu,
            rho: Rho::Shared(0.0),
            mode: Mode::Dirac,
        }
    }

    /// Total number of scalar parameters covered by the distribution.
    pub fn num_params(&self) -> usize {
        self.mu.iter().map(Tensor::len).sum()
    }

    fn sigma_for(&self, tensor_index: usize) -> Result<Vec<f64>> {
        match &self.rho {
            Rho::Shared(r) => {
                let s = sigma_from_rho(*r)?;
                Ok(vec![s; self.mu[tensor_index].len()])
            }
            Rho::PerParam(rhos) => rhos[tensor_index]
                .data()
                .iter()
                .map(|&r| sigma_from_rho(r))
                .collect(),
        }
    }

    /// Draws `theta = mu + sigma(rho) * eps` with `eps ~ N(0, 1)`; in dirac
    /// mode returns `mu` with zero noise.
    pub fn sample_parameters<R: Rng>(&self, rng: &mut R) -> Result<ParameterSample> {
        let mut theta = Vec::with_capacity(self.mu.len());
        let mut noise = Vec::with_capacity(self.mu.len());
        for (i, mu) in self.mu.iter().enumerate() {
            match self.mode {
                Mode::Dirac => {
                    theta.push(mu.clone());
                    noise.push(Tensor::zeros_like(mu));
                }
                Mode::Gaussian => {
                    let sigma = self.sigma_for(i)?;
                    let eps: Vec<f64> =
                        (0..mu.len()).map(|_| rng.sample(StandardNormal)).collect();
                    let data = mu
                        .data()
                        .iter()
                        .zip(eps.iter().zip(&sigma))
                        .map(|(&m, (&e, &s))| m + s * e)
                        .collect();
                    theta.push(Tensor::new(mu.shape().to_vec(), data));
                    noise.push(Tensor::new(mu.shape().to_vec(), eps));
                }
            }
        }
        Ok(ParameterSample { theta, noise })
    }

    /// Rebuilds `theta` from stored noise without touching the rng.
    pub fn theta_from_noise(&self, noise: &[Tensor]) -> Result<Vec<Tensor>> {
        let mut theta = Vec::with_capacity(self.mu.len());
        for (i, mu) in self.mu.iter().enumerate() {
            match self.mode {
                Mode::Dirac => theta.push(mu.clone()),
                Mode::Gaussian => {
                    let sigma = self.sigma_for(i)?;
                    let data = mu
                        .data()
                        .iter()
                        .zip(noise[i].data().iter().zip(&sigma))
                        .map(|(&m, (&e, &s))| m + s * e)
                        .collect();
                    theta.push(Tensor::new(mu.shape().to_vec(), data));
                }
            }
        }
        Ok(theta)
    }

    /// Differential entropy `sum 0.5 ln(2 pi e sigma^2)`.
    pub fn entropy(&self) -> Result<f64> {
        if self.mode == Mode::Dirac {
            return Err(VariationalError::DiracEntropy);
        }
        let half_log_2pie = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        let mut h = 0.0;
        for i in 0..self.mu.len() {
            for s in self.sigma_for(i)? {
                h += half_log_2pie + s.ln();
            }
        }
        Ok(h)
    }

    /// Puts mu and rho on the tape as leaves and builds the reparameterized
    /// theta nodes from the given noise tensors (one per parameter tensor).
    pub fn instantiate_on_tape(&self, tape: &mut Tape, noise: &[Tensor]) -> Result<QOnTape> {
        let mu_nodes: Vec<NodeId> = self.mu.iter().map(|m| tape.leaf(m.clone())).collect();
        match self.mode {
            Mode::Dirac => Ok(QOnTape {
                theta_nodes: mu_nodes.clone(),
                mu_nodes,
                rho_nodes: Vec::new(),
            }),
            Mode::Gaussian => {
                assert_eq!(noise.len(), self.mu.len());
                let mut theta_nodes = Vec::with_capacity(self.mu.len());
                let rho_nodes = match &self.rho {
                    Rho::Shared(r) => {
                        let rho = tape.leaf(Tensor::scalar(*r));
                        let neg_rho = tape.neg(rho);
                        let sigma = tape.softplus(neg_rho)?;
                        for (mu, eps) in mu_nodes.iter().zip(noise) {
                            let eps = tape.constant(eps.clone());
                            let scaled = tape.scale(eps, sigma)?;
                            theta_nodes.push(tape.add(*mu, scaled)?);
                        }
                        vec![rho]
                    }
                    Rho::PerParam(rhos) => {
                        let mut nodes = Vec::with_capacity(rhos.len());
                        for ((mu, rho), eps) in mu_nodes.iter().zip(rhos).zip(noise) {
                            let rho_node = tape.leaf(rho.clone());
                            let neg_rho = tape.neg(rho_node);
                            let sigma = tape.softplus(neg_rho)?;
                            let eps = tape.constant(eps.clone());
                            let scaled = tape.mul(sigma, eps)?;
                            theta_nodes.push(tape.add(*mu, scaled)?);
                            nodes.push(rho_node);
                        }
                        nodes
                    }
                };
                Ok(QOnTape {
                    mu_nodes,
                    rho_nodes,
                    theta_nodes,
                })
            }
        }
    }

    /// Entropy as a tape node differentiable in the rho leaves of `q_nodes`.
    pub fn entropy_on_tape(&self, tape: &mut Tape, q_nodes: &QOnTape) -> Result<NodeId> {
        if self.mode == Mode::Dirac {
            return Err(VariationalError::DiracEntropy);
        }
        let total = self.num_params() as f64;
        let half_log_2pie = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        let constant = tape.constant(Tensor::scalar(total * half_log_2pie));
        match &self.rho {
            Rho::Shared(_) => {
                let rho = q_nodes.rho_nodes[0];
                let neg_rho = tape.neg(rho);
                let sigma = tape.softplus(neg_rho)?;
                let log_sigma = tape.log(sigma)?;
                let count = tape.constant(Tensor::scalar(total));
                let scaled = tape.scale(count, log_sigma)?;
                Ok(tape.add(scaled, constant)?)
            }
            Rho::PerParam(_) => {
                let mut acc = constant;
                for &rho in &q_nodes.rho_nodes {
                    let neg_rho = tape.neg(rho);
                    let sigma = tape.softplus(neg_rho)?;
                    let log_sigma = tape.log(sigma)?;
                    let s = tape.sum(log_sigma);
                    acc = tape.add(acc, s)?;
                }
                Ok(acc)
            }
        }
    }
}
