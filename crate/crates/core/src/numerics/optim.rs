//! First-order optimizers over lists of parameter tensors.

use super::tensor::Tensor;
use super::{NumericsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerMethod {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub method: OptimizerMethod,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            method: OptimizerMethod::Sgd,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            method: OptimizerMethod::Adam,
            ..OptimizerConfig::sgd(learning_rate)
        }
    }
}

/// Holds per-parameter moment state; one instance per parameter list.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        if config.learning_rate <= 0.0 {
            return Err(NumericsError::NonPositiveLearningRate(config.learning_rate));
        }
        Ok(Optimizer {
            config,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Applies one update in place. `grads[i]` may be `None` only if that
    /// parameter genuinely received no gradient, which is rejected.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&Tensor>]) -> Result<()> {
        assert_eq!(params.len(), grads.len());
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Tensor::zeros_like(p)).collect();
            self.second_moment = params.iter().map(|p| Tensor::zeros_like(p)).collect();
        }
        for (i, g) in grads.iter().enumerate() {
            if g.is_none() {
                return Err(NumericsError::MissingGrad { index: i });
            }
        }
        self.step_count += 1;
        let lr = self.config.learning_rate;
        match self.config.method {
            OptimizerMethod::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    let g = g.unwrap();
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimizerMethod::Adam => {
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.epsilon);
                let t = self.step_count as i32;
                let bc1 = 1.0 - b1.powi(t);
                let bc2 = 1.0 - b2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
                {
                    let g = g.unwrap();
                    for ((pv, gv), (mv, vv)) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
                    {
                        *mv = b1 * *mv + (1.0 - b1) * gv;
                        *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
