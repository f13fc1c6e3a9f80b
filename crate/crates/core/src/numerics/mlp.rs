//! Fully connected networks built on the tape primitives.

use rand::Rng;

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use super::{NumericsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

/// Layer widths (input, hidden..., output) and the hidden activation.
/// The output layer is always linear.
#[derive(Debug, Clone)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Activation) -> Result<Self> {
        if widths.len() < 3 {
            return Err(NumericsError::InvalidSpec {
                reason: format!(
                    "need input, at least one hidden, and output width; got {:?}",
                    widths
                ),
            });
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(NumericsError::InvalidSpec {
                reason: format!("all widths must be >= 1; got {:?}", widths),
            });
        }
        Ok(MlpSpec { widths, hidden })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Fresh parameters, each entry uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<Tensor> {
        let mut params = Vec::with_capacity(2 * self.num_layers());
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.push(Tensor::uniform(vec![fan_in, fan_out], -bound, bound, rng));
            params.push(Tensor::uniform(vec![fan_out], -bound, bound, rng));
        }
        params
    }

    /// Forward pass on the tape. `params` holds alternating weight/bias nodes
    /// in layer order; `input` is a `[batch, input_dim]` node.
    pub fn forward(&self, tape: &mut Tape, input: NodeId, params: &[NodeId]) -> Result<NodeId> {
        assert_eq!(params.len(), 2 * self.num_layers());
        let mut x = input;
        for l in 0..self.num_layers() {
            let z = tape.matmul(x, params[2 * l])?;
            x = tape.add_bias(z, params[2 * l + 1])?;
            if l + 1 < self.num_layers() {
                x = match self.hidden {
                    Activation::Tanh => tape.tanh(x),
                    Activation::Relu => tape.relu(x),
                };
            }
        }
        Ok(x)
    }

    /// Tape-free forward pass for action selection; matches the tape path
    /// operation for operation so values agree bit for bit.
    pub fn forward_values(&self, params: &[Tensor], input: &[f64]) -> Vec<f64> {
        assert_eq!(params.len(), 2 * self.num_layers());
        assert_eq!(input.len(), self.input_dim());
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            let w = &params[2 * l];
            let b = &params[2 * l + 1];
            let (m, k) = (w.shape()[0], w.shape()[1]);
            let mut z = vec![0.0; k];
            for j in 0..m {
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                for l2 in 0..k {
                    z[l2] += xj * w.data()[j * k + l2];
                }
            }
            for (zi, bi) in z.iter_mut().zip(b.data()) {
                *zi += bi;
            }
            if l + 1 < self.num_layers() {
                for zi in z.iter_mut() {
                    *zi = match self.hidden {
                        Activation::Tanh => zi.tanh(),
                        Activation::Relu => zi.max(0.0),
                    };
                }
            }
            x = z;
        }
        x
    }
}

/// A concrete parameter set paired with its spec.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub params: Vec<Tensor>,
}

impl MlpParams {
    pub fn init<R: Rng>(spec: MlpSpec, rng: &mut R) -> Self {
        let params = spec.init_params(rng);
        MlpParams { spec, params }
    }
}
