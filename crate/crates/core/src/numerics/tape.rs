//! Reverse-mode autodiff over a flat operation tape.
//!
//! The tape records each primitive in topological order as it is built, so a
//! single reverse sweep visits every node exactly once. Broadcasting is
//! deliberately limited to bias-add over the batch dimension and
//! multiplication by a scalar node.

use super::tensor::Tensor;
use super::{NumericsError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Const,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, NodeId),
    Neg(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    RowSum(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Softplus(NodeId),
    LogSoftmax(NodeId),
    Reshape(NodeId),
    Concat(NodeId, NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Records a forward computation and replays it in reverse for gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, the derivative of softplus.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` output with respect to `id`.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Differentiable input. Gradients accumulate here during `backward`.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Non-differentiable input (targets, masks, fixed noise).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (n, m, k) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let mut out = vec![0.0; n * k];
        for i in 0..n {
            for j in 0..m {
                let aij = va.data()[i * m + j];
                if aij == 0.0 {
                    continue;
                }
                for l in 0..k {
                    out[i * k + l] += aij * vb.data()[j * k + l];
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), Tensor::matrix(n, k, out)))
    }

    fn elementwise_pair(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: op_name,
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data);
        Ok(self.push(op, t))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_pair("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    /// `[n, m]` matrix plus length-`m` bias broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(bias));
        if va.shape().len() != 2 || vb.shape().len() != 1 || va.shape()[1] != vb.shape()[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "add_bias",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (n, m) = (va.shape()[0], va.shape()[1]);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                out.push(va.data()[i * m + j] + vb.data()[j]);
            }
        }
        Ok(self.push(Op::AddBias(a, bias), Tensor::matrix(n, m, out)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_pair("subtract", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_pair("multiply", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Tensor times a scalar node; gradients flow to both factors.
    pub fn scale(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let vs = self.value(s);
        if !vs.is_scalar() {
            return Err(NumericsError::ShapeMismatch {
                op: "scale",
                lhs: self.value(a).shape().to_vec(),
                rhs: vs.shape().to_vec(),
            });
        }
        let sv = vs.item();
        let va = self.value(a);
        let t = Tensor::new(va.shape().to_vec(), va.data().iter().map(|&x| x * sv).collect());
        Ok(self.push(Op::Scale(a, s), t))
    }

    fn elementwise(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let va = self.value(a);
        let t = Tensor::new(va.shape().to_vec(), va.data().iter().map(|&x| f(x)).collect());
        self.push(op, t)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.elementwise(a, |x| -x, Op::Neg(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.elementwise(a, |x| x * x, Op::Square(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.elementwise(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.elementwise(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.elementwise(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(NumericsError::Domain {
                op: "log",
                value: bad,
            });
        }
        Ok(self.elementwise(a, f64::ln, Op::Log(a)))
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| !x.is_finite()) {
            return Err(NumericsError::Domain {
                op: "softplus",
                value: bad,
            });
        }
        Ok(self.elementwise(a, softplus, Op::Softplus(a)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let s = va.data().iter().sum::<f64>() / va.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s))
    }

    /// Sum over the last dimension: `[n, m]` -> `[n]`.
    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if va.shape().len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "row_sum",
                lhs: va.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (n, m) = (va.shape()[0], va.shape()[1]);
        let data = (0..n)
            .map(|i| va.data()[i * m..(i + 1) * m].iter().sum())
            .collect();
        Ok(self.push(Op::RowSum(a), Tensor::vector(data)))
    }

    /// Row-wise `x - logsumexp(x)` over the last dimension of a matrix.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if va.shape().len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "log_softmax",
                lhs: va.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (n, m) = (va.shape()[0], va.shape()[1]);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let row = &va.data()[i * m..(i + 1) * m];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|&x| x - lse));
        }
        Ok(self.push(Op::LogSoftmax(a), Tensor::matrix(n, m, out)))
    }

    /// Reinterprets the value under a new shape with the same element count.
    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let va = self.value(a);
        if shape.iter().product::<usize>() != va.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "reshape",
                lhs: va.shape().to_vec(),
                rhs: shape,
            });
        }
        let t = Tensor::new(shape, va.data().to_vec());
        Ok(self.push(Op::Reshape(a), t))
    }

    /// Concatenates two matrices along the feature (last) dimension.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.shape()[0] != vb.shape()[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "concat",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (n, p, q) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let mut out = Vec::with_capacity(n * (p + q));
        for i in 0..n {
            out.extend_from_slice(&va.data()[i * p..(i + 1) * p]);
            out.extend_from_slice(&vb.data()[i * q..(i + 1) * q]);
        }
        Ok(self.push(Op::Concat(a, b), Tensor::matrix(n, p + q, out)))
    }

    fn accumulate(&mut self, id: NodeId, delta: &Tensor) {
        let slot = &mut self.grads[id.0];
        match slot {
            Some(g) => {
                for (gi, di) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.clone()),
        }
    }

    /// Reverse sweep from a scalar output. Fills gradients for every node
    /// that the output depends on; read them back with [`Tape::grad`].
    pub fn backward(&mut self, output: NodeId) -> Result<()> {
        if !self.value(output).is_scalar() {
            return Err(NumericsError::NonScalarBackward {
                shape: self.value(output).shape().to_vec(),
            });
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(gy) = self.grads[idx].take() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf | Op::Const => {}
                Op::MatMul(a, b) => {
                    let va = self.value(a).clone();
                    let vb = self.value(b).clone();
                    let (n, m, k) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                    // dA = dC . B^T
                    let mut da = vec![0.0; n * m];
                    for i in 0..n {
                        for j in 0..m {
                            let mut acc = 0.0;
                            for l in 0..k {
                                acc += gy.data()[i * k + l] * vb.data()[j * k + l];
                            }
                            da[i * m + j] = acc;
                        }
                    }
                    // dB = A^T . dC
                    let mut db = vec![0.0; m * k];
                    for i in 0..n {
                        for j in 0..m {
                            let aij = va.data()[i * m + j];
                            if aij == 0.0 {
                                continue;
                            }
                            for l in 0..k {
                                db[j * k + l] += aij * gy.data()[i * k + l];
                            }
                        }
                    }
                    self.accumulate(a, &Tensor::matrix(n, m, da));
                    self.accumulate(b, &Tensor::matrix(m, k, db));
                }
                Op::Add(a, b) => {
                    self.accumulate(a, &gy);
                    self.accumulate(b, &gy);
                }
                Op::AddBias(a, bias) => {
                    let (n, m) = (gy.shape()[0], gy.shape()[1]);
                    let mut db = vec![0.0; m];
                    for i in 0..n {
                        for j in 0..m {
                            db[j] += gy.data()[i * m + j];
                        }
                    }
                    self.accumulate(a, &gy);
                    self.accumulate(bias, &Tensor::vector(db));
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, &gy);
                    let neg = Tensor::new(
                        gy.shape().to_vec(),
                        gy.data().iter().map(|&x| -x).collect(),
                    );
                    self.accumulate(b, &neg);
                }
                Op::Mul(a, b) => {
                    let da = {
                        let vb = self.value(b);
                        Tensor::new(
                            gy.shape().to_vec(),
                            gy.data().iter().zip(vb.data()).map(|(&g, &y)| g * y).collect(),
                        )
                    };
                    let db = {
                        let va = self.value(a);
                        Tensor::new(
                            gy.shape().to_vec(),
                            gy.data().iter().zip(va.data()).map(|(&g, &x)| g * x).collect(),
                        )
                    };
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Scale(a, s) => {
                    let sv = self.value(s).item();
                    let da = Tensor::new(
                        gy.shape().to_vec(),
                        gy.data().iter().map(|&g| g * sv).collect(),
                    );
                    let ds = {
                        let va = self.value(a);
                        gy.data().iter().zip(va.data()).map(|(&g, &x)| g * x).sum()
                    };
                    self.accumulate(a, &da);
                    self.accumulate(s, &Tensor::scalar(ds));
                }
                Op::Neg(a) => {
                    let da = Tensor::new(
                        gy.shape().to_vec(),
                        gy.data().iter().map(|&g| -g).collect(),
                    );
                    self.accumulate(a, &da);
                }
                Op::Square(a) => {
                    let da = {
                        let va = self.value(a);
                        Tensor::new(
                            gy.shape().to_vec(),
                            gy.data()
                                .iter()
                                .zip(va.data())
                                .map(|(&g, &x)| g * 2.0 * x)
                                .collect(),
                        )
                    };
                    self.accumulate(a, &da);
                }
                Op::Sum(a) => {
                    let g = gy.item();
                    let va = self.value(a);
                    let da = Tensor::new(va.shape().to_vec(), vec![g; va.len()]);
                    self.accumulate(a, &da);
                }
                Op::Mean(a) => {
                    let va = self.value(a);
                    let g = gy.item() / va.len() as f64;
                    let da = Tensor::new(va.shape().to_vec(), vec![g; va.len()]);
                    self.accumulate(a, &da);
                }
                Op::RowSum(a) => {
                    let va = self.value(a);
                    let (n, m) = (va.shape()[0], va.shape()[1]);
                    let mut da = Vec::with_capacity(n * m);
                    for i in 0..n {
                        da.extend(std::iter::repeat(gy.data()[i]).take(m));
                    }
                    self.accumulate(a, &Tensor::matrix(n, m, da));
                }
                Op::Tanh(a) => {
                    let vy = self.nodes[idx].value.clone();
                    let da = Tensor::new(
                        gy.shape().to_vec(),
                        gy.data()
                            .iter()
                            .zip(vy.data())
                            .map(|(&g, &y)| g * (1.0 - y * y))
                            .collect(),
                    );
                    self.accumulate(a, &da);
                }
                Op::Relu(a) => {
                    let da = {
                        let va = self.value(a);
                        Tensor::new(
                            gy.shape().to_vec(),
                            gy.data()
                                .iter()
                                .zip(va.data())
                                .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                                .collect(),
                        )
                    };
                    self.accumulate(a, &da);
                }
                Op::Exp(a) => {
                    let vy = self.nodes[idx].value.clone();
                    let da = Tensor::new(
                        gy.shape().to_vec(),
                        gy.data().iter().zip(vy.data()).map(|(&g, &y)| g * y).collect(),
                    );
                    self.accumulate(a, &da);
                }
                Op::Log(a) => {
                    let da = {
                        let va = self.value(a);
                        Tensor::new(
                            gy.shape().to_vec(),
                            gy.data().iter().zip(va.data()).map(|(&g, &x)| g / x).collect(),
                        )
                    };
                    self.accumulate(a, &da);
                }
                Op::Softplus(a) => {
                    let da = {
                        let va = self.value(a);
                        Tensor::new(
                            gy.shape().to_vec(),
                            gy.data()
                                .iter()
                                .zip(va.data())
                                .map(|(&g, &x)| g * sigmoid(x))
                                .collect(),
                        )
                    };
                    self.accumulate(a, &da);
                }
                Op::LogSoftmax(a) => {
                    let vy = self.nodes[idx].value.clone();
                    let (n, m) = (vy.shape()[0], vy.shape()[1]);
                    let mut da = Vec::with_capacity(n * m);
                    for i in 0..n {
                        let grow = &gy.data()[i * m..(i + 1) * m];
                        let yrow = &vy.data()[i * m..(i + 1) * m];
                        let gsum: f64 = grow.iter().sum();
                        for j in 0..m {
                            da.push(grow[j] - yrow[j].exp() * gsum);
                        }
                    }
                    self.accumulate(a, &Tensor::matrix(n, m, da));
                }
                Op::Reshape(a) => {
                    let shape = self.value(a).shape().to_vec();
                    let da = Tensor::new(shape, gy.data().to_vec());
                    self.accumulate(a, &da);
                }
                Op::Concat(a, b) => {
                    let (p, q) = (self.value(a).shape()[1], self.value(b).shape()[1]);
                    let n = gy.shape()[0];
                    let mut da = Vec::with_capacity(n * p);
                    let mut db = Vec::with_capacity(n * q);
                    for i in 0..n {
                        let row = &gy.data()[i * (p + q)..(i + 1) * (p + q)];
                        da.extend_from_slice(&row[..p]);
                        db.extend_from_slice(&row[p..]);
                    }
                    self.accumulate(a, &Tensor::matrix(n, p, da));
                    self.accumulate(b, &Tensor::matrix(n, q, db));
                }
            }
            // keep the output seed visible for callers
            if idx == output.0 {
                self.grads[idx] = Some(Tensor::scalar(1.0));
            } else {
                self.grads[idx] = Some(gy);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_forward() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = tape.square(x);
        let s = tape.sum(sq);
        assert_eq!(tape.value(s).item(), 14.0);
    }

    #[test]
    fn relu_forward() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softplus_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.softplus(x).unwrap();
        assert!((tape.value(y).item() - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.square(x);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn softplus_gradient_at_zero_is_half() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.softplus(x).unwrap();
        tape.backward(y).unwrap();
        assert!((tape.grad(x).unwrap().item() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.square(x);
        assert!(matches!(
            tape.backward(y),
            Err(NumericsError::NonScalarBackward { .. })
        ));
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(tape.log(x), Err(NumericsError::Domain { .. })));
    }

    #[test]
    fn matmul_shape_mismatch_names_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(2, 3, vec![0.0; 6]));
        let b = tape.leaf(Tensor::matrix(2, 2, vec![0.0; 4]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"));
    }

    #[test]
    fn chain_rule_composition_matches_closed_form() {
        // f(g(x)) with g(x) = x^2, f(u) = tanh(u): d/dx = (1 - tanh(x^2)^2) * 2x
        let x0 = 0.7;
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(x0));
        let g = tape.square(x);
        let f = tape.tanh(g);
        let out = tape.sum(f);
        tape.backward(out).unwrap();
        let expected = (1.0 - (x0 * x0).tanh().powi(2)) * 2.0 * x0;
        assert!((tape.grad(x).unwrap().item() - expected).abs() < 1e-12);
    }

    #[test]
    fn evaluate_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let a = tape.leaf(Tensor::matrix(2, 2, vec![0.1, -0.7, 2.3, 0.0]));
            let b = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.5, -0.25, 3.0]));
            let c = tape.matmul(a, b).unwrap();
            let t = tape.tanh(c);
            let s = tape.sum(t);
            tape.value(s).item()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]));
        let y = tape.log_softmax(x).unwrap();
        for i in 0..2 {
            let total: f64 = (0..3).map(|j| tape.value(y).get2(i, j).exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
