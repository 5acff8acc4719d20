//! Tape-based reverse-mode differentiation over the operations the agent network needs.

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;

use super::noisy::{FactorizedNoise, NoisyLinear};
use super::{ops, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        stride: usize,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    NoisyLinear {
        input: Var,
        w_mu: Var,
        w_sigma: Var,
        b_mu: Var,
        b_sigma: Var,
        noise: FactorizedNoise<T>,
        weight: Tensor<T>,
    },
    Relu(Var),
    Reshape(Var),
    Dueling {
        value: Var,
        adv: Var,
        actions: usize,
    },
    LogSoftmax(Var),
    CrossEntropy {
        log_probs: Var,
        actions: Vec<usize>,
        targets: Tensor<T>,
        weights: Vec<T>,
    },
    WeightedSum {
        input: Var,
        weights: Tensor<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    needs_grad: bool,
    op: Op<T>,
}

/// Records a forward computation and propagates gradients back through it.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Gradients are only kept for leaves with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad: requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    /// Batched convolution: input `[B, C, H, W]`, kernels `[K, C, kh, kw]`, optional bias `[K]`.
    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        let out = ops::conv2d_forward(
            self.value(input),
            self.value(kernels),
            bias.map(|b| self.value(b)),
            stride,
        )?;
        let mut deps = vec![input, kernels];
        deps.extend(bias);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernels,
                bias,
                stride,
            },
            &deps,
        ))
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = ops::linear_forward(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(out, Op::Linear { input, weight, bias }, &[input, weight, bias]))
    }

    /// Batched noisy linear layer; the same noise sample applies to every row of the batch.
    pub fn noisy_linear(&mut self, input: Var, layer: [Var; 4], noise: &FactorizedNoise<T>) -> Result<Var> {
        let [w_mu, w_sigma, b_mu, b_sigma] = layer;
        let params = NoisyLinear {
            w_mu: self.value(w_mu).clone(),
            w_sigma: self.value(w_sigma).clone(),
            b_mu: self.value(b_mu).clone(),
            b_sigma: self.value(b_sigma).clone(),
        };
        let (weight, bias) = params.effective(noise)?;
        let out = ops::linear_forward(self.value(input), &weight, &bias)?;
        Ok(self.push(
            out,
            Op::NoisyLinear {
                input,
                w_mu,
                w_sigma,
                b_mu,
                b_sigma,
                noise: noise.clone(),
                weight,
            },
            &[input, w_mu, w_sigma, b_mu, b_sigma],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Dueling aggregation over atoms: value `[B, Z]`, advantages `[B, A*Z]` -> `[B, A, Z]` with
    /// `out[b,a,i] = value[b,i] + adv[b,a,i] - mean_a' adv[b,a',i]`.
    pub fn dueling(&mut self, value: Var, adv: Var, actions: usize) -> Result<Var> {
        let out = ops::dueling_forward(self.value(value), self.value(adv), actions)?;
        Ok(self.push(out, Op::Dueling { value, adv, actions }, &[value, adv]))
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let out = ops::log_softmax_last(self.value(x));
        self.push(out, Op::LogSoftmax(x), &[x])
    }

    /// Mean over the batch of `-w_b * sum_i target[b,i] * log_probs[b, action_b, i]`.
    pub fn cross_entropy(
        &mut self,
        log_probs: Var,
        actions: &[usize],
        targets: &Tensor<T>,
        weights: &[T],
    ) -> Result<Var> {
        let s = self.value(log_probs).shape().to_vec();
        if s.len() != 3 || targets.shape() != [s[0], s[2]] || actions.len() != s[0] || weights.len() != s[0] {
            return shape_err("cross_entropy", &s, targets.shape());
        }
        if actions.iter().any(|&a| a >= s[1]) {
            return Err(Error::Invalid(format!("action index out of range for {s:?}")));
        }
        let lp = self.value(log_probs).data();
        let (nact, z) = (s[1], s[2]);
        let mut total = T::zero();
        for (b, (&a, &w)) in actions.iter().zip(weights).enumerate() {
            let row = &lp[(b * nact + a) * z..][..z];
            let ce: T = row
                .iter()
                .zip(&targets.data()[b * z..][..z])
                .map(|(&l, &t)| -t * l)
                .sum();
            total += w * ce;
        }
        let out = Tensor::scalar(total / T::of(s[0] as f64));
        Ok(self.push(
            out,
            Op::CrossEntropy {
                log_probs,
                actions: actions.to_vec(),
                targets: targets.clone(),
                weights: weights.to_vec(),
            },
            &[log_probs],
        ))
    }

    /// `sum(input * weights)`; turns any tensor output into a scalar for gradient checks.
    pub fn weighted_sum(&mut self, input: Var, weights: Tensor<T>) -> Result<Var> {
        if self.value(input).shape() != weights.shape() {
            return shape_err("weighted_sum", self.value(input).shape(), weights.shape());
        }
        let s = ops::dot(self.value(input).data(), weights.data());
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { input, weights }, &[input]))
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if !node.needs_grad {
            return Ok(());
        }
        match node.grad.as_mut() {
            None => node.grad = Some(g),
            Some(acc) => acc.axpy(T::one(), &g)?,
        }
        Ok(())
    }

    /// Back-propagates from a scalar output; gradients land on every node that needs one.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).len() != 1 {
            return shape_err("backward", self.value(output).shape(), &[1]);
        }
        self.nodes[output.0].grad = Some(Tensor::full(self.value(output).shape(), T::one()));
        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
            let res = self.backprop_op(&op, idx, &g);
            self.nodes[idx].op = op;
            self.nodes[idx].grad = Some(g);
            res?;
        }
        Ok(())
    }

    fn backprop_op(&mut self, op: &Op<T>, idx: usize, g: &Tensor<T>) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernels,
                bias,
                stride,
            } => {
                let want_input = self.nodes[input.0].needs_grad;
                let grads = ops::conv2d_backward(self.value(*input), self.value(*kernels), *stride, g, want_input)?;
                if let Some(gi) = grads.input {
                    self.accumulate(*input, gi)?;
                }
                self.accumulate(*kernels, grads.kernels)?;
                if let Some(b) = bias {
                    self.accumulate(*b, grads.bias)?;
                }
            }
            Op::Linear { input, weight, bias } => {
                let grads = ops::linear_backward(self.value(*input), self.value(*weight), g)?;
                self.accumulate(*input, grads.input)?;
                self.accumulate(*weight, grads.weight)?;
                self.accumulate(*bias, grads.bias)?;
            }
            Op::NoisyLinear {
                input,
                w_mu,
                w_sigma,
                b_mu,
                b_sigma,
                noise,
                weight,
            } => {
                let grads = ops::linear_backward(self.value(*input), weight, g)?;
                let n = weight.shape()[1];
                let mut gw_sigma = Tensor::zeros(weight.shape());
                for (o, row) in gw_sigma.data_mut().chunks_exact_mut(n).enumerate() {
                    let gw = &grads.weight.data()[o * n..(o + 1) * n];
                    ops::axpy_scaled(row, noise.eps_out[o], gw, &noise.eps_in);
                }
                let gb_sigma = Tensor::from_fn(&[noise.eps_out.len()], |o| grads.bias.data()[o] * noise.eps_out[o]);
                self.accumulate(*input, grads.input)?;
                self.accumulate(*w_mu, grads.weight)?;
                self.accumulate(*w_sigma, gw_sigma)?;
                self.accumulate(*b_mu, grads.bias)?;
                self.accumulate(*b_sigma, gb_sigma)?;
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let gx = Tensor::from_fn(xv.shape(), |k| {
                    if xv.data()[k] > T::zero() {
                        g.data()[k]
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(*x, gx)?;
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(*x, g.clone().reshape(&shape)?)?;
            }
            Op::Dueling { value, adv, actions } => {
                let s = self.nodes[idx].value.shape().to_vec();
                let (batch, z) = (s[0], s[2]);
                let inv = T::one() / T::of(*actions as f64);
                let gd = g.data();
                let mut gv = vec![T::zero(); batch * z];
                let mut ga = vec![T::zero(); batch * actions * z];
                for b in 0..batch {
                    for i in 0..z {
                        let tot: T = (0..*actions).map(|k| gd[(b * actions + k) * z + i]).sum();
                        gv[b * z + i] = tot;
                        for k in 0..*actions {
                            ga[(b * actions + k) * z + i] = gd[(b * actions + k) * z + i] - tot * inv;
                        }
                    }
                }
                self.accumulate(*value, Tensor::new(&[batch, z], gv)?)?;
                self.accumulate(*adv, Tensor::new(&[batch, actions * z], ga)?)?;
            }
            Op::LogSoftmax(x) => {
                let out = &self.nodes[idx].value;
                let k = *out.shape().last().expect("shape");
                let mut gx = g.clone();
                for (row, lrow) in gx.data_mut().chunks_exact_mut(k).zip(out.data().chunks_exact(k)) {
                    let gs: T = row.iter().copied().sum();
                    for (gv, &l) in row.iter_mut().zip(lrow) {
                        *gv -= l.exp() * gs;
                    }
                }
                self.accumulate(*x, gx)?;
            }
            Op::CrossEntropy {
                log_probs,
                actions,
                targets,
                weights,
            } => {
                let s = self.value(*log_probs).shape().to_vec();
                let (batch, nact, z) = (s[0], s[1], s[2]);
                let scale = g.data()[0] / T::of(batch as f64);
                let mut gl = vec![T::zero(); batch * nact * z];
                for (b, (&a, &w)) in actions.iter().zip(weights).enumerate() {
                    for i in 0..z {
                        gl[(b * nact + a) * z + i] = -scale * w * targets.data()[b * z + i];
                    }
                }
                self.accumulate(*log_probs, Tensor::new(&s, gl)?)?;
            }
            Op::WeightedSum { input, weights } => {
                let gx = weights.map(|w| w * g.data()[0]);
                self.accumulate(*input, gx)?;
            }
        }
        Ok(())
    }
}
