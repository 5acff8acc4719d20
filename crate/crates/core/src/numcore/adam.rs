use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1.5e-4,
        }
    }
}

/// Named parameters with their Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            params: Vec::new(),
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter and returns its slot index.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        self.first.push(Tensor::zeros(value.shape()));
        self.second.push(Tensor::zeros(value.shape()));
        self.names.push(name.into());
        self.params.push(value);
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn get(&self, idx: usize) -> &Tensor<T> {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        &mut self.params[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total parameter count.
    pub fn numel(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Overwrites parameter values (not moments) from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Invalid("parameter layouts differ".into()));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.shape() != src.shape() {
                return shape_err("copy_values_from", dst.shape(), src.shape());
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// One bias-corrected Adam update. Rejects non-finite gradients before touching any state.
    pub fn adam_step(&mut self, grads: &[Tensor<T>], cfg: &AdamConfig) -> Result<()> {
        if grads.len() != self.params.len() {
            return shape_err("adam_step", &[self.params.len()], &[grads.len()]);
        }
        for (i, (g, p)) in grads.iter().zip(&self.params).enumerate() {
            if g.shape() != p.shape() {
                return shape_err("adam_step", p.shape(), g.shape());
            }
            g.check_finite(&format!("gradient of `{}`", self.names[i]))?;
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
        for ((p, g), (m, v)) in self
            .params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
