//! Linear layers with factorized Gaussian parameter noise.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Result};
use crate::scalar::Real;

use super::{ops, Tensor};

/// Noise scale numerator; sigma is initialised to `SIGMA0 / sqrt(fan_in)`.
pub const SIGMA0: f64 = 0.5;

/// Parameters of one noisy linear layer mapping `n` inputs to `m` outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyLinear<T> {
    pub w_mu: Tensor<T>,
    pub w_sigma: Tensor<T>,
    pub b_mu: Tensor<T>,
    pub b_sigma: Tensor<T>,
}

impl<T: Real> NoisyLinear<T> {
    pub fn init(n: usize, m: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (n as f64).sqrt();
        let sigma = T::of(SIGMA0 / (n as f64).sqrt());
        let mut uni = || T::of(rng.random_range(-bound..bound));
        let w_mu = Tensor::from_fn(&[m, n], |_| uni());
        let b_mu = Tensor::from_fn(&[m], |_| uni());
        Self {
            w_mu,
            w_sigma: Tensor::full(&[m, n], sigma),
            b_mu,
            b_sigma: Tensor::full(&[m], sigma),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w_mu.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.w_mu.shape()[0]
    }

    fn check(&self, noise: &FactorizedNoise<T>) -> Result<()> {
        let (m, n) = (self.fan_out(), self.fan_in());
        if self.w_sigma.shape() != [m, n] || self.b_mu.shape() != [m] || self.b_sigma.shape() != [m] {
            return shape_err("noisy_linear params", self.w_mu.shape(), self.w_sigma.shape());
        }
        if noise.eps_in.len() != n || noise.eps_out.len() != m {
            return shape_err(
                "noisy_linear noise",
                &[m, n],
                &[noise.eps_out.len(), noise.eps_in.len()],
            );
        }
        Ok(())
    }

    /// Weights and bias with the noise folded in: `(mu_W + sigma_W * eps_W, mu_b + sigma_b * eps_b)`.
    pub fn effective(&self, noise: &FactorizedNoise<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check(noise)?;
        let n = self.fan_in();
        let mut w = self.w_mu.clone();
        if noise.is_zero() {
            return Ok((w, self.b_mu.clone()));
        }
        let sig = self.w_sigma.data();
        for (o, row) in w.data_mut().chunks_exact_mut(n).enumerate() {
            let eo = noise.eps_out[o];
            super::ops::axpy_scaled(row, eo, &sig[o * n..(o + 1) * n], &noise.eps_in);
        }
        let mut b = self.b_mu.clone();
        for (o, v) in b.data_mut().iter_mut().enumerate() {
            *v += self.b_sigma.data()[o] * noise.eps_out[o];
        }
        Ok((w, b))
    }
}

/// Factorized noise sample: `eps_W = f(eps_out) (x) f(eps_in)`, `eps_b = f(eps_out)`,
/// with `f(x) = sign(x) sqrt(|x|)` already applied to the stored vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedNoise<T> {
    pub eps_in: Vec<T>,
    pub eps_out: Vec<T>,
}

impl<T: Real> FactorizedNoise<T> {
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            eps_in: vec![T::zero(); n],
            eps_out: vec![T::zero(); m],
        }
    }

    pub fn sample(n: usize, m: usize, rng: &mut impl Rng) -> Self {
        let mut draw = |k: usize| -> Vec<T> {
            (0..k)
                .map(|_| {
                    let x: f64 = rng.sample(StandardNormal);
                    T::of(x.signum() * x.abs().sqrt())
                })
                .collect()
        };
        let eps_in = draw(n);
        let eps_out = draw(m);
        Self { eps_in, eps_out }
    }

    pub fn is_zero(&self) -> bool {
        self.eps_in.iter().chain(&self.eps_out).all(|v| *v == T::zero())
    }
}

/// Single-vector forward pass `y = (W + sigma_W * eps_W) x + (b + sigma_b * eps_b)`.
pub fn noisy_linear<T: Real>(x: &Tensor<T>, layer: &NoisyLinear<T>, noise: &FactorizedNoise<T>) -> Result<Tensor<T>> {
    if x.shape() != [layer.fan_in()] {
        return shape_err("noisy_linear input", x.shape(), &[layer.fan_in()]);
    }
    let (w, b) = layer.effective(noise)?;
    let y = ops::linear_forward(&x.clone().reshape(&[1, layer.fan_in()])?, &w, &b)?;
    y.reshape(&[layer.fan_out()])
}
