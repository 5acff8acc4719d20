//! Dense tensors, reverse-mode gradients and the Adam optimizer.

mod adam;
mod gradcheck;
mod graph;
mod noisy;
pub(crate) mod ops;
mod tensor;

pub use adam::{AdamConfig, ParamStore};
pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use noisy::{noisy_linear, FactorizedNoise, NoisyLinear, SIGMA0};
pub use tensor::Tensor;

use crate::error::{shape_err, Result};
use crate::scalar::Real;

/// Valid-padding convolution of one `[C, H, W]` input with `[K, C, kh, kw]` kernels.
pub fn conv2d<T: Real>(input: &Tensor<T>, kernels: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 3 {
        return shape_err("conv2d", s, kernels.shape());
    }
    let batched = input.clone().reshape(&[1, s[0], s[1], s[2]])?;
    let out = ops::conv2d_forward(&batched, kernels, None, stride)?;
    let os = out.shape()[1..].to_vec();
    out.reshape(&os)
}
