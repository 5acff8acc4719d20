//! The dueling, noisy, categorical Q-network.

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::numcore::{ops, FactorizedNoise, Graph, NoisyLinear, ParamStore, Tensor, Var};
use crate::scalar::Real;

use super::categorical::{CategoricalQ, ACTIONS, ATOMS};
use super::observation::Observation;
use crate::env::REDUCED;

pub const CONV1_FILTERS: usize = 16;
pub const CONV1_KERNEL: usize = 8;
pub const CONV1_STRIDE: usize = 4;
pub const CONV2_FILTERS: usize = 32;
pub const CONV2_KERNEL: usize = 3;
pub const CONV2_STRIDE: usize = 2;
pub const HIDDEN: usize = 128;

const fn conv_out(n: usize, k: usize, s: usize) -> usize {
    (n - k) / s + 1
}

pub const CONV1_OUT: usize = conv_out(REDUCED, CONV1_KERNEL, CONV1_STRIDE);
pub const CONV2_OUT: usize = conv_out(CONV1_OUT, CONV2_KERNEL, CONV2_STRIDE);
pub const FLAT: usize = CONV2_FILTERS * CONV2_OUT * CONV2_OUT;
/// Width of the penultimate activations (both dueling streams' hidden layers).
pub const LATENT: usize = 2 * HIDDEN;

/// The four noisy layers, in parameter order.
const NOISY_LAYERS: [(&str, usize, usize); 4] = [
    ("value_hidden", FLAT, HIDDEN),
    ("value_out", HIDDEN, ATOMS),
    ("adv_hidden", FLAT, HIDDEN),
    ("adv_out", HIDDEN, ACTIONS * ATOMS),
];

/// Whether forward passes sample parameter noise or use the mean weights only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    Sampled,
    Zero,
}

/// One noise sample for every noisy layer of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetNoise<T> {
    pub layers: Vec<FactorizedNoise<T>>,
}

impl<T: Real> NetNoise<T> {
    pub fn zero() -> Self {
        Self {
            layers: NOISY_LAYERS
                .iter()
                .map(|&(_, n, m)| FactorizedNoise::zero(n, m))
                .collect(),
        }
    }

    pub fn sample(rng: &mut impl Rng) -> Self {
        Self {
            layers: NOISY_LAYERS
                .iter()
                .map(|&(_, n, m)| FactorizedNoise::sample(n, m, rng))
                .collect(),
        }
    }
}

/// Output of a batched forward pass.
pub struct Inference<T> {
    /// `[B, ACTIONS, ATOMS]` log-probabilities.
    pub log_probs: Tensor<T>,
    /// `[B, LATENT]` post-ReLU hidden activations of the value and advantage streams.
    pub latents: Tensor<T>,
}

/// Loss, per-sample priorities and parameter gradients of one batch.
pub struct BatchGrads<T> {
    pub loss: T,
    pub priorities: Vec<T>,
    pub grads: Vec<Tensor<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<T> {
    pub params: ParamStore<T>,
    in_channels: usize,
}

fn conv_init<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-bound..bound)))
}

impl<T: Real> QNetwork<T> {
    /// Freshly initialised network reading `in_channels` input planes.
    pub fn new(in_channels: usize, rng: &mut impl Rng) -> Self {
        let mut params = ParamStore::new();
        let fan1 = in_channels * CONV1_KERNEL * CONV1_KERNEL;
        params.insert(
            "conv1.weight",
            conv_init(&[CONV1_FILTERS, in_channels, CONV1_KERNEL, CONV1_KERNEL], fan1, rng),
        );
        params.insert("conv1.bias", conv_init(&[CONV1_FILTERS], fan1, rng));
        let fan2 = CONV1_FILTERS * CONV2_KERNEL * CONV2_KERNEL;
        params.insert(
            "conv2.weight",
            conv_init(&[CONV2_FILTERS, CONV1_FILTERS, CONV2_KERNEL, CONV2_KERNEL], fan2, rng),
        );
        params.insert("conv2.bias", conv_init(&[CONV2_FILTERS], fan2, rng));
        for (name, n, m) in NOISY_LAYERS {
            let layer = NoisyLinear::<T>::init(n, m, rng);
            params.insert(format!("{name}.w_mu"), layer.w_mu);
            params.insert(format!("{name}.w_sigma"), layer.w_sigma);
            params.insert(format!("{name}.b_mu"), layer.b_mu);
            params.insert(format!("{name}.b_sigma"), layer.b_sigma);
        }
        Self { params, in_channels }
    }

    /// Wraps an existing parameter store, checking it has this architecture's layout.
    pub fn from_params(params: ParamStore<T>) -> Result<Self> {
        let in_channels = params
            .index_of("conv1.weight")
            .map(|i| params.get(i).shape()[1])
            .ok_or_else(|| Error::Invalid("missing conv1.weight".into()))?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let reference = Self::new(in_channels, &mut rng);
        if reference.params.names() != params.names() {
            return Err(Error::Invalid("parameter names do not match the network".into()));
        }
        for (a, b) in reference.params.params().iter().zip(params.params()) {
            if a.shape() != b.shape() {
                return shape_err("QNetwork::from_params", a.shape(), b.shape());
            }
        }
        Ok(Self { params, in_channels })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    fn noisy(&self, layer: usize) -> NoisyLinear<T> {
        let base = 4 + 4 * layer;
        NoisyLinear {
            w_mu: self.params.get(base).clone(),
            w_sigma: self.params.get(base + 1).clone(),
            b_mu: self.params.get(base + 2).clone(),
            b_sigma: self.params.get(base + 3).clone(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        let s = input.shape();
        if s.len() != 4 || s[1] != self.in_channels || s[2] != REDUCED || s[3] != REDUCED {
            return shape_err("network input", s, &[0, self.in_channels, REDUCED, REDUCED]);
        }
        Ok(s[0])
    }

    /// Folds a noise sample into the noisy layers so repeated forward passes can share it.
    pub fn prepare(&self, noise: &NetNoise<T>) -> Result<Prepared<'_, T>> {
        let layers = (0..NOISY_LAYERS.len())
            .map(|i| self.noisy(i).effective(&noise.layers[i]))
            .collect::<Result<_>>()?;
        Ok(Prepared { net: self, layers })
    }

    /// Batched forward pass without recording gradients. Input `[B, C, 32, 32]`.
    pub fn infer(&self, input: &Tensor<T>, noise: &NetNoise<T>) -> Result<Inference<T>> {
        self.prepare(noise)?.infer(input)
    }

    /// Per-sample categorical Q distributions for a batch.
    pub fn distributions(&self, input: &Tensor<T>, noise: &NetNoise<T>) -> Result<Vec<CategoricalQ<T>>> {
        to_distributions(&self.infer(input, noise)?.log_probs)
    }

    /// Records the forward pass on `g`; returns the parameter leaves and the log-probability node.
    pub fn record(&self, g: &mut Graph<T>, input: Tensor<T>, noise: &NetNoise<T>) -> Result<(Vec<Var>, Var)> {
        let batch = self.check_input(&input)?;
        let leaves: Vec<Var> = self.params.params().iter().map(|t| g.leaf(t.clone(), true)).collect();
        let x = g.leaf(input, false);
        let h1 = g.conv2d(x, leaves[0], Some(leaves[1]), CONV1_STRIDE)?;
        let h1 = g.relu(h1);
        let h2 = g.conv2d(h1, leaves[2], Some(leaves[3]), CONV2_STRIDE)?;
        let h2 = g.relu(h2);
        let flat = g.reshape(h2, &[batch, FLAT])?;
        let noisy = |i: usize| -> [Var; 4] { std::array::from_fn(|k| leaves[4 + 4 * i + k]) };
        let vh = g.noisy_linear(flat, noisy(0), &noise.layers[0])?;
        let vh = g.relu(vh);
        let v = g.noisy_linear(vh, noisy(1), &noise.layers[1])?;
        let ah = g.noisy_linear(flat, noisy(2), &noise.layers[2])?;
        let ah = g.relu(ah);
        let a = g.noisy_linear(ah, noisy(3), &noise.layers[3])?;
        let logits = g.dueling(v, a, ACTIONS)?;
        let lp = g.log_softmax(logits);
        Ok((leaves, lp))
    }

    /// Importance-weighted mean cross-entropy of `targets` against the predicted distributions of
    /// the taken `actions`, with gradients for every parameter.
    pub fn loss_and_grads(
        &self,
        input: Tensor<T>,
        actions: &[usize],
        targets: &Tensor<T>,
        weights: &[T],
        noise: &NetNoise<T>,
    ) -> Result<BatchGrads<T>> {
        let mut g = Graph::new();
        let (leaves, lp) = self.record(&mut g, input, noise)?;
        let loss = g.cross_entropy(lp, actions, targets, weights)?;
        let priorities = {
            let lpv = g.value(lp).data();
            actions
                .iter()
                .enumerate()
                .map(|(b, &a)| {
                    let row = &lpv[(b * ACTIONS + a) * ATOMS..][..ATOMS];
                    row.iter()
                        .zip(&targets.data()[b * ATOMS..][..ATOMS])
                        .map(|(&l, &t)| -t * l)
                        .sum()
                })
                .collect()
        };
        g.backward(loss)?;
        let loss_value = g.value(loss).data()[0];
        let grads = leaves
            .iter()
            .zip(self.params.params())
            .map(|(&v, p)| g.take_grad(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        Ok(BatchGrads {
            loss: loss_value,
            priorities,
            grads,
        })
    }
}

/// A network with one noise sample folded into its noisy layers.
pub struct Prepared<'a, T> {
    net: &'a QNetwork<T>,
    layers: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> Prepared<'_, T> {
    pub fn infer(&self, input: &Tensor<T>) -> Result<Inference<T>> {
        let batch = self.net.check_input(input)?;
        let p = |i| self.net.params.get(i);
        let relu = |t: Tensor<T>| t.map(|v| v.max(T::zero()));
        let h1 = relu(ops::conv2d_forward(input, p(0), Some(p(1)), CONV1_STRIDE)?);
        let h2 = relu(ops::conv2d_forward(&h1, p(2), Some(p(3)), CONV2_STRIDE)?).reshape(&[batch, FLAT])?;
        let layer = |i: usize, x: &Tensor<T>| -> Result<Tensor<T>> {
            let (w, b) = &self.layers[i];
            ops::linear_forward(x, w, b)
        };
        let vh = relu(layer(0, &h2)?);
        let v = layer(1, &vh)?;
        let ah = relu(layer(2, &h2)?);
        let a = layer(3, &ah)?;
        let logits = ops::dueling_forward(&v, &a, ACTIONS)?;
        let mut latents = Vec::with_capacity(batch * LATENT);
        for b in 0..batch {
            latents.extend_from_slice(&vh.data()[b * HIDDEN..(b + 1) * HIDDEN]);
            latents.extend_from_slice(&ah.data()[b * HIDDEN..(b + 1) * HIDDEN]);
        }
        Ok(Inference {
            log_probs: ops::log_softmax_last(&logits),
            latents: Tensor::new(&[batch, LATENT], latents)?,
        })
    }

    /// Per-sample categorical Q distributions for a batch.
    pub fn distributions(&self, input: &Tensor<T>) -> Result<Vec<CategoricalQ<T>>> {
        to_distributions(&self.infer(input)?.log_probs)
    }
}

fn to_distributions<T: Real>(log_probs: &Tensor<T>) -> Result<Vec<CategoricalQ<T>>> {
    log_probs
        .data()
        .chunks_exact(ACTIONS * ATOMS)
        .map(|row| CategoricalQ::from_probs(row.iter().map(|v| v.exp()).collect()))
        .collect()
}

impl QNetwork<f32> {
    /// Categorical Q distribution for one observation.
    pub fn q_distribution(&self, obs: &Observation, noise: &NetNoise<f32>) -> Result<CategoricalQ<f32>> {
        let s = obs.tensor.shape();
        let input = obs.tensor.clone().reshape(&[1, s[0], s[1], s[2]])?;
        Ok(self.distributions(&input, noise)?.remove(0))
    }

    /// Penultimate activations for one observation under zero noise.
    pub fn latents(&self, obs: &Observation) -> Result<Vec<f32>> {
        let s = obs.tensor.shape();
        let input = obs.tensor.clone().reshape(&[1, s[0], s[1], s[2]])?;
        Ok(self.infer(&input, &NetNoise::zero())?.latents.into_data())
    }
}
