use std::path::Path;

use crate::agent::{ablate_channels, Condition, NetNoise, ObsStack, Observation, QNetwork};
use crate::checkpoint::load_checkpoint;
use crate::env::REDUCED;
use crate::error::Result;
use crate::masks::Channel;
use crate::numcore::Tensor;

use std::collections::BTreeSet;

/// A trained network together with the observation condition it reads.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: QNetwork<f32>,
    pub condition: Condition,
}

const CHUNK: usize = 64;

impl Model {
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        let net = QNetwork::from_params(ckpt.to_store())?;
        if net.in_channels() != ckpt.meta.condition.channels() {
            return Err(crate::error::Error::Checkpoint(format!(
                "{} input planes do not fit condition {}",
                net.in_channels(),
                ckpt.meta.condition
            )));
        }
        Ok(Self {
            net,
            condition: ckpt.meta.condition,
        })
    }

    /// Zero-noise state values (maximal expected action value) of observations in this model's
    /// condition, evaluated in batches.
    pub fn observation_values(&self, obs: &[Observation]) -> Result<Vec<f64>> {
        let prepared = self.net.prepare(&NetNoise::zero())?;
        let width = self.condition.channels() * REDUCED * REDUCED;
        let mut out = Vec::with_capacity(obs.len());
        for chunk in obs.chunks(CHUNK) {
            let mut data = Vec::with_capacity(chunk.len() * width);
            for o in chunk {
                o.condition_check(self.condition)?;
                data.extend_from_slice(o.tensor.data());
            }
            let input = Tensor::new(&[chunk.len(), self.condition.channels(), REDUCED, REDUCED], data)?;
            out.extend(prepared.distributions(&input)?.iter().map(|q| q.state_value() as f64));
        }
        Ok(out)
    }

    /// State values of packed histories, optionally with mask channels omitted.
    pub fn state_values(&self, stacks: &[ObsStack], omit: &BTreeSet<Channel>) -> Result<Vec<f64>> {
        let obs = stacks
            .iter()
            .map(|s| ablate_channels(&s.observation(self.condition), omit))
            .collect::<Result<Vec<_>>>()?;
        self.observation_values(&obs)
    }

    /// Penultimate activations for each history under zero noise.
    pub fn latents(&self, stacks: &[ObsStack]) -> Result<Vec<Vec<f64>>> {
        stacks
            .iter()
            .map(|s| {
                let l = self.net.latents(&s.observation(self.condition))?;
                Ok(l.into_iter().map(f64::from).collect())
            })
            .collect()
    }
}
