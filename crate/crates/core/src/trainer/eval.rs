use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;

use crate::agent::{ablate_channels, Condition, NetNoise, ObsStack, QNetwork, StepFrame, ACTIONS};
use crate::env::{named_rng, render, Action, EnvConfig, GameState};
use crate::error::Result;
use crate::masks::{segment, Channel, RuleSet};
use crate::numcore::Tensor;

/// Segments the rendered frame and packs it for the observation stack.
pub fn capture(state: &GameState, rules: &RuleSet) -> Result<Arc<StepFrame>> {
    let frame = render(state);
    let masks = segment(&frame, rules)?;
    Ok(Arc::new(StepFrame::capture(&frame, &masks)?))
}

/// Plays `episodes` full games. Each starts with `k ~ U{0..noop_max}` no-op steps; afterwards
/// `policy` picks every action. Returns the unclipped game scores.
pub fn evaluate_policy(
    env: &EnvConfig,
    rules: &RuleSet,
    episodes: usize,
    noop_max: u32,
    seed: u64,
    mut policy: impl FnMut(&ObsStack) -> Result<Action>,
) -> Result<Vec<f64>> {
    let mut rng = named_rng(seed, "evaluation");
    let mut scores = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let env_seed: u64 = rng.random();
        let noops = rng.random_range(0..=noop_max);
        let mut state = GameState::reset(env, env_seed)?;
        let mut stack = ObsStack::new(capture(&state, rules)?);
        let mut t = 0;
        while !state.terminal {
            let action = if t < noops { Action::Noop } else { policy(&stack)? };
            let (next, _) = state.step(action)?;
            state = next;
            stack = stack.push(capture(&state, rules)?);
            t += 1;
        }
        scores.push(state.score as f64);
    }
    Ok(scores)
}

/// Greedy evaluation of a network with its noise switched off.
pub fn evaluate(
    net: &QNetwork<f32>,
    condition: Condition,
    env: &EnvConfig,
    episodes: usize,
    noop_max: u32,
    seed: u64,
) -> Result<Vec<f64>> {
    let prepared = net.prepare(&NetNoise::zero())?;
    let mut input = Tensor::zeros(&[1, condition.channels(), crate::env::REDUCED, crate::env::REDUCED]);
    evaluate_policy(env, &RuleSet::default(), episodes, noop_max, seed, |stack| {
        stack.write(condition, input.data_mut());
        let q = prepared.distributions(&input)?.remove(0);
        Ok(q.select_action())
    })
}

/// Greedy evaluation with the named mask channels zeroed in every observation.
pub fn evaluate_ablated(
    net: &QNetwork<f32>,
    condition: Condition,
    omit: &BTreeSet<Channel>,
    env: &EnvConfig,
    episodes: usize,
    noop_max: u32,
    seed: u64,
) -> Result<Vec<f64>> {
    let prepared = net.prepare(&NetNoise::zero())?;
    evaluate_policy(env, &RuleSet::default(), episodes, noop_max, seed, |stack| {
        let obs = ablate_channels(&stack.observation(condition), omit)?;
        let s = obs.tensor.shape().to_vec();
        let input = obs.tensor.reshape(&[1, s[0], s[1], s[2]])?;
        Ok(prepared.distributions(&input)?.remove(0).select_action())
    })
}

/// Uniformly random play, the reference point for learning progress.
pub fn evaluate_random(env: &EnvConfig, episodes: usize, noop_max: u32, seed: u64) -> Result<Vec<f64>> {
    let mut rng = named_rng(seed, "random-policy");
    evaluate_policy(env, &RuleSet::default(), episodes, noop_max, seed, |_| {
        Ok(Action::from_index(rng.random_range(0..ACTIONS)).expect("valid index"))
    })
}
