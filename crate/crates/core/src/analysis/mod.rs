//! Post-hoc analyses of trained models: channel omission, normalised value differences with a
//! t-SNE embedding, scenario injection, and the statistics they report.

mod model;
mod output;
mod scenario;
mod stats;
mod tsne;
mod valdiff;

pub use crate::agent::ablate_channels;
pub use model::Model;
pub use output::*;
pub use scenario::*;
pub use stats::*;
pub use tsne::*;
pub use valdiff::*;

use std::collections::BTreeSet;

use crate::agent::Condition;
use crate::error::Result;

/// State values of one model on one scenario instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSample {
    pub scenario: ScenarioName,
    pub condition: Condition,
    pub model: usize,
    pub instance: usize,
    pub base_value: f64,
    pub edited_value: f64,
}

/// Zero-noise state values of every model on the base and edited state of every scenario instance.
pub fn scenario_values(scenarios: &[Scenario], models: &[Model]) -> Result<Vec<ScenarioSample>> {
    let mut bases = Vec::with_capacity(scenarios.len());
    let mut edited = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let (b, e) = scenario_stacks(s)?;
        bases.push(b);
        edited.push(e);
    }
    let mut out = Vec::new();
    for (mi, m) in models.iter().enumerate() {
        let none = BTreeSet::new();
        let bv = m.state_values(&bases, &none)?;
        let ev = m.state_values(&edited, &none)?;
        for (k, s) in scenarios.iter().enumerate() {
            out.push(ScenarioSample {
                scenario: s.name,
                condition: m.condition,
                model: mi,
                instance: k,
                base_value: bv[k],
                edited_value: ev[k],
            });
        }
    }
    Ok(out)
}

pub fn scenario_csv(samples: &[ScenarioSample]) -> String {
    let mut s = String::from("scenario,condition,model,instance,base_value,edited_value\n");
    for x in samples {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            x.scenario, x.condition, x.model, x.instance, x.base_value, x.edited_value
        ));
    }
    s
}

/// Histories visited by one greedy evaluation episode of `model`, thinned to every `k`-th step
/// with `k` the smallest stride yielding at most `max_states`.
pub fn sample_states(
    model: &Model,
    env: &crate::env::EnvConfig,
    seed: u64,
    max_states: usize,
) -> Result<Vec<crate::agent::ObsStack>> {
    use crate::agent::NetNoise;
    use crate::masks::RuleSet;
    use crate::numcore::Tensor;
    use crate::trainer::capture;

    let rules = RuleSet::default();
    let prepared = model.net.prepare(&NetNoise::zero())?;
    let cond = model.condition;
    let mut input = Tensor::zeros(&[1, cond.channels(), crate::env::REDUCED, crate::env::REDUCED]);
    let mut state = crate::env::GameState::reset(env, seed)?;
    let mut stack = crate::agent::ObsStack::new(capture(&state, &rules)?);
    let mut visited = vec![stack.clone()];
    while !state.terminal {
        stack.write(cond, input.data_mut());
        let action = prepared.distributions(&input)?.remove(0).select_action();
        state = state.step(action)?.0;
        stack = stack.push(capture(&state, &rules)?);
        visited.push(stack.clone());
    }
    let k = visited.len().div_ceil(max_states.max(1)).max(1);
    Ok(visited.into_iter().step_by(k).collect())
}
