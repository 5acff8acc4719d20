use std::collections::BTreeSet;

use crate::agent::ObsStack;
use crate::error::{Error, Result};

use super::Model;

/// `(d - mean(d)) / std(d)` with the population standard deviation; all-equal input maps to zeros.
pub fn normalize(d: &[f64]) -> Vec<f64> {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if d.iter().all(|&v| v == d[0]) || std == 0.0 {
        return vec![0.0; d.len()];
    }
    d.iter().map(|v| (v - mean) / std).collect()
}

fn group_mean(states: &[ObsStack], group: &[Model]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; states.len()];
    for m in group {
        for (a, v) in acc.iter_mut().zip(m.state_values(states, &BTreeSet::new())?) {
            *a += v;
        }
    }
    Ok(acc.into_iter().map(|v| v / group.len() as f64).collect())
}

/// Per-state difference of the two groups' mean state values, normalised across states.
pub fn value_difference(states: &[ObsStack], group_a: &[Model], group_b: &[Model]) -> Result<Vec<f64>> {
    if states.is_empty() {
        return Err(Error::Invalid("value_difference needs at least one state".into()));
    }
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::Invalid("each model group needs at least one model".into()));
    }
    let a = group_mean(states, group_a)?;
    let b = group_mean(states, group_b)?;
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    Ok(normalize(&d))
}
