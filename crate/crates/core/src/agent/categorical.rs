//! Categorical return distributions over a fixed atom support.

use crate::env::Action;
use crate::error::{shape_err, Result};
use crate::numcore::ops::log_softmax_last;
use crate::numcore::Tensor;
use crate::scalar::Real;

pub const ATOMS: usize = 51;
pub const V_MIN: f64 = -10.0;
pub const V_MAX: f64 = 10.0;
pub const ACTIONS: usize = Action::COUNT;

/// Atom value `i` of the shared support.
pub fn atom<T: Real>(i: usize) -> T {
    T::of(V_MIN + (V_MAX - V_MIN) * i as f64 / (ATOMS - 1) as f64)
}

pub fn support<T: Real>() -> Vec<T> {
    (0..ATOMS).map(atom).collect()
}

/// Per-action probability vectors over the atom support.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalQ<T> {
    probs: Vec<T>,
}

impl<T: Real> CategoricalQ<T> {
    /// From a flat `ACTIONS x ATOMS` row-major probability table.
    pub fn from_probs(probs: Vec<T>) -> Result<Self> {
        if probs.len() != ACTIONS * ATOMS {
            return shape_err("CategoricalQ", &[probs.len()], &[ACTIONS, ATOMS]);
        }
        Ok(Self { probs })
    }

    /// Softmax over atoms of per-action logits.
    pub fn from_logits(logits: &[T]) -> Result<Self> {
        let t = Tensor::new(&[ACTIONS, ATOMS], logits.to_vec())?;
        Self::from_probs(log_softmax_last(&t).data().iter().map(|v| v.exp()).collect())
    }

    pub fn uniform() -> Self {
        Self {
            probs: vec![T::one() / T::of(ATOMS as f64); ACTIONS * ATOMS],
        }
    }

    pub fn probs(&self, action: usize) -> &[T] {
        &self.probs[action * ATOMS..(action + 1) * ATOMS]
    }

    pub fn probs_mut(&mut self, action: usize) -> &mut [T] {
        &mut self.probs[action * ATOMS..(action + 1) * ATOMS]
    }

    pub fn table(&self) -> &[T] {
        &self.probs
    }

    /// `E[Z(a)] = sum_i z_i p_i(a)` for every action.
    pub fn expected_values(&self) -> [T; ACTIONS] {
        let z = support::<T>();
        std::array::from_fn(|a| self.probs(a).iter().zip(&z).map(|(&p, &zi)| p * zi).sum())
    }

    /// Greedy action; ties go to the lowest index.
    pub fn select_action(&self) -> Action {
        let q = self.expected_values();
        let mut best = 0;
        for a in 1..ACTIONS {
            if q[a] > q[best] {
                best = a;
            }
        }
        Action::from_index(best).expect("valid action")
    }

    /// `max_a E[Z(a)]`.
    pub fn state_value(&self) -> T {
        self.expected_values().into_iter().fold(T::neg_infinity(), T::max)
    }
}

/// Distributional Bellman target for one transition.
///
/// The bootstrap action is the online network's greedy choice at the next state; its distribution
/// is taken from the target network's `next_q`. Each atom moves to `clamp(r + gamma_n z)` and its
/// mass splits linearly between the two neighbouring atoms. Terminal transitions project a point
/// mass at `clamp(r)`.
pub fn c51_project<T: Real>(
    next_q: &CategoricalQ<T>,
    reward: T,
    gamma_n: T,
    done: bool,
    online_next_q: &CategoricalQ<T>,
) -> Vec<T> {
    let (vmin, vmax) = (T::of(V_MIN), T::of(V_MAX));
    let scale = T::of((ATOMS - 1) as f64 / (V_MAX - V_MIN));
    let mut target = vec![T::zero(); ATOMS];
    let mut deposit = |tz: T, mass: T| {
        let b = (tz.max(vmin).min(vmax) - vmin) * scale;
        let lo = b.floor();
        let l = lo.to_usize().expect("in range").min(ATOMS - 1);
        let u = b.ceil().to_usize().expect("in range").min(ATOMS - 1);
        if l == u {
            target[l] += mass;
        } else {
            target[l] += mass * (T::of(u as f64) - b);
            target[u] += mass * (b - lo);
        }
    };
    if done {
        deposit(reward, T::one());
    } else {
        let a_star = online_next_q.select_action().index();
        for (i, &p) in next_q.probs(a_star).iter().enumerate() {
            deposit(reward + gamma_n * atom::<T>(i), p);
        }
    }
    target
}

/// Cross-entropy of `target` against `softmax(logits)`.
///
/// Returns `(is_weight * ce, ce)`: the weighted loss and the unweighted value used as priority.
pub fn c51_loss<T: Real>(logits: &[T], target: &[T], is_weight: T) -> Result<(T, T)> {
    if logits.len() != ATOMS || target.len() != ATOMS {
        return shape_err("c51_loss", &[logits.len()], &[target.len()]);
    }
    let lp = log_softmax_last(&Tensor::new(&[ATOMS], logits.to_vec())?);
    let ce: T = lp.data().iter().zip(target).map(|(&l, &t)| -t * l).sum();
    Ok((is_weight * ce, ce))
}
