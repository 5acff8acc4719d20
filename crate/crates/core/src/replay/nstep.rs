use std::collections::VecDeque;

use crate::agent::ObsStack;

/// One stored experience: `obs --action--> ... --n steps--> next_obs`.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: ObsStack,
    pub action: usize,
    /// Discounted sum of the (clipped) rewards inside the fold.
    pub ret: f64,
    /// `gamma^m`, where `m` is the number of rewards folded.
    pub gamma_n: f64,
    pub next_obs: ObsStack,
    pub done: bool,
}

/// Folds a time-ordered reward window: returns `(R, gamma^m, done)` where the sum stops after
/// the first terminal step or after all of `steps`.
pub fn fold_return(steps: &[(f64, bool)], gamma: f64) -> (f64, f64, bool) {
    let mut ret = 0.0;
    let mut disc = 1.0;
    for &(r, done) in steps {
        ret += disc * r;
        disc *= gamma;
        if done {
            return (ret, disc, true);
        }
    }
    (ret, disc, false)
}

/// Buffers the last `n` steps and emits n-step transitions as they become complete.
#[derive(Clone, Debug)]
pub struct NStepFolder {
    n: usize,
    gamma: f64,
    pending: VecDeque<(ObsStack, usize, f64)>,
}

impl NStepFolder {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1, "n-step horizon must be positive");
        Self {
            n,
            gamma,
            pending: VecDeque::with_capacity(n),
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Records one environment step. A terminal step flushes every buffered start state with a
    /// truncated return; otherwise at most one transition comes out.
    pub fn push(
        &mut self,
        obs: ObsStack,
        action: usize,
        reward: f64,
        next_obs: &ObsStack,
        done: bool,
    ) -> Vec<Transition> {
        self.pending.push_back((obs, action, reward));
        let mut out = Vec::new();
        if done {
            while !self.pending.is_empty() {
                out.push(self.emit(next_obs, true));
                self.pending.pop_front();
            }
        } else if self.pending.len() == self.n {
            out.push(self.emit(next_obs, false));
            self.pending.pop_front();
        }
        out
    }

    fn emit(&self, next_obs: &ObsStack, done: bool) -> Transition {
        let last = self.pending.len() - 1;
        let steps: Vec<(f64, bool)> = self
            .pending
            .iter()
            .enumerate()
            .map(|(k, &(_, _, r))| (r, done && k == last))
            .collect();
        let (ret, gamma_n, done) = fold_return(&steps, self.gamma);
        let (obs, action, _) = &self.pending[0];
        Transition {
            obs: obs.clone(),
            action: *action,
            ret,
            gamma_n,
            next_obs: next_obs.clone(),
            done,
        }
    }

    /// Drops buffered steps (used when an episode is cut without a terminal).
    pub fn clear(&mut self) {
        self.pending.clear();
    }
}
