use rand::Rng;

use crate::error::{Error, Result};

/// Handle to a sampled slot; the stamp detects slots overwritten since sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleIndex {
    pub slot: usize,
    pub stamp: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorityConfig {
    pub alpha: f64,
    pub eps: f64,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self { alpha: 0.5, eps: 1e-2 }
    }
}

pub struct Batch<'a, I> {
    pub items: Vec<&'a I>,
    pub indices: Vec<SampleIndex>,
    pub weights: Vec<f64>,
}

/// Proportional prioritized replay over a ring buffer, with priorities kept in a binary sum-tree.
#[derive(Clone, Debug)]
pub struct SumTree<I> {
    capacity: usize,
    /// Heap layout: node 1 is the root, leaves live at `capacity..2*capacity`.
    nodes: Vec<f64>,
    items: Vec<Option<I>>,
    stamps: Vec<u64>,
    next: usize,
    len: usize,
    pushed: u64,
    max_priority: f64,
    config: PriorityConfig,
    stale_skips: u64,
}

impl<I> SumTree<I> {
    pub fn new(capacity: usize, config: PriorityConfig) -> Result<Self> {
        if capacity == 0 || !capacity.is_power_of_two() {
            return Err(Error::Config {
                field: "replay_capacity".into(),
                reason: format!("{capacity} is not a power of two"),
            });
        }
        Ok(Self {
            capacity,
            nodes: vec![0.0; 2 * capacity],
            items: (0..capacity).map(|_| None).collect(),
            stamps: vec![0; capacity],
            next: 0,
            len: 0,
            pushed: 0,
            max_priority: 0.0,
            config,
            stale_skips: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn priority(&self, slot: usize) -> f64 {
        self.nodes[self.capacity + slot]
    }

    pub fn item(&self, slot: usize) -> Option<&I> {
        self.items.get(slot).and_then(Option::as_ref)
    }

    /// Number of priority updates dropped because their slot had been overwritten.
    pub fn stale_skips(&self) -> u64 {
        self.stale_skips
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    /// Internal node value, for consistency checks. Node 1 is the root.
    pub fn node(&self, idx: usize) -> f64 {
        self.nodes[idx]
    }

    fn set(&mut self, slot: usize, p: f64) {
        let mut i = self.capacity + slot;
        self.nodes[i] = p;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Inserts at the current maximum priority (1 for an empty tree), overwriting the oldest slot
    /// when full. Returns the slot used.
    pub fn push(&mut self, item: I) -> usize {
        let p = if self.max_priority > 0.0 {
            self.max_priority
        } else {
            1.0
        };
        self.max_priority = p;
        let slot = self.next;
        self.items[slot] = Some(item);
        self.pushed += 1;
        self.stamps[slot] = self.pushed;
        self.set(slot, p);
        self.next = (self.next + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        slot
    }

    /// Slot whose cumulative-priority interval contains `value`.
    pub fn find(&self, value: f64) -> usize {
        let mut v = value.clamp(0.0, self.total());
        let mut i = 1;
        while i < self.capacity {
            let left = self.nodes[2 * i];
            if v < left || self.nodes[2 * i + 1] <= 0.0 {
                i *= 2;
            } else {
                v -= left;
                i = 2 * i + 1;
            }
        }
        i - self.capacity
    }

    /// Stratified proportional sample: one uniform draw in each of `batch` equal slices of the
    /// total priority mass. Importance weights are `(N P(i))^-beta` scaled by the batch maximum.
    pub fn sample(&self, batch: usize, beta: f64, rng: &mut impl Rng) -> Result<Batch<'_, I>> {
        if batch == 0 || self.len < batch {
            return Err(Error::Invalid(format!(
                "cannot sample {batch} transitions from a buffer holding {}",
                self.len
            )));
        }
        let total = self.total();
        let seg = total / batch as f64;
        let mut items = Vec::with_capacity(batch);
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for k in 0..batch {
            let u: f64 = rng.random();
            let slot = self.find(seg * (k as f64 + u));
            let p = self.priority(slot);
            let item = self.items[slot]
                .as_ref()
                .ok_or_else(|| Error::Invalid(format!("sampled empty slot {slot}")))?;
            items.push(item);
            indices.push(SampleIndex {
                slot,
                stamp: self.stamps[slot],
            });
            weights.push((self.len as f64 * p / total).powf(-beta));
        }
        let wmax = weights.iter().copied().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= wmax;
        }
        Ok(Batch {
            items,
            indices,
            weights,
        })
    }

    /// Sets each sampled slot's priority to `(loss + eps)^alpha`; overwritten slots are skipped.
    pub fn update_priorities(&mut self, indices: &[SampleIndex], losses: &[f64]) -> Result<()> {
        if indices.len() != losses.len() {
            return Err(Error::Invalid(format!(
                "{} indices but {} losses",
                indices.len(),
                losses.len()
            )));
        }
        for (idx, &loss) in indices.iter().zip(losses) {
            if idx.slot >= self.capacity {
                return Err(Error::Invalid(format!("slot {} out of range", idx.slot)));
            }
            if !(loss.is_finite() && loss >= 0.0) {
                return Err(Error::NonFinite(format!("priority loss {loss} at slot {}", idx.slot)));
            }
            if self.stamps[idx.slot] != idx.stamp || self.items[idx.slot].is_none() {
                self.stale_skips += 1;
                continue;
            }
            let p = (loss + self.config.eps).powf(self.config.alpha);
            self.max_priority = self.max_priority.max(p);
            self.set(idx.slot, p);
        }
        Ok(())
    }
}
