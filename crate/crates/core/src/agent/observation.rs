use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::env::{self, Frame, REDUCED};
use crate::error::{shape_err, Error, Result};
use crate::masks::{group_moving, Channel, MaskSet};
use crate::numcore::Tensor;

/// Frames stacked per observation.
pub const STACK: usize = 4;
pub const PLANE: usize = REDUCED * REDUCED;

/// Which input planes the agent receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Pixels,
    PixelsObjects,
    Objects,
    Grouped,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Pixels,
        Condition::PixelsObjects,
        Condition::Objects,
        Condition::Grouped,
    ];

    pub fn channels(self) -> usize {
        match self {
            Condition::Pixels => STACK,
            Condition::PixelsObjects => STACK + STACK * Channel::COUNT,
            Condition::Objects => STACK * Channel::COUNT,
            Condition::Grouped => 2 * STACK,
        }
    }

    pub fn has_frames(self) -> bool {
        self != Condition::Objects
    }

    pub fn has_separate_masks(self) -> bool {
        matches!(self, Condition::PixelsObjects | Condition::Objects)
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Pixels => "pixels",
            Condition::PixelsObjects => "pixels_objects",
            Condition::Objects => "objects",
            Condition::Grouped => "grouped",
        }
    }

    /// Stable numeric tag used in checkpoints.
    pub fn tag(self) -> u32 {
        self as u32
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    /// Plane index of semantic mask `c` in stacked frame `t`, if the condition has separate masks.
    pub fn mask_plane(self, t: usize, c: Channel) -> Option<usize> {
        let offset = if self.has_frames() { STACK } else { 0 };
        self.has_separate_masks()
            .then(|| offset + t * Channel::COUNT + c.index())
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['+', '-'], "_");
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| Error::Invalid(format!("unknown condition `{s}`")))
    }
}

/// One reduced frame with its reduced masks, packed: luminance sums of the 2x2 cells and one bit
/// per mask channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepFrame {
    lum: Vec<u16>,
    bits: Vec<u8>,
}

impl StepFrame {
    pub fn capture(frame: &Frame, masks: &MaskSet) -> Result<Self> {
        if !masks.is_full_resolution() {
            return shape_err("StepFrame::capture", &[masks.side()], &[env::WIDTH]);
        }
        let reduced = masks.downscale();
        let mut bits = vec![0u8; PLANE];
        for c in Channel::ALL {
            for (b, &v) in bits.iter_mut().zip(reduced.plane(c)) {
                *b |= v << c.index();
            }
        }
        Ok(Self {
            lum: env::luminance_sums(frame),
            bits,
        })
    }

    fn write_luminance(&self, out: &mut [f32]) {
        for (o, &s) in out.iter_mut().zip(&self.lum) {
            *o = s as f32 / 1020.0;
        }
    }

    fn write_mask(&self, c: Channel, out: &mut [f32]) {
        for (o, &b) in out.iter_mut().zip(&self.bits) {
            *o = ((b >> c.index()) & 1) as f32;
        }
    }

    fn write_grouped(&self, out: &mut [f32]) {
        let moving: u8 = Channel::MOVING.iter().map(|c| 1u8 << c.index()).sum();
        for (o, &b) in out.iter_mut().zip(&self.bits) {
            *o = (b & moving != 0) as u8 as f32;
        }
    }
}

/// The last four packed frames, oldest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObsStack {
    frames: [Arc<StepFrame>; STACK],
}

impl ObsStack {
    /// Episode start: the first frame repeated.
    pub fn new(first: Arc<StepFrame>) -> Self {
        Self {
            frames: std::array::from_fn(|_| first.clone()),
        }
    }

    pub fn from_frames(frames: [Arc<StepFrame>; STACK]) -> Self {
        Self { frames }
    }

    /// Stack shifted by one with `next` as the newest frame.
    pub fn push(&self, next: Arc<StepFrame>) -> Self {
        let mut frames = self.frames.clone();
        frames.rotate_left(1);
        frames[STACK - 1] = next;
        Self { frames }
    }

    pub fn newest(&self) -> &Arc<StepFrame> {
        &self.frames[STACK - 1]
    }

    /// Writes the `[C, 32, 32]` planes for `cond` into `out`.
    pub fn write(&self, cond: Condition, out: &mut [f32]) {
        assert_eq!(out.len(), cond.channels() * PLANE);
        let mut planes = out.chunks_exact_mut(PLANE);
        if cond.has_frames() {
            for f in &self.frames {
                f.write_luminance(planes.next().expect("plane"));
            }
        }
        for f in &self.frames {
            match cond {
                Condition::Pixels => {}
                Condition::Grouped => f.write_grouped(planes.next().expect("plane")),
                Condition::PixelsObjects | Condition::Objects => {
                    for c in Channel::ALL {
                        f.write_mask(c, planes.next().expect("plane"));
                    }
                }
            }
        }
    }

    pub fn observation(&self, cond: Condition) -> Observation {
        let mut data = vec![0.0; cond.channels() * PLANE];
        self.write(cond, &mut data);
        Observation {
            condition: cond,
            tensor: Tensor::new(&[cond.channels(), REDUCED, REDUCED], data).expect("shape"),
        }
    }
}

/// Stacked input planes for one condition: frames oldest to newest, then each frame's masks in
/// canonical channel order (or its grouped moving-object mask).
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub condition: Condition,
    pub tensor: Tensor<f32>,
}

impl Observation {
    pub fn condition_check(&self, expected: Condition) -> Result<()> {
        if self.condition != expected {
            return Err(Error::Invalid(format!(
                "observation is in condition {} but the model reads {expected}",
                self.condition
            )));
        }
        Ok(())
    }
}

/// Builds an observation from the last four full-resolution frames and their masks.
pub fn assemble_observation(frames: &[Frame], masks: &[MaskSet], cond: Condition) -> Result<Observation> {
    if frames.len() != STACK || masks.len() != STACK {
        return Err(Error::Invalid(format!(
            "history must hold {STACK} frames and mask sets, got {} and {}",
            frames.len(),
            masks.len()
        )));
    }
    let packed: Vec<Arc<StepFrame>> = frames
        .iter()
        .zip(masks)
        .map(|(f, m)| StepFrame::capture(f, m).map(Arc::new))
        .collect::<Result<_>>()?;
    let stack = ObsStack::from_frames(packed.try_into().expect("four frames"));
    Ok(stack.observation(cond))
}

/// Reference assembly straight from the reduction primitives (no packing); used to cross-check.
pub fn assemble_unpacked(frames: &[Frame], masks: &[MaskSet], cond: Condition) -> Vec<f32> {
    let mut out = Vec::with_capacity(cond.channels() * PLANE);
    if cond.has_frames() {
        for f in frames {
            out.extend(env::downscale_luminance(f));
        }
    }
    for m in masks {
        let r = m.downscale();
        match cond {
            Condition::Pixels => {}
            Condition::Grouped => out.extend(group_moving(&r).iter().map(|&v| v as f32)),
            _ => {
                for c in Channel::ALL {
                    out.extend(r.plane(c).iter().map(|&v| v as f32));
                }
            }
        }
    }
    out
}

/// Zeroes the named mask channels in every stacked frame. Conditions without separate mask planes
/// have nothing nameable to omit and are rejected.
pub fn ablate_channels(obs: &Observation, channels: &BTreeSet<Channel>) -> Result<Observation> {
    if channels.is_empty() {
        return Ok(obs.clone());
    }
    if !obs.condition.has_separate_masks() {
        return Err(Error::Invalid(format!(
            "condition {} has no separate mask planes to omit",
            obs.condition
        )));
    }
    let planes: Vec<usize> = (0..STACK)
        .flat_map(|t| channels.iter().filter_map(move |&c| obs.condition.mask_plane(t, c)))
        .collect();
    ablate_planes(obs, &planes)
}

/// Zeroes raw plane indices; only mask planes may be omitted.
pub fn ablate_planes(obs: &Observation, planes: &[usize]) -> Result<Observation> {
    let cond = obs.condition;
    let frame_planes = if cond.has_frames() { STACK } else { 0 };
    for &p in planes {
        if p >= cond.channels() {
            return Err(Error::Invalid(format!("plane {p} out of range for {cond}")));
        }
        if p < frame_planes || !cond.has_separate_masks() {
            return Err(Error::Invalid(format!(
                "plane {p} of {cond} is not a semantic mask plane"
            )));
        }
    }
    let mut out = obs.clone();
    for &p in planes {
        out.tensor.data_mut()[p * PLANE..(p + 1) * PLANE].fill(0.0);
    }
    Ok(out)
}
