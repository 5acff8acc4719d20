use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::agent::{ObsStack, StepFrame};
use crate::env::{
    floe_y, lane_y, named_rng, palette, render, true_masks, Animal, AnimalKind, EnvConfig, FloeSegment, GameState,
    Sprite, FLOE_ROWS, SPRITE, WATER_TOP, WIDTH,
};
use crate::error::{Error, Result};
use crate::masks::{segment, Channel, RuleSet};

use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioName {
    SurroundFish,
    SurroundCrabs,
    AliensGood,
    AliensBad,
    StrandedDeath1,
    StrandedDeath2,
    StrandedEscape,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 7] = [
        ScenarioName::SurroundFish,
        ScenarioName::SurroundCrabs,
        ScenarioName::AliensGood,
        ScenarioName::AliensBad,
        ScenarioName::StrandedDeath1,
        ScenarioName::StrandedDeath2,
        ScenarioName::StrandedEscape,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::SurroundFish => "surround_fish",
            ScenarioName::SurroundCrabs => "surround_crabs",
            ScenarioName::AliensGood => "aliens_good",
            ScenarioName::AliensBad => "aliens_bad",
            ScenarioName::StrandedDeath1 => "stranded_death1",
            ScenarioName::StrandedDeath2 => "stranded_death2",
            ScenarioName::StrandedEscape => "stranded_escape",
        }
    }

    fn is_stranded(self) -> bool {
        matches!(
            self,
            ScenarioName::StrandedDeath1 | ScenarioName::StrandedDeath2 | ScenarioName::StrandedEscape
        )
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown scenario `{s}`")))
    }
}

/// One modification of a base state.
#[derive(Clone, Debug, PartialEq)]
pub enum Edit {
    /// Adds a stationary creature with the given look and semantics at a sprite position.
    Place {
        x: i32,
        y: i32,
        sprite: Sprite,
        kind: AnimalKind,
    },
    RemoveAnimals,
    /// Removes every floe of a row except the one under the agent.
    IsolateRow {
        row: usize,
    },
    ClearRow {
        row: usize,
    },
    AddFloe {
        row: usize,
        x: i32,
        width: i32,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: ScenarioName,
    pub base: GameState,
    pub edits: Vec<Edit>,
}

/// Legal sprite positions for placed creatures: fully inside the water and the screen.
fn check_sprite(x: i32, y: i32) -> Result<()> {
    let ok_x = (0..=WIDTH as i32 - SPRITE).contains(&x);
    let ok_y = (WATER_TOP..=crate::env::HEIGHT as i32 - SPRITE).contains(&y);
    if ok_x && ok_y {
        Ok(())
    } else {
        Err(Error::Invalid(format!("sprite at ({x}, {y}) leaves the water region")))
    }
}

/// Applies the scenario's edits to its base state.
pub fn inject(scenario: &Scenario) -> Result<GameState> {
    apply(&scenario.base, &scenario.edits)
}

pub fn apply(base: &GameState, edits: &[Edit]) -> Result<GameState> {
    let mut s = base.clone();
    for e in edits {
        match *e {
            Edit::Place { x, y, sprite, kind } => {
                check_sprite(x, y)?;
                if kind == AnimalKind::Bear {
                    return Err(Error::Invalid("bears cannot be placed in the water".into()));
                }
                s.animals.push(Animal {
                    kind,
                    sprite,
                    x,
                    y,
                    vx: 0,
                });
            }
            Edit::RemoveAnimals => s.animals.retain(|a| a.kind == AnimalKind::Bear),
            Edit::IsolateRow { row } => {
                let rowref = s.floe_rows.get_mut(row).ok_or_else(|| bad_row(row))?;
                let cx = (s.agent.x + SPRITE / 2).rem_euclid(WIDTH as i32);
                let frame = s.frame;
                rowref.segments.retain(|seg| {
                    seg.pieces(frame)
                        .any(|(px, pw)| (cx - px).rem_euclid(WIDTH as i32) < pw)
                });
            }
            Edit::ClearRow { row } => s.floe_rows.get_mut(row).ok_or_else(|| bad_row(row))?.segments.clear(),
            Edit::AddFloe { row, x, width } => {
                if width <= 0 || width > WIDTH as i32 {
                    return Err(Error::Invalid(format!("floe width {width} out of range")));
                }
                let r = s.floe_rows.get_mut(row).ok_or_else(|| bad_row(row))?;
                let split = r.segments.first().is_some_and(|g| g.split);
                r.segments.push(FloeSegment {
                    x: x.rem_euclid(WIDTH as i32),
                    width,
                    visited: false,
                    split,
                });
            }
        }
    }
    Ok(s)
}

fn bad_row(row: usize) -> Error {
    Error::Invalid(format!("floe row {row} does not exist (rows 0..{FLOE_ROWS})"))
}

/// Segmentation rules for a scenario: the defaults, with the alien colour assigned to the channel
/// the scenario designates.
pub fn scenario_rules(name: ScenarioName) -> Result<RuleSet> {
    let rules = RuleSet::default();
    match name {
        ScenarioName::AliensGood => rules.with_color(Channel::GoodAnimals, palette::ALIEN),
        ScenarioName::AliensBad => rules.with_color(Channel::BadAnimals, palette::ALIEN),
        _ => Ok(rules),
    }
}

/// Moore-neighbourhood ring of sprite cells around the agent.
fn ring(s: &GameState) -> Vec<(i32, i32)> {
    let (ax, ay) = (s.agent.x, s.agent.y());
    let mut v = Vec::new();
    for dy in -1..=1 {
        for dx in -1..=1 {
            if (dx, dy) != (0, 0) {
                v.push((ax + dx * SPRITE, ay + dy * SPRITE));
            }
        }
    }
    v
}

/// Edits defining `name` on a base state prepared by [`base_state`].
pub fn scenario_edits(name: ScenarioName, base: &GameState) -> Vec<Edit> {
    let place = |sprite, kind| -> Vec<Edit> {
        ring(base)
            .into_iter()
            .map(|(x, y)| Edit::Place { x, y, sprite, kind })
            .collect()
    };
    match name {
        ScenarioName::SurroundFish => place(Sprite::Fish, AnimalKind::Good),
        ScenarioName::SurroundCrabs => place(Sprite::Crab, AnimalKind::Bad),
        ScenarioName::AliensGood => place(Sprite::Alien, AnimalKind::Good),
        ScenarioName::AliensBad => place(Sprite::Alien, AnimalKind::Bad),
        ScenarioName::StrandedDeath1 | ScenarioName::StrandedDeath2 | ScenarioName::StrandedEscape => {
            let row = base.agent.band as usize - 1;
            let mut edits = vec![Edit::RemoveAnimals];
            for r in 0..FLOE_ROWS {
                edits.push(if r == row {
                    Edit::IsolateRow { row: r }
                } else {
                    Edit::ClearRow { row: r }
                });
            }
            let (ax, ay) = (base.agent.x, base.agent.y());
            for dy in -1..=1 {
                for dx in [-1, 1] {
                    edits.push(Edit::Place {
                        x: ax + dx * SPRITE,
                        y: ay + dy * SPRITE,
                        sprite: Sprite::Crab,
                        kind: AnimalKind::Bad,
                    });
                }
            }
            let width = base.config.floe_width;
            let offset = match name {
                ScenarioName::StrandedEscape => Some(0),
                // Same floes, shifted half a screen away from the agent.
                ScenarioName::StrandedDeath1 => Some(WIDTH as i32 / 2),
                _ => None,
            };
            if let Some(off) = offset {
                for r in 0..row {
                    edits.push(Edit::AddFloe {
                        row: r,
                        x: ax + SPRITE / 2 - width / 2 + off,
                        width,
                    });
                }
            }
            edits
        }
    }
}

/// A base state for scenario injection: a game advanced from `seed`, then the agent set down on a
/// floe of the given band (animals cleared), at a column where the surrounding ring fits in the water.
pub fn base_state(env: &EnvConfig, seed: u64, band: u8) -> Result<GameState> {
    if !(2..=FLOE_ROWS as u8).contains(&band) {
        return Err(Error::Invalid(format!("band {band} has no room for a full ring")));
    }
    let mut rng = named_rng(seed, "scenario-base");
    let mut s = GameState::reset(env, seed)?;
    let warmup = rng.random_range(0..40);
    for _ in 0..warmup {
        let (next, _) = s.step(crate::env::Action::Noop)?;
        if next.terminal {
            break;
        }
        s = next;
    }
    s.animals.retain(|a| a.kind == AnimalKind::Bear);
    let row = band as usize - 1;
    let segs: Vec<(i32, i32)> = s.floe_rows[row].segments.iter().map(|g| (g.x, g.width)).collect();
    let start = rng.random_range(0..segs.len());
    for k in 0..segs.len() {
        let (x, w) = segs[(start + k) % segs.len()];
        let ax = x + w / 2 - SPRITE / 2;
        if (SPRITE..=WIDTH as i32 - 2 * SPRITE).contains(&ax) {
            s.agent.x = ax;
            s.agent.band = band;
            s.agent.airborne = false;
            debug_assert_eq!(s.agent.y(), lane_y(row));
            debug_assert!(floe_y(row) > s.agent.y());
            return Ok(s);
        }
    }
    Err(Error::Invalid(format!(
        "no floe in row {row} leaves room for the ring at seed {seed}"
    )))
}

pub fn build(name: ScenarioName, base: GameState) -> Scenario {
    let edits = scenario_edits(name, &base);
    Scenario { name, base, edits }
}

/// Base band used for each scenario family.
pub fn default_band(name: ScenarioName) -> u8 {
    if name.is_stranded() {
        3
    } else {
        2
    }
}

/// Packed, frame-repeated histories for the base and edited states, segmented with the scenario's
/// rules.
pub fn scenario_stacks(scenario: &Scenario) -> Result<(ObsStack, ObsStack)> {
    let rules = scenario_rules(scenario.name)?;
    let pack = |s: &GameState| -> Result<ObsStack> {
        let frame = render(s);
        let masks = segment(&frame, &rules)?;
        Ok(ObsStack::new(Arc::new(StepFrame::capture(&frame, &masks)?)))
    };
    let edited = inject(scenario)?;
    Ok((pack(&scenario.base)?, pack(&edited)?))
}

/// Checks that segmentation of the edited frame reproduces the edited ground truth.
pub fn check_consistency(scenario: &Scenario) -> Result<bool> {
    let edited = inject(scenario)?;
    let rules = scenario_rules(scenario.name)?;
    Ok(segment(&render(&edited), &rules)? == true_masks(&edited))
}
