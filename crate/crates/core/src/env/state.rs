use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{EnvConfig, WIDTH};

/// Frames simulated per agent step; the action is repeated on each of them.
pub const FRAMES_PER_STEP: u32 = 4;
pub const SPRITE: i32 = 4;
pub const HUD_ROWS: i32 = 4;
pub const LAND_TOP: i32 = 4;
pub const WATER_TOP: i32 = 12;
/// Top row of the agent sprite while standing on land.
pub const LAND_LANE_Y: i32 = 8;
pub const FLOE_ROWS: usize = 4;
pub const FLOE_THICKNESS: i32 = 3;
const BAND_HEIGHT: i32 = 13;
pub const IGLOO_X: i32 = 48;
pub const IGLOO_Y: i32 = 4;
pub const IGLOO_PIECES: u8 = 8;
pub const SPAWN_X: i32 = 8;

pub const FLOE_REWARD: f64 = 10.0;
pub const FISH_REWARD: f64 = 20.0;
pub const LEVEL_REWARD: f64 = 160.0;
/// Remaining timer frames are divided by this for the level bonus.
pub const TIMER_BONUS_DIVISOR: u32 = 10;

/// Top row of the lane above floe row `row` where the agent and animals move.
pub const fn lane_y(row: usize) -> i32 {
    WATER_TOP + BAND_HEIGHT * row as i32 + 3
}

/// Top row of the floes in row `row`.
pub const fn floe_y(row: usize) -> i32 {
    lane_y(row) + SPRITE
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Noop = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [Action::Noop, Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Player position: `band` 0 is the shore, 1..=4 the floe rows top to bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Agent {
    pub x: i32,
    pub band: u8,
    pub airborne: bool,
}

impl Agent {
    pub fn y(&self) -> i32 {
        match self.band {
            0 => LAND_LANE_Y,
            b => lane_y(b as usize - 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FloeSegment {
    pub x: i32,
    pub width: i32,
    pub visited: bool,
    pub split: bool,
}

impl FloeSegment {
    /// Visible pieces `(x, width)`: one, or two drifting halves when split.
    pub fn pieces(&self, frame: u64) -> impl Iterator<Item = (i32, i32)> {
        const GAPS: [i32; 4] = [1, 2, 3, 2];
        let (first, second) = if self.split {
            let half = self.width / 2 - 1;
            let gap = GAPS[((frame / 8) % 4) as usize];
            ((self.x, half), Some((self.x + half + gap, half)))
        } else {
            ((self.x, self.width), None)
        };
        std::iter::once(first).chain(second)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FloeRow {
    pub segments: Vec<FloeSegment>,
    /// Signed pixels per env-frame.
    pub velocity: i32,
}

impl FloeRow {
    pub fn visited(&self) -> bool {
        !self.segments.is_empty() && self.segments.iter().all(|s| s.visited)
    }

    /// Whether column `cx` (wrapped) lies on a floe piece at `frame`.
    pub fn supports(&self, cx: i32, frame: u64) -> bool {
        self.segments
            .iter()
            .any(|s| s.pieces(frame).any(|(px, pw)| (cx - px).rem_euclid(WIDTH as i32) < pw))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnimalKind {
    Bad,
    Good,
    Bear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sprite {
    Crab,
    Bird,
    Fish,
    Bear,
    /// Novel sprite used only by scenario injection.
    Alien,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Animal {
    pub kind: AnimalKind,
    pub sprite: Sprite,
    pub x: i32,
    pub y: i32,
    pub vx: i32,
}

fn overlaps(ax: i32, ay: i32, bx: i32, by: i32) -> bool {
    (ax - bx).abs() < SPRITE && (ay - by).abs() < SPRITE
}

/// Set of events raised during one agent step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Events(u8);

impl Events {
    pub const FLOE_VISIT: Events = Events(1);
    pub const FISH_EATEN: Events = Events(2);
    pub const LIFE_LOST: Events = Events(4);
    pub const LEVEL_COMPLETE: Events = Events(8);
    pub const EPISODE_END: Events = Events(16);

    pub fn empty() -> Self {
        Events(0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, other: Events) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: Events) {
        self.0 |= other.0;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepOutcome {
    /// Unclipped game reward for this step.
    pub reward: f64,
    pub events: Events,
    pub done: bool,
}

/// Complete simulator state. Frames and ground-truth masks are rendered from this alone.
#[derive(Clone, Debug, PartialEq)]
pub struct GameState {
    pub config: EnvConfig,
    pub level: u32,
    /// Remaining env-frames for the current life.
    pub timer: u32,
    pub lives: u8,
    pub agent: Agent,
    pub floe_rows: Vec<FloeRow>,
    pub animals: Vec<Animal>,
    pub igloo_pieces: u8,
    pub score: u64,
    /// Env-frames elapsed since reset.
    pub frame: u64,
    pub terminal: bool,
    /// Dedicated stream for animal spawns, so floe motion never depends on it.
    pub animal_rng: ChaCha8Rng,
}

/// Derives an independent generator from a seed and a stream name.
pub fn named_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    // FNV-1a over the name, folded into the seed with a splitmix finaliser.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

impl GameState {
    /// Fresh game at level 1: full lives, empty igloo, agent on the shore.
    pub fn reset(config: &EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut s = Self {
            config: config.clone(),
            level: 1,
            timer: config.timer_frames,
            lives: config.lives,
            agent: Agent {
                x: SPAWN_X,
                band: 0,
                airborne: false,
            },
            floe_rows: Vec::new(),
            animals: Vec::new(),
            igloo_pieces: 0,
            score: 0,
            frame: 0,
            terminal: false,
            animal_rng: named_rng(seed, "animals"),
        };
        s.start_level();
        Ok(s)
    }

    pub fn floe_speed(level: u32) -> i32 {
        1 + level as i32
    }

    pub fn is_dark(&self) -> bool {
        self.level >= self.config.dark_level
    }

    fn start_level(&mut self) {
        let speed = Self::floe_speed(self.level);
        let split = self.level >= self.config.split_level;
        let n = self.config.floes_per_row;
        let spacing = WIDTH as i32 / n as i32;
        self.floe_rows = (0..FLOE_ROWS)
            .map(|r| FloeRow {
                segments: (0..n)
                    .map(|k| FloeSegment {
                        x: (7 * r as i32 + spacing * k as i32).rem_euclid(WIDTH as i32),
                        width: self.config.floe_width,
                        visited: false,
                        split,
                    })
                    .collect(),
                velocity: if r % 2 == 0 { speed } else { -speed },
            })
            .collect();
        self.igloo_pieces = 0;
        self.timer = self.config.timer_frames;
        self.agent = Agent {
            x: SPAWN_X,
            band: 0,
            airborne: false,
        };
        self.animals.clear();
        if self.is_dark() {
            self.animals.push(Animal {
                kind: AnimalKind::Bear,
                sprite: Sprite::Bear,
                x: WIDTH as i32 - SPRITE - 4,
                y: LAND_LANE_Y,
                vx: -1,
            });
        }
    }

    fn lose_life(&mut self, out: &mut StepOutcome) {
        out.events.insert(Events::LIFE_LOST);
        self.lives -= 1;
        if self.lives == 0 {
            self.terminal = true;
            out.events.insert(Events::EPISODE_END);
            out.done = true;
            return;
        }
        self.agent = Agent {
            x: SPAWN_X,
            band: 0,
            airborne: false,
        };
        self.timer = self.config.timer_frames;
        for a in self.animals.iter_mut().filter(|a| a.kind == AnimalKind::Bear) {
            a.x = WIDTH as i32 - SPRITE - 4;
            a.vx = -1;
        }
    }

    fn agent_supported(&self) -> bool {
        match self.agent.band {
            0 => true,
            b => {
                let cx = (self.agent.x + SPRITE / 2).rem_euclid(WIDTH as i32);
                self.floe_rows[b as usize - 1].supports(cx, self.frame)
            }
        }
    }

    fn under_igloo(&self) -> bool {
        let cx = self.agent.x + SPRITE / 2;
        self.agent.band == 0 && (IGLOO_X..IGLOO_X + 12).contains(&cx)
    }

    fn add_score(&mut self, out: &mut StepOutcome, reward: f64) {
        out.reward += reward;
        self.score += reward as u64;
    }

    fn visit_row(&mut self, row: usize, out: &mut StepOutcome) {
        if self.floe_rows[row].visited() || self.floe_rows[row].segments.is_empty() {
            return;
        }
        for seg in &mut self.floe_rows[row].segments {
            seg.visited = true;
        }
        out.events.insert(Events::FLOE_VISIT);
        self.add_score(out, FLOE_REWARD);
        self.igloo_pieces = (self.igloo_pieces + 1).min(IGLOO_PIECES);
        // Once every row is blue the whole set turns white again, as in the original game.
        if self.floe_rows.iter().all(FloeRow::visited) {
            for seg in self.floe_rows.iter_mut().flat_map(|r| r.segments.iter_mut()) {
                seg.visited = false;
            }
        }
    }

    fn move_animals(&mut self) {
        for a in &mut self.animals {
            a.x += a.vx;
            if a.kind == AnimalKind::Bear {
                if a.x <= 0 {
                    a.vx = 1;
                } else if a.x >= WIDTH as i32 - SPRITE {
                    a.vx = -1;
                }
            }
        }
        self.animals.retain(|a| a.x > -SPRITE && a.x < WIDTH as i32);
        let roaming = self.animals.iter().filter(|a| a.kind != AnimalKind::Bear).count();
        // Draws are taken unconditionally so the stream advances one fixed block per frame.
        let spawn = self.animal_rng.random::<f64>() < self.config.spawn_rate;
        let row = self.animal_rng.random_range(0..FLOE_ROWS);
        let rightward = self.animal_rng.random::<bool>();
        let fish = self.animal_rng.random::<f64>() < self.config.fish_fraction;
        if !spawn || roaming >= self.config.max_animals {
            return;
        }
        let (x, vx) = if rightward {
            (-SPRITE + 1, 1)
        } else {
            (WIDTH as i32 - 1, -1)
        };
        let y = lane_y(row);
        if self.animals.iter().any(|a| a.y == y && (a.x - x).abs() < 2 * SPRITE) {
            return;
        }
        let (kind, sprite) = match (fish, row % 2) {
            (true, _) => (AnimalKind::Good, Sprite::Fish),
            (false, 0) => (AnimalKind::Bad, Sprite::Crab),
            (false, _) => (AnimalKind::Bad, Sprite::Bird),
        };
        self.animals.push(Animal { kind, sprite, x, y, vx });
    }

    /// Resolves contacts between the agent and animals. Returns true if a life was lost.
    fn collide(&mut self, out: &mut StepOutcome) -> bool {
        let (ax, ay) = (self.agent.x, self.agent.y());
        let mut deadly = false;
        let mut eaten = 0;
        self.animals.retain(|a| {
            if !overlaps(ax, ay, a.x, a.y) {
                return true;
            }
            match a.kind {
                AnimalKind::Good => {
                    eaten += 1;
                    false
                }
                AnimalKind::Bad | AnimalKind::Bear => {
                    deadly = true;
                    true
                }
            }
        });
        for _ in 0..eaten {
            out.events.insert(Events::FISH_EATEN);
            self.add_score(out, FISH_REWARD);
        }
        if deadly {
            self.lose_life(out);
        }
        deadly
    }

    /// Advances one agent step (four env-frames with the action repeated).
    pub fn step(&self, action: Action) -> Result<(GameState, StepOutcome)> {
        if self.terminal {
            return Err(Error::Terminal);
        }
        let mut s = self.clone();
        let mut out = StepOutcome::default();
        let mut frozen = false;
        let mut jump_to = None;
        match action {
            Action::Up if s.agent.band == 0 => {
                if s.igloo_pieces >= IGLOO_PIECES && s.under_igloo() {
                    out.events.insert(Events::LEVEL_COMPLETE);
                    let bonus = (s.timer / TIMER_BONUS_DIVISOR) as f64;
                    s.add_score(&mut out, LEVEL_REWARD + bonus);
                    s.level += 1;
                    s.start_level();
                    frozen = true;
                }
            }
            Action::Up => jump_to = Some(s.agent.band - 1),
            Action::Down if (s.agent.band as usize) < FLOE_ROWS => jump_to = Some(s.agent.band + 1),
            _ => {}
        }
        let walk = match action {
            Action::Left => -1,
            Action::Right => 1,
            _ => 0,
        };
        for f in 0..FRAMES_PER_STEP {
            s.frame += 1;
            s.timer = s.timer.saturating_sub(1);
            for row in &mut s.floe_rows {
                for seg in &mut row.segments {
                    seg.x = (seg.x + row.velocity).rem_euclid(WIDTH as i32);
                }
            }
            let mut landed = false;
            if !frozen {
                let band = s.agent.band;
                if band > 0 && !s.agent.airborne {
                    let v = s.floe_rows[band as usize - 1].velocity;
                    s.agent.x = (s.agent.x + v).rem_euclid(WIDTH as i32);
                }
                if let Some(target) = jump_to {
                    s.agent.airborne = f + 1 < FRAMES_PER_STEP;
                    if !s.agent.airborne {
                        s.agent.band = target;
                        if target == 0 {
                            s.agent.x = s.agent.x.clamp(0, WIDTH as i32 - SPRITE);
                        }
                        landed = true;
                    }
                } else if walk != 0 {
                    s.agent.x = if band == 0 {
                        (s.agent.x + walk).clamp(0, WIDTH as i32 - SPRITE)
                    } else {
                        (s.agent.x + walk).rem_euclid(WIDTH as i32)
                    };
                }
            }
            s.move_animals();
            if frozen {
                continue;
            }
            if !s.agent.airborne {
                if !s.agent_supported() {
                    s.lose_life(&mut out);
                    frozen = true;
                    continue;
                }
                if landed && s.agent.band > 0 {
                    s.visit_row(s.agent.band as usize - 1, &mut out);
                }
                if s.collide(&mut out) {
                    frozen = true;
                    continue;
                }
            }
            if s.timer == 0 {
                s.lose_life(&mut out);
                frozen = true;
            }
        }
        Ok((s, out))
    }
}
