//! Rule-based object segmentation: colour membership plus allow/deny screen regions.

use std::fmt;
use std::str::FromStr;

use crate::env::{self, palette, Frame, HEIGHT, WIDTH};
use crate::error::{Error, Result};

/// The eight semantic mask channels, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Agent = 0,
    Land = 1,
    UnvisitedFloes = 2,
    VisitedFloes = 3,
    Igloo = 4,
    BadAnimals = 5,
    Bear = 6,
    GoodAnimals = 7,
}

impl Channel {
    pub const COUNT: usize = 8;
    pub const ALL: [Channel; 8] = [
        Channel::Agent,
        Channel::Land,
        Channel::UnvisitedFloes,
        Channel::VisitedFloes,
        Channel::Igloo,
        Channel::BadAnimals,
        Channel::Bear,
        Channel::GoodAnimals,
    ];
    /// Channels of objects that move (everything except land and igloo).
    pub const MOVING: [Channel; 6] = [
        Channel::Agent,
        Channel::UnvisitedFloes,
        Channel::VisitedFloes,
        Channel::BadAnimals,
        Channel::Bear,
        Channel::GoodAnimals,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Agent => "agent",
            Channel::Land => "land",
            Channel::UnvisitedFloes => "unvisited_floes",
            Channel::VisitedFloes => "visited_floes",
            Channel::Igloo => "igloo",
            Channel::BadAnimals => "bad_animals",
            Channel::Bear => "bear",
            Channel::GoodAnimals => "good_animals",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown channel `{s}`")))
    }
}

/// Eight binary planes of equal side length.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskSet {
    side: usize,
    planes: Vec<Vec<u8>>,
}

impl MaskSet {
    pub fn empty(side: usize) -> Self {
        Self {
            side,
            planes: vec![vec![0; side * side]; Channel::COUNT],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn is_full_resolution(&self) -> bool {
        self.side == WIDTH
    }

    pub fn plane(&self, c: Channel) -> &[u8] {
        &self.planes[c.index()]
    }

    pub fn plane_mut(&mut self, c: Channel) -> &mut [u8] {
        &mut self.planes[c.index()]
    }

    pub fn count(&self, c: Channel) -> usize {
        self.plane(c).iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.iter().all(|p| p.iter().all(|&v| v == 0))
    }

    /// Max-pools every full-resolution plane to `32x32`.
    pub fn downscale(&self) -> MaskSet {
        assert!(self.is_full_resolution(), "already reduced");
        MaskSet {
            side: env::REDUCED,
            planes: self.planes.iter().map(|p| env::downscale_mask(p)).collect(),
        }
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// How one channel is recovered from pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationRule {
    pub channel: Channel,
    pub colors: Vec<u8>,
    pub allow: Vec<Rect>,
    pub deny: Vec<Rect>,
}

impl SegmentationRule {
    pub fn matches(&self, x: usize, y: usize, color: u8) -> bool {
        self.colors.contains(&color)
            && self.allow.iter().any(|r| r.contains(x, y))
            && !self.deny.iter().any(|r| r.contains(x, y))
    }
}

/// A rule per channel. Parsed from and written to the flat rule-file format:
///
/// ```text
/// # channel  colours  allowed rects          denied rects
/// agent      7        allow[0,0,64,64]       deny[0,0,64,4]
/// bad_animals 8,9     allow[0,12,64,52]      deny[]
/// ```
///
/// Rectangles are `x,y,w,h`; several are separated by `;`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSet {
    pub rules: Vec<SegmentationRule>,
}

const SCREEN: Rect = Rect::new(0, 0, WIDTH, HEIGHT);
const HUD: Rect = Rect::new(0, 0, WIDTH, env::HUD_ROWS as usize);
const SHORE: Rect = Rect::new(
    0,
    env::LAND_TOP as usize,
    WIDTH,
    (env::WATER_TOP - env::LAND_TOP) as usize,
);
const WATER: Rect = Rect::new(0, env::WATER_TOP as usize, WIDTH, HEIGHT - env::WATER_TOP as usize);

impl Default for RuleSet {
    /// Rules matching the built-in palette exactly.
    fn default() -> Self {
        let rule = |channel, colors: &[u8], allow: &[Rect], deny: &[Rect]| SegmentationRule {
            channel,
            colors: colors.to_vec(),
            allow: allow.to_vec(),
            deny: deny.to_vec(),
        };
        Self {
            rules: vec![
                // Remaining lives are drawn in the player's colour inside the status strip.
                rule(Channel::Agent, &[palette::AGENT], &[SCREEN], &[HUD]),
                rule(Channel::Land, &[palette::LAND], &[SHORE], &[]),
                // The score is drawn in floe white.
                rule(Channel::UnvisitedFloes, &[palette::FLOE_WHITE], &[WATER], &[]),
                rule(Channel::VisitedFloes, &[palette::FLOE_BLUE], &[WATER], &[]),
                rule(Channel::Igloo, &[palette::IGLOO], &[SHORE], &[]),
                rule(Channel::BadAnimals, &[palette::CRAB, palette::BIRD], &[WATER], &[]),
                rule(Channel::Bear, &[palette::BEAR], &[SHORE], &[]),
                rule(Channel::GoodAnimals, &[palette::FISH], &[WATER], &[]),
            ],
        }
    }
}

fn parse_rects(field: &str, key: &str, line: usize) -> Result<Vec<Rect>> {
    let err = |reason: String| Error::Parse { line, reason };
    let inner = field
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('['))
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| err(format!("expected `{key}[...]`, found `{field}`")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(';')
        .map(|r| {
            let v: Vec<usize> = r
                .split(',')
                .map(|n| n.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("bad rectangle `{r}`: {e}")))?;
            match v[..] {
                [x, y, w, h] => Ok(Rect::new(x, y, w, h)),
                _ => Err(err(format!("rectangle `{r}` needs four numbers"))),
            }
        })
        .collect()
}

fn fmt_rects(rects: &[Rect]) -> String {
    rects
        .iter()
        .map(|r| format!("{},{},{},{}", r.x, r.y, r.w, r.h))
        .collect::<Vec<_>>()
        .join(";")
}

impl RuleSet {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let channel: Channel = fields[0].parse().map_err(|e: Error| Error::Parse {
                line,
                reason: e.to_string(),
            })?;
            let colors = fields[1]
                .split(',')
                .map(|c| match c.trim().parse::<u8>() {
                    Ok(v) if (v as usize) < palette::PALETTE_SIZE => Ok(v),
                    _ => Err(Error::Parse {
                        line,
                        reason: format!("bad palette index `{c}`"),
                    }),
                })
                .collect::<Result<Vec<u8>>>()?;
            rules.push(SegmentationRule {
                channel,
                colors,
                allow: parse_rects(fields[2], "allow", line)?,
                deny: parse_rects(fields[3], "deny", line)?,
            });
        }
        Ok(Self { rules })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# channel colours allow[x,y,w,h;...] deny[x,y,w,h;...]\n");
        for r in &self.rules {
            let colors: Vec<String> = r.colors.iter().map(u8::to_string).collect();
            out.push_str(&format!(
                "{} {} allow[{}] deny[{}]\n",
                r.channel,
                colors.join(","),
                fmt_rects(&r.allow),
                fmt_rects(&r.deny)
            ));
        }
        out
    }

    pub fn rule(&self, c: Channel) -> Option<&SegmentationRule> {
        self.rules.iter().find(|r| r.channel == c)
    }

    /// Adds a colour to a channel's accepted set (used to label injected novel sprites).
    pub fn with_color(mut self, c: Channel, color: u8) -> Result<Self> {
        let rule = self
            .rules
            .iter_mut()
            .find(|r| r.channel == c)
            .ok_or_else(|| Error::MissingRule(c.name().into()))?;
        if !rule.colors.contains(&color) {
            rule.colors.push(color);
        }
        Ok(self)
    }
}

/// Full-resolution masks recovered from pixels: a pixel belongs to channel `c` iff its colour is
/// accepted by `c`'s rule, it lies in an allowed rectangle and in no denied rectangle.
pub fn segment(frame: &Frame, rules: &RuleSet) -> Result<MaskSet> {
    let ordered: Vec<&SegmentationRule> = Channel::ALL
        .iter()
        .map(|&c| rules.rule(c).ok_or_else(|| Error::MissingRule(c.name().into())))
        .collect::<Result<_>>()?;
    let mut out = MaskSet::empty(WIDTH);
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let color = frame.get(x, y);
            for (ch, rule) in ordered.iter().enumerate() {
                if rule.matches(x, y, color) {
                    out.planes[ch][y * WIDTH + x] = 1;
                }
            }
        }
    }
    Ok(out)
}

/// Union of the six moving-object channels.
pub fn group_moving(m: &MaskSet) -> Vec<u8> {
    let mut out = vec![0u8; m.side * m.side];
    for c in Channel::MOVING {
        for (o, &v) in out.iter_mut().zip(m.plane(c)) {
            *o |= v;
        }
    }
    out
}
