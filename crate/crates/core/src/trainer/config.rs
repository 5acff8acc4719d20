use std::fmt::Write as _;
use std::str::FromStr;

use crate::agent::Condition;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::numcore::AdamConfig;

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub condition: Condition,
    pub seed: u64,
    pub total_steps: u64,
    pub learn_start: u64,
    pub train_every: u64,
    pub target_sync_every: u64,
    pub gamma: f64,
    pub n_step: usize,
    pub adam: AdamConfig,
    pub replay_capacity: usize,
    pub priority_alpha: f64,
    pub priority_beta_start: f64,
    pub priority_eps: f64,
    pub batch_size: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub noop_max: u32,
    /// Probability of a uniformly random action while training; 0 leaves exploration to the
    /// parameter noise alone.
    pub epsilon: f64,
    /// Rewards are clipped to `[-reward_clip, reward_clip]` for learning.
    pub reward_clip: f64,
    /// Global gradient-norm bound; 0 disables clipping.
    pub grad_clip: f64,
    /// Treat a lost life as the end of the episode for bootstrapping purposes.
    pub life_loss_terminal: bool,
    pub replications: usize,
    pub env: EnvConfig,
}

impl Config {
    /// Desk-scale defaults for the given condition and seed.
    pub fn new(condition: Condition, seed: u64) -> Self {
        Self {
            condition,
            seed,
            total_steps: 200_000,
            learn_start: 5_000,
            train_every: 4,
            target_sync_every: 2_000,
            gamma: 0.99,
            n_step: 3,
            adam: AdamConfig::default(),
            replay_capacity: 1 << 17,
            priority_alpha: 0.5,
            priority_beta_start: 0.4,
            priority_eps: 1e-2,
            batch_size: 32,
            eval_every: 10_000,
            eval_episodes: 10,
            noop_max: 30,
            epsilon: 0.0,
            reward_clip: 1.0,
            grad_clip: 10.0,
            life_loss_terminal: true,
            replications: 3,
            env: EnvConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::Config {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if self.total_steps < self.learn_start {
            return bad("total_steps", "must be at least learn_start");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if self.n_step == 0 {
            return bad("n_step", "must be positive");
        }
        if self.train_every == 0 || self.target_sync_every == 0 || self.eval_every == 0 {
            return bad("train_every", "cadences must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !self.replay_capacity.is_power_of_two() || self.replay_capacity < self.batch_size {
            return bad("replay_capacity", "must be a power of two no smaller than batch_size");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", "must be a probability");
        }
        if !(0.0..=1.0).contains(&self.priority_beta_start) {
            return bad("priority_beta_start", "must lie in [0, 1]");
        }
        if !(self.priority_alpha >= 0.0 && self.priority_eps > 0.0) {
            return bad("priority_alpha", "alpha must be non-negative and eps positive");
        }
        if !(self.adam.lr > 0.0 && self.adam.eps > 0.0) {
            return bad("lr", "learning rate and eps must be positive");
        }
        if !(self.reward_clip > 0.0 && self.grad_clip >= 0.0) {
            return bad("reward_clip", "clip bounds must be positive");
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1");
        }
        self.env.validate()
    }

    /// `key = value` text that parses back to this configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let e = &self.env;
        vec![
            ("condition", self.condition.to_string()),
            ("seed", self.seed.to_string()),
            ("total_steps", self.total_steps.to_string()),
            ("learn_start", self.learn_start.to_string()),
            ("train_every", self.train_every.to_string()),
            ("target_sync_every", self.target_sync_every.to_string()),
            ("gamma", self.gamma.to_string()),
            ("n_step", self.n_step.to_string()),
            ("lr", self.adam.lr.to_string()),
            ("adam_beta1", self.adam.beta1.to_string()),
            ("adam_beta2", self.adam.beta2.to_string()),
            ("adam_eps", self.adam.eps.to_string()),
            ("replay_capacity", self.replay_capacity.to_string()),
            ("priority_alpha", self.priority_alpha.to_string()),
            ("priority_beta_start", self.priority_beta_start.to_string()),
            ("priority_eps", self.priority_eps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("noop_max", self.noop_max.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("reward_clip", self.reward_clip.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("life_loss_terminal", self.life_loss_terminal.to_string()),
            ("replications", self.replications.to_string()),
            ("env.timer_frames", e.timer_frames.to_string()),
            ("env.lives", e.lives.to_string()),
            ("env.floes_per_row", e.floes_per_row.to_string()),
            ("env.floe_width", e.floe_width.to_string()),
            ("env.spawn_rate", e.spawn_rate.to_string()),
            ("env.fish_fraction", e.fish_fraction.to_string()),
            ("env.max_animals", e.max_animals.to_string()),
            ("env.dark_level", e.dark_level.to_string()),
            ("env.split_level", e.split_level.to_string()),
        ]
    }

    /// Sets one key; the error string explains a malformed value.
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<V: FromStr>(v: &str) -> std::result::Result<V, String>
        where
            V::Err: std::fmt::Display,
        {
            v.parse::<V>().map_err(|e| format!("malformed value `{v}`: {e}"))
        }
        let e = &mut self.env;
        match key {
            "condition" => self.condition = p(value)?,
            "seed" => self.seed = p(value)?,
            "total_steps" => self.total_steps = p(value)?,
            "learn_start" => self.learn_start = p(value)?,
            "train_every" => self.train_every = p(value)?,
            "target_sync_every" => self.target_sync_every = p(value)?,
            "gamma" => self.gamma = p(value)?,
            "n_step" => self.n_step = p(value)?,
            "lr" => self.adam.lr = p(value)?,
            "adam_beta1" => self.adam.beta1 = p(value)?,
            "adam_beta2" => self.adam.beta2 = p(value)?,
            "adam_eps" => self.adam.eps = p(value)?,
            "replay_capacity" => self.replay_capacity = p(value)?,
            "priority_alpha" => self.priority_alpha = p(value)?,
            "priority_beta_start" => self.priority_beta_start = p(value)?,
            "priority_eps" => self.priority_eps = p(value)?,
            "batch_size" => self.batch_size = p(value)?,
            "eval_every" => self.eval_every = p(value)?,
            "eval_episodes" => self.eval_episodes = p(value)?,
            "noop_max" => self.noop_max = p(value)?,
            "epsilon" => self.epsilon = p(value)?,
            "reward_clip" => self.reward_clip = p(value)?,
            "grad_clip" => self.grad_clip = p(value)?,
            "life_loss_terminal" => self.life_loss_terminal = p(value)?,
            "replications" => self.replications = p(value)?,
            "env.timer_frames" => e.timer_frames = p(value)?,
            "env.lives" => e.lives = p(value)?,
            "env.floes_per_row" => e.floes_per_row = p(value)?,
            "env.floe_width" => e.floe_width = p(value)?,
            "env.spawn_rate" => e.spawn_rate = p(value)?,
            "env.fish_fraction" => e.fish_fraction = p(value)?,
            "env.max_animals" => e.max_animals = p(value)?,
            "env.dark_level" => e.dark_level = p(value)?,
            "env.split_level" => e.split_level = p(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

/// A parsed configuration plus any non-fatal remarks (duplicate keys).
#[derive(Clone, Debug)]
pub struct ParsedConfig {
    pub config: Config,
    pub warnings: Vec<String>,
}

/// Parses `key = value` lines (`#` starts a comment), then applies `overrides` such as values
/// given on the command line. `condition` and `seed` must be supplied by one or the other.
pub fn parse_config(text: &str, overrides: &[(&str, &str)]) -> Result<ParsedConfig> {
    let mut config = Config::new(Condition::Pixels, 0);
    let mut seen: Vec<(String, usize)> = Vec::new();
    let mut warnings = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
            line,
            reason: format!("expected `key = value`, found `{body}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        config.set(key, value).map_err(|reason| Error::Parse { line, reason })?;
        if let Some((_, prev)) = seen.iter().find(|(k, _)| k == key) {
            warnings.push(format!(
                "line {line}: `{key}` already set on line {prev}; the later value wins"
            ));
        }
        seen.push((key.to_string(), line));
    }
    for &(key, value) in overrides {
        config.set(key, value).map_err(|reason| Error::Config {
            field: key.into(),
            reason,
        })?;
        seen.push((key.to_string(), 0));
    }
    for required in ["condition", "seed"] {
        if !seen.iter().any(|(k, _)| k == required) {
            return Err(Error::Config {
                field: required.into(),
                reason: "required; set it in the config file or on the command line".into(),
            });
        }
    }
    config.validate()?;
    Ok(ParsedConfig { config, warnings })
}
