use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{c51_project, NetNoise, ObsStack, QNetwork, ACTIONS, ATOMS, PLANE};
use crate::analysis::aggregate;
use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::env::{named_rng, Action, Events, GameState, REDUCED};
use crate::error::{Error, Result};
use crate::masks::RuleSet;
use crate::numcore::Tensor;
use crate::replay::{beta_at, NStepFolder, PriorityConfig, SumTree, Transition};

use super::eval::{capture, evaluate};
use super::Config;

/// Agent steps per human hour of play (216,000 frames at four frames per step).
pub const STEPS_PER_HUMAN_HOUR: f64 = 54_000.0;

pub fn human_hours_to_steps(hours: f64) -> u64 {
    (hours * STEPS_PER_HUMAN_HOUR).round() as u64
}

pub fn steps_to_human_hours(steps: u64) -> f64 {
    steps as f64 / STEPS_PER_HUMAN_HOUR
}

/// One evaluation point of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub human_hours: f64,
    pub eval_mean: f64,
    pub eval_sem: f64,
    pub scores: Vec<f64>,
    /// Mean training loss since the previous row; NaN when no gradient step was taken.
    pub mean_loss: f64,
}

impl MetricsRow {
    pub fn csv_header(episodes: usize) -> String {
        let scores: Vec<String> = (0..episodes).map(|k| format!("score_{k}")).collect();
        format!("step,human_hours,eval_mean,eval_sem,{},mean_loss", scores.join(","))
    }

    pub fn to_csv(&self) -> String {
        let scores: Vec<String> = self.scores.iter().map(|s| s.to_string()).collect();
        format!(
            "{},{},{},{},{},{}",
            self.step,
            self.human_hours,
            self.eval_mean,
            self.eval_sem,
            scores.join(","),
            self.mean_loss
        )
    }

    pub fn parse_csv(line: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("malformed metrics row `{line}`"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            step: f[0].parse().map_err(|_| bad())?,
            human_hours: num(f[1])?,
            eval_mean: num(f[2])?,
            eval_sem: num(f[3])?,
            scores: f[4..f.len() - 1].iter().map(|s| num(s)).collect::<Result<_>>()?,
            mean_loss: num(f[f.len() - 1])?,
        })
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    fs::read_to_string(path)?
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(MetricsRow::parse_csv)
        .collect()
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub metrics_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub rows: Vec<MetricsRow>,
    pub gradient_steps: u64,
    /// Priority updates skipped because the sampled slot had been overwritten.
    pub stale_priority_skips: u64,
}

impl RunArtifacts {
    pub fn final_checkpoint(&self) -> Option<&Path> {
        self.checkpoints.last().map(PathBuf::as_path)
    }
}

pub fn checkpoint_path(out: &Path, step: u64) -> PathBuf {
    out.join(format!("ckpt-{step:07}.mfrb"))
}

/// Online and target networks plus the optimiser state of a run in progress.
pub struct Learner {
    pub config: Config,
    pub online: QNetwork<f32>,
    pub target: QNetwork<f32>,
    states: Tensor<f32>,
    next_states: Tensor<f32>,
}

/// Statistics of one gradient step.
pub struct LearnStep {
    pub loss: f64,
    pub grad_norm: f64,
}

impl Learner {
    pub fn new(config: Config, rng: &mut impl Rng) -> Self {
        let online = QNetwork::new(config.condition.channels(), rng);
        let target = online.clone();
        let shape = [config.batch_size, config.condition.channels(), REDUCED, REDUCED];
        Self {
            states: Tensor::zeros(&shape),
            next_states: Tensor::zeros(&shape),
            config,
            online,
            target,
        }
    }

    pub fn sync_target(&mut self) -> Result<()> {
        self.target.params.copy_values_from(&self.online.params)
    }

    /// One prioritized, double-Q, distributional update.
    pub fn learn(
        &mut self,
        replay: &mut SumTree<Transition>,
        beta: f64,
        online_noise: &NetNoise<f32>,
        rng: &mut ChaCha8Rng,
    ) -> Result<LearnStep> {
        let cond = self.config.condition;
        let b = self.config.batch_size;
        let batch = replay.sample(b, beta, rng)?;
        let width = cond.channels() * PLANE;
        for (k, t) in batch.items.iter().enumerate() {
            t.obs
                .write(cond, &mut self.states.data_mut()[k * width..(k + 1) * width]);
            t.next_obs
                .write(cond, &mut self.next_states.data_mut()[k * width..(k + 1) * width]);
        }
        let target_noise = NetNoise::sample(rng);
        let online_next = self.online.prepare(online_noise)?.distributions(&self.next_states)?;
        let target_next = self.target.prepare(&target_noise)?.distributions(&self.next_states)?;
        let mut targets = Vec::with_capacity(b * ATOMS);
        let mut actions = Vec::with_capacity(b);
        for (k, t) in batch.items.iter().enumerate() {
            targets.extend(c51_project(
                &target_next[k],
                t.ret as f32,
                t.gamma_n as f32,
                t.done,
                &online_next[k],
            ));
            actions.push(t.action);
        }
        let targets = Tensor::new(&[b, ATOMS], targets)?;
        let weights: Vec<f32> = batch.weights.iter().map(|&w| w as f32).collect();
        let mut out = self
            .online
            .loss_and_grads(self.states.clone(), &actions, &targets, &weights, online_noise)?;
        if !out.loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss {} at optimiser step {}",
                out.loss,
                self.online.params.step() + 1
            )));
        }
        let norm = out
            .grads
            .iter()
            .flat_map(|g| g.data())
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if self.config.grad_clip > 0.0 && norm > self.config.grad_clip {
            let scale = (self.config.grad_clip / norm) as f32;
            for g in &mut out.grads {
                for v in g.data_mut() {
                    *v *= scale;
                }
            }
        }
        self.online.params.adam_step(&out.grads, &self.config.adam)?;
        let priorities: Vec<f64> = out.priorities.iter().map(|&p| (p as f64).max(0.0)).collect();
        let indices = batch.indices.clone();
        replay.update_priorities(&indices, &priorities)?;
        Ok(LearnStep {
            loss: out.loss as f64,
            grad_norm: norm,
        })
    }
}

/// Runs the full protocol for `config`, writing `metrics.csv`, `config.txt` and a checkpoint per
/// evaluation point into `out`. `progress` sees each metrics row as it is produced.
pub fn train(config: &Config, out: &Path, mut progress: impl FnMut(&MetricsRow)) -> Result<RunArtifacts> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let echo = config.to_text();
    fs::write(out.join("config.txt"), &echo)?;
    let meta = CheckpointMeta {
        condition: config.condition,
        config: echo,
    };
    let cond = config.condition;
    let rules = RuleSet::default();
    let mut init_rng = named_rng(config.seed, "init");
    let mut act_rng = named_rng(config.seed, "act");
    let mut learn_rng = named_rng(config.seed, "learn");
    let mut episode_rng = named_rng(config.seed, "episodes");
    let eval_seed: u64 = named_rng(config.seed, "eval").random();

    let mut learner = Learner::new(config.clone(), &mut init_rng);
    let mut replay = SumTree::new(
        config.replay_capacity,
        PriorityConfig {
            alpha: config.priority_alpha,
            eps: config.priority_eps,
        },
    )?;
    let mut folder = NStepFolder::new(config.n_step, config.gamma);

    let metrics_path = out.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path)?;
    writeln!(metrics, "{}", MetricsRow::csv_header(config.eval_episodes))?;
    let mut rows = Vec::new();
    let mut checkpoints = Vec::new();
    let mut losses: Vec<f64> = Vec::new();
    let mut gradient_steps = 0;

    let mut record =
        |step: u64, net: &QNetwork<f32>, losses: &mut Vec<f64>, rows: &mut Vec<MetricsRow>| -> Result<()> {
            let scores = evaluate(net, cond, &config.env, config.eval_episodes, config.noop_max, eval_seed)?;
            let (eval_mean, eval_sem) = aggregate(&scores)?;
            let mean_loss = if losses.is_empty() {
                f64::NAN
            } else {
                losses.iter().sum::<f64>() / losses.len() as f64
            };
            losses.clear();
            let row = MetricsRow {
                step,
                human_hours: steps_to_human_hours(step),
                eval_mean,
                eval_sem,
                scores,
                mean_loss,
            };
            writeln!(metrics, "{}", row.to_csv())?;
            metrics.flush()?;
            let path = checkpoint_path(out, step);
            save_checkpoint(&net.params, &meta, &path)?;
            checkpoints.push(path);
            progress(&row);
            rows.push(row);
            Ok(())
        };

    record(0, &learner.online, &mut losses, &mut rows)?;
    let mut state = GameState::reset(&config.env, episode_rng.random())?;
    let mut stack = ObsStack::new(capture(&state, &rules)?);
    let mut noise = NetNoise::sample(&mut act_rng);
    let mut input = Tensor::zeros(&[1, cond.channels(), REDUCED, REDUCED]);
    for step in 1..=config.total_steps {
        if step % config.train_every == 0 {
            noise = NetNoise::sample(&mut act_rng);
        }
        let action = if config.epsilon > 0.0 && act_rng.random::<f64>() < config.epsilon {
            Action::from_index(act_rng.random_range(0..ACTIONS)).expect("valid index")
        } else {
            stack.write(cond, input.data_mut());
            learner.online.distributions(&input, &noise)?.remove(0).select_action()
        };
        let (next, outcome) = state.step(action)?;
        let next_stack = stack.push(capture(&next, &rules)?);
        let clipped = outcome.reward.clamp(-config.reward_clip, config.reward_clip);
        let learn_done = outcome.done || (config.life_loss_terminal && outcome.events.contains(Events::LIFE_LOST));
        for t in folder.push(stack, action.index(), clipped, &next_stack, learn_done) {
            replay.push(t);
        }
        if outcome.done {
            state = GameState::reset(&config.env, episode_rng.random())?;
            stack = ObsStack::new(capture(&state, &rules)?);
        } else {
            state = next;
            stack = next_stack;
        }

        if step >= config.learn_start && step % config.train_every == 0 && replay.len() >= config.batch_size {
            let beta = beta_at(
                config.priority_beta_start,
                step - config.learn_start,
                config.total_steps - config.learn_start,
            );
            let s = learner.learn(&mut replay, beta, &noise, &mut learn_rng)?;
            losses.push(s.loss);
            gradient_steps += 1;
        }
        if step % config.target_sync_every == 0 {
            learner.sync_target()?;
        }
        if step % config.eval_every == 0 || step == config.total_steps {
            record(step, &learner.online, &mut losses, &mut rows)?;
        }
    }
    Ok(RunArtifacts {
        metrics_path,
        checkpoints,
        rows,
        gradient_steps,
        stale_priority_skips: replay.stale_skips(),
    })
}
