use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;

use frostmask::agent::Condition;
use frostmask::analysis::{
    aggregate, base_state, build, default_band, embedding_csv, embedding_ppm, sample_states, scenario_csv,
    scenario_values, tsne, value_difference, welch_t, Model, ScenarioName, TsneConfig,
};
use frostmask::checkpoint::load_checkpoint;
use frostmask::env::pnm::{frame_ppm, mask_pgm};
use frostmask::env::{named_rng, render, Action, EnvConfig, GameState};
use frostmask::masks::{segment, Channel, RuleSet};
use frostmask::trainer::{evaluate_ablated, parse_config, read_metrics, train, Config, MetricsRow};

#[derive(Parser)]
#[command(name = "frostmask", about = "Object-mask Q-learning experiments on MiniFrostbite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent; writes metrics.csv, config.txt and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint greedily.
    Eval(EvalArgs),
    /// Evaluate a checkpoint with mask channels zeroed.
    Ablate(AblateArgs),
    /// Normalised per-state value differences between two model groups.
    Valdiff(ValdiffArgs),
    /// Embed a model's latent states with t-SNE, coloured by value differences.
    Tsne(TsneArgs),
    /// State values on injected scenarios.
    Scenario(ScenarioArgs),
    /// Export a frame and its masks.
    Render(RenderArgs),
    /// Train several seeds and aggregate their metrics.
    Replicate(ReplicateArgs),
}

#[derive(Args)]
struct RunConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    condition: Option<String>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunConfigArgs {
    fn load(&self, seed: Option<u64>) -> Result<Config> {
        let text = match &self.config {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let seed = seed.or(self.seed).map(|s| s.to_string());
        let mut overrides: Vec<(&str, &str)> = Vec::new();
        if let Some(c) = &self.condition {
            overrides.push(("condition", c));
        }
        if let Some(s) = &seed {
            overrides.push(("seed", s));
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("override `{kv}` is not KEY=VALUE"))?;
            overrides.push((k.trim(), v.trim()));
        }
        let parsed = parse_config(&text, &overrides)?;
        for w in &parsed.warnings {
            eprintln!("warning: {w}");
        }
        Ok(parsed.config)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 30)]
    noop_max: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Mask channel to zero; repeat for several.
    #[arg(long = "channel", required = true)]
    channels: Vec<Channel>,
    /// CSV of per-episode scores.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GroupArgs {
    #[arg(long = "group-a", num_args = 1.., required = true)]
    group_a: Vec<PathBuf>,
    #[arg(long = "group-b", num_args = 1.., required = true)]
    group_b: Vec<PathBuf>,
    /// Model whose evaluation episode supplies the states.
    #[arg(long)]
    states_from: PathBuf,
    #[arg(long, default_value_t = 500)]
    max_states: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ValdiffArgs {
    #[command(flatten)]
    groups: GroupArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TsneArgs {
    #[command(flatten)]
    groups: GroupArgs,
    /// Output directory for embedding.csv and embedding.ppm.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    name: ScenarioName,
    #[arg(long = "ckpt", num_args = 1.., required = true)]
    ckpts: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write PPM renders of the first instance (base and edited).
    #[arg(long)]
    render_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random-policy steps to play before exporting.
    #[arg(long, default_value_t = 0)]
    steps: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplicateArgs {
    #[command(flatten)]
    run: RunConfigArgs,
    /// Number of seeds (defaults to the config's `replications`).
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<Model>> {
    paths
        .iter()
        .map(|p| Model::load(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn print_scores(scores: &[f64]) -> Result<()> {
    for s in scores {
        println!("{s}");
    }
    let (m, sem) = aggregate(scores)?;
    println!("mean {m} ± {sem}");
    Ok(())
}

/// Game settings the checkpoint was trained with (defaults when its config echo is unreadable).
fn checkpoint_env(path: &Path) -> Result<EnvConfig> {
    let ckpt = load_checkpoint(path)?;
    Ok(parse_config(&ckpt.meta.config, &[])
        .map(|p| p.config.env)
        .unwrap_or_else(|e| {
            eprintln!(
                "warning: {}: unreadable config echo ({e}); using default game settings",
                path.display()
            );
            EnvConfig::default()
        }))
}

fn ablated_scores(args: &EvalArgs, omit: &BTreeSet<Channel>) -> Result<Vec<f64>> {
    let model = Model::load(&args.ckpt)?;
    let env = checkpoint_env(&args.ckpt)?;
    Ok(evaluate_ablated(
        &model.net,
        model.condition,
        omit,
        &env,
        args.episodes,
        args.noop_max,
        args.seed,
    )?)
}

struct Groups {
    a: Vec<Model>,
    b: Vec<Model>,
    src: Model,
    states: Vec<frostmask::agent::ObsStack>,
}

fn group_states(g: &GroupArgs) -> Result<Groups> {
    let src = Model::load(&g.states_from)?;
    let states = sample_states(&src, &checkpoint_env(&g.states_from)?, g.seed, g.max_states)?;
    Ok(Groups {
        a: load_models(&g.group_a)?,
        b: load_models(&g.group_b)?,
        src,
        states,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn replicate(args: &ReplicateArgs) -> Result<()> {
    let base = args.run.load(Some(args.run.seed.unwrap_or(0)))?;
    let seeds = args.seeds.unwrap_or(base.replications);
    let mut runs: Vec<Vec<MetricsRow>> = Vec::new();
    for k in 0..seeds {
        let mut cfg = base.clone();
        cfg.seed = base.seed + k as u64;
        let dir = args.out.join(format!("seed{}", cfg.seed));
        eprintln!("training seed {} into {}", cfg.seed, dir.display());
        let art = train(&cfg, &dir, |r| {
            eprintln!("  step {} eval {:.1} ± {:.1}", r.step, r.eval_mean, r.eval_sem)
        })?;
        runs.push(read_metrics(&art.metrics_path)?);
    }
    let mut csv = String::from("step,human_hours,mean,sem,seeds\n");
    for (i, row) in runs[0].iter().enumerate() {
        let means: Vec<f64> = runs.iter().filter_map(|r| r.get(i)).map(|r| r.eval_mean).collect();
        let (m, sem) = aggregate(&means)?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.step,
            row.human_hours,
            m,
            sem,
            means.len()
        ));
    }
    write(&args.out.join("aggregate.csv"), csv)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let cfg = a.run.load(None)?;
            let art = train(&cfg, &a.out, |r| {
                eprintln!(
                    "step {} ({:.3} h) eval {:.1} ± {:.1} loss {:.4}",
                    r.step, r.human_hours, r.eval_mean, r.eval_sem, r.mean_loss
                )
            })?;
            println!("{}", art.metrics_path.display());
        }
        Command::Eval(a) => print_scores(&ablated_scores(&a, &BTreeSet::new())?)?,
        Command::Ablate(a) => {
            let omit: BTreeSet<Channel> = a.channels.iter().copied().collect();
            let scores = ablated_scores(&a.eval, &omit)?;
            let names: Vec<&str> = omit.iter().map(|c| c.name()).collect();
            let mut csv = String::from("episode,omitted,score\n");
            for (k, s) in scores.iter().enumerate() {
                csv.push_str(&format!("{k},{},{s}\n", names.join("+")));
            }
            write(&a.out, csv)?;
            print_scores(&scores)?;
        }
        Command::Valdiff(a) => {
            let Groups {
                a: ga, b: gb, states, ..
            } = group_states(&a.groups)?;
            let d = value_difference(&states, &ga, &gb)?;
            let mut csv = String::from("state,normalized_difference\n");
            for (k, v) in d.iter().enumerate() {
                csv.push_str(&format!("{k},{v}\n"));
            }
            write(&a.out, csv)?;
        }
        Command::Tsne(a) => {
            let Groups {
                a: ga,
                b: gb,
                src,
                states,
            } = group_states(&a.groups)?;
            if src.condition != Condition::Pixels {
                eprintln!("warning: latents come from a {} model", src.condition);
            }
            let d = value_difference(&states, &ga, &gb)?;
            let latents = src.latents(&states)?;
            let cfg = TsneConfig {
                perplexity: a.perplexity,
                iterations: a.iters,
                ..TsneConfig::default()
            };
            let mut e = tsne(&latents, &cfg, a.groups.seed)?;
            e.values = d;
            fs::create_dir_all(&a.out)?;
            write(&a.out.join("embedding.csv"), embedding_csv(&e))?;
            write(&a.out.join("embedding.ppm"), embedding_ppm(&e, 256))?;
            println!("final KL {}", e.kl);
        }
        Command::Scenario(a) => {
            let models = load_models(&a.ckpts)?;
            let env = EnvConfig::default();
            let mut rng = named_rng(a.seed, "scenario-instances");
            let mut scenarios = Vec::new();
            while scenarios.len() < a.instances {
                let s: u64 = rng.random();
                if let Ok(base) = base_state(&env, s, default_band(a.name)) {
                    scenarios.push(build(a.name, base));
                }
            }
            let samples = scenario_values(&scenarios, &models)?;
            write(&a.out, scenario_csv(&samples))?;
            let base: Vec<f64> = samples.iter().map(|s| s.base_value).collect();
            let edited: Vec<f64> = samples.iter().map(|s| s.edited_value).collect();
            let (mb, _) = aggregate(&base)?;
            let (me, _) = aggregate(&edited)?;
            println!("base mean {mb}, edited mean {me}");
            if base.len() >= 2 {
                let t = welch_t(&edited, &base)?;
                println!("edited vs base: t = {}, p = {}", t.t, t.p);
            }
            if let Some(dir) = &a.render_dir {
                let first = &scenarios[0];
                let edited = frostmask::analysis::inject(first)?;
                write(
                    &dir.join(format!("{}_base.ppm", a.name)),
                    frame_ppm(&render(&first.base)),
                )?;
                write(&dir.join(format!("{}_edited.ppm", a.name)), frame_ppm(&render(&edited)))?;
            }
        }
        Command::Render(a) => {
            let env = EnvConfig::default();
            let mut rng = named_rng(a.seed, "render");
            let mut s = GameState::reset(&env, a.seed)?;
            for _ in 0..a.steps {
                if s.terminal {
                    break;
                }
                let act = Action::from_index(rng.random_range(0..Action::COUNT)).expect("valid");
                s = s.step(act)?.0;
            }
            let frame = render(&s);
            let masks = segment(&frame, &RuleSet::default())?;
            write(&a.out.join("frame.ppm"), frame_ppm(&frame))?;
            for c in Channel::ALL {
                write(
                    &a.out.join(format!("mask_{}.pgm", c.name())),
                    mask_pgm(masks.side(), masks.plane(c)),
                )?;
            }
        }
        Command::Replicate(a) => replicate(&a)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
