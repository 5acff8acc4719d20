use std::fs;

use frostmask::agent::{Condition, QNetwork};
use frostmask::checkpoint::load_checkpoint;
use frostmask::env::EnvConfig;
use frostmask::trainer::*;
use frostmask::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A run small enough for the test suite: a few hundred steps with shortened episodes.
fn tiny(cond: Condition, seed: u64) -> Config {
    Config {
        total_steps: 240,
        learn_start: 80,
        train_every: 4,
        target_sync_every: 40,
        replay_capacity: 256,
        batch_size: 8,
        eval_every: 120,
        eval_episodes: 2,
        noop_max: 3,
        env: EnvConfig {
            timer_frames: 200,
            ..EnvConfig::default()
        },
        ..Config::new(cond, seed)
    }
}

#[test]
fn human_hour_conversion() {
    assert_eq!(human_hours_to_steps(1.0), 54_000);
    assert_eq!(human_hours_to_steps(0.0), 0);
    assert_eq!(human_hours_to_steps(185.0), 9_990_000);
    assert!((9_990_000.0f64 - 1e7).abs() / 1e7 < 0.01);
    assert_eq!(steps_to_human_hours(54_000), 1.0);
}

#[test]
fn config_text_round_trips() {
    let mut c = Config::new(Condition::Grouped, 42);
    c.gamma = 0.95;
    c.env.spawn_rate = 0.03;
    let parsed = parse_config(&c.to_text(), &[]).unwrap();
    assert_eq!(parsed.config, c);
    assert!(parsed.warnings.is_empty());
}

#[test]
fn duplicate_keys_warn_and_last_wins() {
    let text = "condition = pixels\nseed = 3\ngamma = 0.9\ngamma = 0.8\n";
    let p = parse_config(text, &[]).unwrap();
    assert_eq!(p.config.gamma, 0.8);
    assert_eq!(p.warnings.len(), 1);
    assert!(p.warnings[0].contains("line 4"));
}

#[test]
fn malformed_value_names_line() {
    let err = parse_config("condition = objects\nseed = x\n", &[]).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }));
    let err = parse_config("seed = 1\n", &[]).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "condition"));
}

#[test]
fn tiny_runs_are_bytewise_deterministic() {
    let cfg = tiny(Condition::Grouped, 5);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = train(&cfg, a.path(), |_| {}).unwrap();
    let rb = train(&cfg, b.path(), |_| {}).unwrap();
    assert_eq!(fs::read(&ra.metrics_path).unwrap(), fs::read(&rb.metrics_path).unwrap());
    assert!(ra.gradient_steps > 0);
    assert_eq!(ra.gradient_steps, rb.gradient_steps);
    let ca = fs::read(ra.final_checkpoint().unwrap()).unwrap();
    let cb = fs::read(rb.final_checkpoint().unwrap()).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn metrics_bookkeeping() {
    let cfg = tiny(Condition::Objects, 1);
    let dir = tempfile::tempdir().unwrap();
    let run = train(&cfg, dir.path(), |_| {}).unwrap();
    let rows = read_metrics(&run.metrics_path).unwrap();
    let csv = |rs: &[MetricsRow]| rs.iter().map(MetricsRow::to_csv).collect::<Vec<_>>();
    assert_eq!(csv(&rows), csv(&run.rows));
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 120, 240]);
    assert_eq!(run.checkpoints.len(), rows.len());
    for w in rows.windows(2) {
        assert!(w[1].step > w[0].step);
    }
    for r in &rows {
        assert_eq!(r.human_hours, r.step as f64 / 54_000.0);
        assert_eq!(r.scores.len(), cfg.eval_episodes);
    }
    let header = fs::read_to_string(&run.metrics_path).unwrap();
    assert!(header.starts_with("step,human_hours,eval_mean,eval_sem,score_0,score_1,mean_loss\n"));
    let ck = load_checkpoint(run.final_checkpoint().unwrap()).unwrap();
    assert_eq!(ck.meta.condition, Condition::Objects);
    assert_eq!(parse_config(&ck.meta.config, &[]).unwrap().config, cfg);
}

#[test]
fn budget_equal_to_learn_start_never_learns() {
    let cfg = Config {
        total_steps: 80,
        learn_start: 80,
        train_every: 1000,
        eval_every: 40,
        ..tiny(Condition::Pixels, 2)
    };
    let dir = tempfile::tempdir().unwrap();
    let run = train(&cfg, dir.path(), |_| {}).unwrap();
    assert_eq!(run.gradient_steps, 0);
    assert!(run.rows.iter().all(|r| r.mean_loss.is_nan()));
    // Every evaluation sees the untouched initial network.
    assert!(run.rows.iter().all(|r| r.scores == run.rows[0].scores));
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let cfg = Config {
        total_steps: 10,
        learn_start: 20,
        ..tiny(Condition::Pixels, 0)
    };
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(train(&cfg, dir.path(), |_| {}), Err(Error::Config { .. })));
}

#[test]
fn target_sync_is_bitwise() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut l = Learner::new(tiny(Condition::Pixels, 0), &mut r);
    let fresh = QNetwork::<f32>::new(Condition::Pixels.channels(), &mut r);
    l.online.params.copy_values_from(&fresh.params).unwrap();
    assert_ne!(l.online.params.params(), l.target.params.params());
    l.sync_target().unwrap();
    for (a, b) in l.online.params.params().iter().zip(l.target.params.params()) {
        let bits = |t: &frostmask::numcore::Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn evaluation_is_deterministic_and_non_negative() {
    let net = QNetwork::<f32>::new(Condition::Objects.channels(), &mut ChaCha8Rng::seed_from_u64(1));
    let env = EnvConfig::default();
    let a = evaluate(&net, Condition::Objects, &env, 10, 30, 9).unwrap();
    assert_eq!(a, evaluate(&net, Condition::Objects, &env, 10, 30, 9).unwrap());
    assert_eq!(a.len(), 10);
    assert!(a.iter().all(|s| s.is_finite() && *s >= 0.0));
    let r = evaluate_random(&env, 10, 30, 9).unwrap();
    assert_eq!(r, evaluate_random(&env, 10, 30, 9).unwrap());
}

#[test]
fn noop_starts_change_episodes() {
    let net = QNetwork::<f32>::new(Condition::Pixels.channels(), &mut ChaCha8Rng::seed_from_u64(8));
    let env = EnvConfig::default();
    let none = evaluate_random(&env, 10, 0, 4).unwrap();
    let some = evaluate_random(&env, 10, 30, 4).unwrap();
    assert_ne!(none, some);
    let g0 = evaluate(&net, Condition::Pixels, &env, 5, 0, 4).unwrap();
    let g30 = evaluate(&net, Condition::Pixels, &env, 5, 30, 4).unwrap();
    assert_eq!(g0.len(), g30.len());
}

#[test]
fn checkpoint_path_is_zero_padded() {
    let p = checkpoint_path(std::path::Path::new("runs"), 1200);
    assert_eq!(p, std::path::Path::new("runs/ckpt-0001200.mfrb"));
}
