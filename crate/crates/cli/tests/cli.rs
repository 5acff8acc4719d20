use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const TINY: [&str; 9] = [
    "total_steps=240",
    "learn_start=80",
    "batch_size=8",
    "replay_capacity=256",
    "eval_every=120",
    "eval_episodes=2",
    "noop_max=3",
    "target_sync_every=40",
    "env.timer_frames=200",
];

fn frostmask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frostmask"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = frostmask(args);
    assert!(
        out.status.success(),
        "frostmask {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn train_tiny(cond: &str, seed: u64, out: &Path) {
    let seed = seed.to_string();
    let mut args = vec![
        "train",
        "--condition",
        cond,
        "--seed",
        &seed,
        "--out",
        out.to_str().unwrap(),
    ];
    for s in TINY {
        args.extend(["--set", s]);
    }
    ok(&args);
}

struct Runs {
    _dir: TempDir,
    objects: PathBuf,
    pixels_objects: PathBuf,
    pixels: PathBuf,
}

/// Tiny runs shared by the tests that need checkpoints.
fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let objects = dir.path().join("objects");
        let pixels_objects = dir.path().join("pixels_objects");
        let pixels = dir.path().join("pixels");
        train_tiny("objects", 0, &objects);
        train_tiny("pixels_objects", 0, &pixels_objects);
        train_tiny("pixels", 0, &pixels);
        Runs {
            _dir: dir,
            objects,
            pixels_objects,
            pixels,
        }
    })
}

fn final_ckpt(run: &Path) -> String {
    run.join("ckpt-0000240.mfrb").to_str().unwrap().to_string()
}

#[test]
fn train_writes_metrics_config_and_checkpoints() {
    let r = runs();
    let metrics = fs::read_to_string(r.objects.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("step,human_hours,eval_mean,eval_sem"));
    assert!(lines[3].starts_with("240,"));
    let config = fs::read_to_string(r.objects.join("config.txt")).unwrap();
    assert!(config.contains("condition = objects"));
    assert!(config.contains("total_steps = 240"));
    for step in ["0000000", "0000120", "0000240"] {
        assert!(r.objects.join(format!("ckpt-{step}.mfrb")).exists());
    }
}

#[test]
fn training_is_reproducible_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again");
    train_tiny("objects", 0, &again);
    let r = runs();
    assert_eq!(
        fs::read(again.join("metrics.csv")).unwrap(),
        fs::read(r.objects.join("metrics.csv")).unwrap()
    );
    assert_eq!(
        fs::read(final_ckpt(&again)).unwrap(),
        fs::read(final_ckpt(&r.objects)).unwrap()
    );
}

#[test]
fn eval_prints_scores_and_summary() {
    let ck = final_ckpt(&runs().objects);
    let out = ok(&["eval", "--ckpt", &ck, "--episodes", "4", "--seed", "3"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 5, "{out}");
    for l in &lines[..4] {
        let s: f64 = l.trim().parse().unwrap();
        assert!(s >= 0.0);
    }
    assert!(lines[4].starts_with("mean ") && lines[4].contains('±'));
    assert_eq!(out, ok(&["eval", "--ckpt", &ck, "--episodes", "4", "--seed", "3"]));
}

#[test]
fn ablate_writes_csv() {
    let ck = final_ckpt(&runs().objects);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ablate.csv");
    let args = [
        "ablate",
        "--ckpt",
        &ck,
        "--episodes",
        "3",
        "--channel",
        "bear",
        "--channel",
        "agent",
        "--out",
        out.to_str().unwrap(),
    ];
    ok(&args);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "episode,omitted,score");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,agent+bear,"));
}

#[test]
fn ablate_rejects_pixel_models_and_unknown_channels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.csv");
    let ck = final_ckpt(&runs().pixels);
    let res = frostmask(&[
        "ablate",
        "--ckpt",
        &ck,
        "--channel",
        "bear",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    let ck = final_ckpt(&runs().objects);
    let res = frostmask(&[
        "ablate",
        "--ckpt",
        &ck,
        "--channel",
        "penguin",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!res.status.success());
}

#[test]
fn render_exports_frame_and_masks() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "render",
        "--seed",
        "2",
        "--steps",
        "30",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let frame = fs::read(dir.path().join("frame.ppm")).unwrap();
    assert!(frame.starts_with(b"P6\n64 64\n255\n"));
    for name in [
        "agent",
        "land",
        "unvisited_floes",
        "visited_floes",
        "igloo",
        "bad_animals",
        "bear",
        "good_animals",
    ] {
        let m = fs::read(dir.path().join(format!("mask_{name}.pgm"))).unwrap();
        assert!(m.starts_with(b"P5\n"), "{name}");
    }
}

#[test]
fn bad_configs_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "condition = objects\nseed = 0\ngamma = lots\n").unwrap();
    let out_dir = dir.path().join("run");
    let res = frostmask(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 3"), "{err}");

    let res = frostmask(&["train", "--seed", "0", "--out", out_dir.to_str().unwrap()]);
    assert!(!res.status.success(), "missing condition must fail");

    let res = frostmask(&["eval", "--ckpt", dir.path().join("nope.mfrb").to_str().unwrap()]);
    assert!(!res.status.success());
}

#[test]
fn scenario_valdiff_and_tsne_run_on_tiny_models() {
    let r = runs();
    let dir = tempfile::tempdir().unwrap();
    let po = final_ckpt(&r.pixels_objects);
    let px = final_ckpt(&r.pixels);

    let csv = dir.path().join("fish.csv");
    let renders = dir.path().join("renders");
    let out = ok(&[
        "scenario",
        "--name",
        "surround_fish",
        "--ckpt",
        &po,
        "--instances",
        "4",
        "--out",
        csv.to_str().unwrap(),
        "--render-dir",
        renders.to_str().unwrap(),
    ]);
    assert!(out.contains("base mean") && out.contains("p = "), "{out}");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 5);
    assert!(renders.join("surround_fish_edited.ppm").exists());

    let vd = dir.path().join("vd.csv");
    ok(&[
        "valdiff",
        "--group-a",
        &po,
        "--group-b",
        &px,
        "--states-from",
        &px,
        "--max-states",
        "40",
        "--out",
        vd.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&vd).unwrap();
    assert_eq!(text.lines().next(), Some("state,normalized_difference"));
    let vals: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(!vals.is_empty() && vals.len() <= 40);
    assert!(vals.iter().all(|v| v.is_finite()));

    let emb = dir.path().join("emb");
    let out = ok(&[
        "tsne",
        "--group-a",
        &po,
        "--group-b",
        &px,
        "--states-from",
        &px,
        "--max-states",
        "40",
        "--perplexity",
        "5",
        "--iters",
        "100",
        "--out",
        emb.to_str().unwrap(),
    ]);
    assert!(out.starts_with("final KL"));
    assert!(emb.join("embedding.csv").exists() && emb.join("embedding.ppm").exists());
}

#[test]
fn replicate_aggregates_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "replicate",
        "--condition",
        "grouped",
        "--seeds",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ];
    for s in TINY {
        args.extend(["--set", s]);
    }
    ok(&args);
    let csv = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,human_hours,mean,sem,seeds");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.ends_with(",2")));
    assert!(dir.path().join("seed0/metrics.csv").exists() && dir.path().join("seed1/metrics.csv").exists());
}
