//! Oracles and fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use frostmask::agent::{Condition, NetNoise, QNetwork, ATOMS};
use frostmask::env::*;
use frostmask::numcore::{grad_check, Graph, Tensor, Var};
use frostmask::replay::{PriorityConfig, SampleIndex, SumTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform magnitude in [0.1, 1) with a random sign, keeping inputs off ReLU kinks.
pub fn away_from_zero(r: &mut ChaCha8Rng) -> f64 {
    let v: f64 = r.random_range(0.1..1.0);
    if r.random::<bool>() {
        v
    } else {
        -v
    }
}

// ---- gradients

/// Runs `build` on leaves made from `point` (split by `shapes`), reduces a non-scalar output with
/// fixed random weights, and returns the value and the gradient with respect to every leaf.
pub fn evaluate(
    shapes: &[Vec<usize>],
    point: &[f64],
    weight_seed: u64,
    build: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var,
) -> (f64, Vec<f64>) {
    let mut g = Graph::new();
    let mut off = 0;
    let leaves: Vec<Var> = shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let t = Tensor::new(s, point[off..off + n].to_vec()).unwrap();
            off += n;
            g.leaf(t, true)
        })
        .collect();
    let mut out = build(&mut g, &leaves);
    if g.value(out).len() != 1 {
        let mut r = rng(weight_seed);
        let w = Tensor::from_fn(g.value(out).shape(), |_| r.random_range(-1.0..1.0));
        out = g.weighted_sum(out, w).unwrap();
    }
    g.backward(out).unwrap();
    let value = g.value(out).data()[0];
    let mut grad = Vec::with_capacity(point.len());
    for (v, s) in leaves.iter().zip(shapes) {
        match g.grad(*v) {
            Some(t) => grad.extend_from_slice(t.data()),
            None => grad.extend(std::iter::repeat_n(0.0, s.iter().product())),
        }
    }
    (value, grad)
}

/// Worst finite-difference relative error of one op over 10 random points.
pub fn op_grad_error(shapes: &[Vec<usize>], build: impl Fn(&mut Graph<f64>, &[Var]) -> Var) -> f64 {
    let mut worst = 0.0f64;
    for trial in 0..10u64 {
        let mut r = rng(1000 + trial);
        let n: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        let point: Vec<f64> = (0..n).map(|_| away_from_zero(&mut r)).collect();
        worst = worst.max(grad_check(|p| evaluate(shapes, p, trial, &build), &point, 1e-6));
    }
    worst
}

pub fn random_input(channels: usize, batch: usize, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(&[batch, channels, 32, 32], |_| {
        if r.random_bool(0.3) {
            r.random::<f64>()
        } else {
            0.0
        }
    })
}

/// Relative error of the full network's loss gradient on four random coordinates of every
/// parameter tensor.
pub fn network_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let net = QNetwork::<f64>::new(Condition::Grouped.channels(), &mut r);
    let noise = NetNoise::<f64>::sample(&mut r);
    let input = random_input(Condition::Grouped.channels(), 2, seed ^ 5);
    let mut targets = Tensor::from_fn(&[2, ATOMS], |_| r.random::<f64>());
    for b in 0..2 {
        let row = &mut targets.data_mut()[b * ATOMS..(b + 1) * ATOMS];
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let actions = [1usize, 4];
    let weights = [0.7, 1.0];
    let coords: Vec<(usize, usize)> = net
        .params
        .params()
        .iter()
        .enumerate()
        .flat_map(|(p, t)| {
            let n = t.len();
            (0..4).map(|_| (p, r.random_range(0..n))).collect::<Vec<_>>()
        })
        .collect();
    let point: Vec<f64> = coords.iter().map(|&(p, i)| net.params.params()[p].data()[i]).collect();
    let f = |x: &[f64]| {
        let mut n = net.clone();
        for (&(p, i), &v) in coords.iter().zip(x) {
            n.params.get_mut(p).data_mut()[i] = v;
        }
        let g = n
            .loss_and_grads(input.clone(), &actions, &targets, &weights, &noise)
            .unwrap();
        let grad = coords.iter().map(|&(p, i)| g.grads[p].data()[i]).collect();
        (g.loss, grad)
    };
    grad_check(f, &point, 1e-3)
}

// ---- distributional targets

/// Atom-loop projection written independently of the library: every source atom is mapped through
/// the Bellman backup and its mass is shared with the two nearest support points by a triangular
/// kernel of width `dz`.
pub fn projection_oracle(next: &[f64], r: f64, gamma_n: f64, done: bool) -> Vec<f64> {
    let dz = 20.0 / 50.0;
    let z: Vec<f64> = (0..ATOMS).map(|i| -10.0 + dz * i as f64).collect();
    let mut out = vec![0.0; ATOMS];
    let sources: Vec<(f64, f64)> = if done {
        vec![(r, 1.0)]
    } else {
        z.iter().zip(next).map(|(&zi, &p)| (r + gamma_n * zi, p)).collect()
    };
    for (tz, p) in sources {
        let tz = tz.clamp(-10.0, 10.0);
        for (j, &zj) in z.iter().enumerate() {
            out[j] += p * (1.0 - (tz - zj).abs() / dz).max(0.0);
        }
    }
    out
}

// ---- replay

/// Tree whose leaves hold exactly `ps` (set through losses chosen so that `(loss + eps)^alpha = p`).
pub fn tree_with(ps: &[f64]) -> SumTree<usize> {
    let cfg = PriorityConfig { alpha: 1.0, eps: 0.0 };
    let mut t = SumTree::new(ps.len().next_power_of_two(), cfg).unwrap();
    for i in 0..ps.len() {
        t.push(i);
    }
    let idx: Vec<SampleIndex> = (0..ps.len())
        .map(|slot| SampleIndex {
            slot,
            stamp: slot as u64 + 1,
        })
        .collect();
    t.update_priorities(&idx, ps).unwrap();
    t
}

pub fn chi_square_p(counts: &[usize], ps: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let total: f64 = ps.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(ps)
        .map(|(&c, &p)| {
            let e = n as f64 * p / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((ps.len() - 1) as f64).unwrap().cdf(stat)
}

// ---- game play

pub fn random_action(r: &mut ChaCha8Rng) -> Action {
    Action::ALL[r.random_range(0..Action::COUNT)]
}

fn loses_life(s: &GameState, a: Action) -> bool {
    s.step(a).map_or(true, |(_, o)| o.events.contains(Events::LIFE_LOST))
}

/// Safe for two steps: the action survives and some follow-up survives too.
pub fn safe(s: &GameState, a: Action) -> bool {
    match s.step(a) {
        Ok((n, o)) if !o.events.contains(Events::LIFE_LOST) => Action::ALL.iter().any(|&b| !loses_life(&n, b)),
        _ => false,
    }
}

/// Lookahead policy that zig-zags through the floe rows until the igloo is complete, then walks
/// home and enters it.
pub struct Scripted {
    pub descending: bool,
}

impl Scripted {
    pub fn act(&mut self, s: &GameState) -> Action {
        let band = s.agent.band as usize;
        let wanted = if s.igloo_pieces >= IGLOO_PIECES {
            if band > 0 {
                Action::Up
            } else {
                let cx = s.agent.x + SPRITE / 2;
                let target = IGLOO_X + 6;
                match cx.cmp(&target) {
                    std::cmp::Ordering::Less => Action::Right,
                    std::cmp::Ordering::Greater => Action::Left,
                    std::cmp::Ordering::Equal => Action::Up,
                }
            }
        } else {
            if band == FLOE_ROWS {
                self.descending = false;
            } else if band <= 1 {
                self.descending = true;
            }
            if self.descending {
                Action::Down
            } else {
                Action::Up
            }
        };
        if safe(s, wanted) {
            return wanted;
        }
        [Action::Noop, Action::Left, Action::Right, Action::Up, Action::Down]
            .into_iter()
            .find(|&a| safe(s, a))
            .unwrap_or(Action::Noop)
    }
}

pub fn play_scripted(seed: u64, max_steps: usize, mut visit: impl FnMut(&GameState)) -> GameState {
    let mut s = GameState::reset(&EnvConfig::default(), seed).unwrap();
    let mut p = Scripted { descending: true };
    for _ in 0..max_steps {
        if s.terminal || s.level >= 5 {
            break;
        }
        s = s.step(p.act(&s)).unwrap().0;
        visit(&s);
    }
    s
}

/// Random rollouts mixed with scripted play so that levels 1 to 5 are all represented.
pub fn state_corpus(target: usize) -> Vec<GameState> {
    let mut states = vec![];
    let mut seed = 0;
    while states.len() < target / 2 {
        play_scripted(seed, 5000, |s| states.push(s.clone()));
        seed += 1;
    }
    let mut r = rng(11);
    let scripted = states.len();
    let base: Vec<GameState> = states.iter().step_by(97).cloned().collect();
    let mut i = 0;
    while states.len() < target {
        let mut s = base[i % base.len()].clone();
        i += 1;
        for _ in 0..40 {
            if s.terminal {
                break;
            }
            s = s.step(random_action(&mut r)).unwrap().0;
            states.push(s.clone());
        }
    }
    assert!(states.len() > scripted);
    states
}

// ---- statistics

/// Two-sided Student-t tail by Simpson integration of the density over `[0, |t|]`.
pub fn t_tail_oracle(t: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut s = pdf(0.0) + pdf(t.abs());
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (1.0 - 2.0 * s * h / 3.0).max(0.0)
}

pub fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (m, v / n, n)
    };
    let (ma, sa, na) = stats(a);
    let (mb, sb, nb) = stats(b);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, t_tail_oracle(t, df))
}

/// 100 random normal sample pairs for the Welch comparison.
pub fn welch_pairs(seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut r = rng(seed);
    (0..100)
        .map(|_| {
            let na = r.random_range(2..30);
            let nb = r.random_range(2..30);
            let (ma, mb) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
            let (sa, sb) = (r.random_range(0.1..3.0), r.random_range(0.1..3.0));
            let a = (0..na).map(|_| Normal::new(ma, sa).unwrap().sample(&mut r)).collect();
            let b = (0..nb).map(|_| Normal::new(mb, sb).unwrap().sample(&mut r)).collect();
            (a, b)
        })
        .collect()
}

// ---- embeddings

pub fn clusters(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let centres: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..10).map(|_| r.random_range(-10.0..10.0)).collect())
        .collect();
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = vec![];
    let mut label = vec![];
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..50 {
            x.push(centre.iter().map(|v| v + noise.sample(&mut r)).collect());
            label.push(c);
        }
    }
    (x, label)
}

/// Lloyd's 3-means with farthest-first seeding.
pub fn three_means(p: &[[f64; 2]]) -> Vec<usize> {
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut c = vec![p[0]];
    while c.len() < 3 {
        let far = p
            .iter()
            .max_by(|a, b| {
                let da = c.iter().map(|&k| d2(**a, k)).fold(f64::INFINITY, f64::min);
                let db = c.iter().map(|&k| d2(**b, k)).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        c.push(*far);
    }
    let mut assign = vec![0; p.len()];
    for _ in 0..100 {
        for (i, &q) in p.iter().enumerate() {
            assign[i] = (0..3).min_by(|&a, &b| d2(q, c[a]).total_cmp(&d2(q, c[b]))).unwrap();
        }
        for (k, ck) in c.iter_mut().enumerate() {
            let members: Vec<_> = p
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == k)
                .map(|(q, _)| *q)
                .collect();
            if !members.is_empty() {
                let m = members.len() as f64;
                *ck = [
                    members.iter().map(|q| q[0]).sum::<f64>() / m,
                    members.iter().map(|q| q[1]).sum::<f64>() / m,
                ];
            }
        }
    }
    assign
}

pub fn purity(assign: &[usize], label: &[usize]) -> f64 {
    let mut hit = 0;
    for k in 0..3 {
        let mut counts = [0usize; 3];
        for (a, l) in assign.iter().zip(label) {
            if *a == k {
                counts[*l] += 1;
            }
        }
        hit += counts.iter().max().unwrap();
    }
    hit as f64 / assign.len() as f64
}
