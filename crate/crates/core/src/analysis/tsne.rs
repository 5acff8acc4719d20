use rand_distr::{Distribution, Normal};

use crate::env::named_rng;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum_start: f64,
    pub momentum_final: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum_start: 0.5,
            momentum_final: 0.8,
        }
    }
}

/// A 2-d embedding and the per-point scalar it is coloured by.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingResult {
    pub coords: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    /// Final KL divergence between the input and embedding affinities.
    pub kl: f64,
    /// KL after every iteration (exaggerated affinities during early exaggeration).
    pub kl_history: Vec<f64>,
}

fn sq_dists(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row-conditional affinities with each bandwidth tuned so the row entropy matches `perplexity`.
fn conditional_affinities(d: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        // Shift by the nearest-neighbour distance so exponentials stay in range.
        let dmin = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::INFINITY, f64::min);
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut dot = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = (-(row[j] - dmin) * beta).exp();
                p[i * n + j] = w;
                sum += w;
                dot += w * (row[j] - dmin);
            }
            let entropy = sum.ln() + beta * dot / sum;
            for j in 0..n {
                p[i * n + j] /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < 1e-10 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
    }
    p
}

/// Student-t affinities of the embedding: unnormalised kernel and its sum.
fn embedding_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut q = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            q[i * n + j] = w;
            q[j * n + i] = w;
            sum += 2.0 * w;
        }
    }
    (q, sum)
}

fn kl_divergence(p: &[f64], y: &[[f64; 2]], scale: f64) -> f64 {
    let n = y.len();
    let (q, sum) = embedding_kernel(y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = scale * p[i * n + j];
            let qij = (q[i * n + j] / sum).max(1e-12);
            kl += pij * (pij / qij).ln();
        }
    }
    kl
}

fn gradient(p: &[f64], y: &[[f64; 2]], scale: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    let (q, sum) = embedding_kernel(y);
    let mut g = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = q[i * n + j];
            let m = 4.0 * (scale * p[i * n + j] - w / sum) * w;
            g[i][0] += m * (y[i][0] - y[j][0]);
            g[i][1] += m * (y[i][1] - y[j][1]);
        }
    }
    g
}

/// Exact t-SNE of the rows of `x` into two dimensions.
///
/// During early exaggeration the usual momentum and per-coordinate gain updates apply. Afterwards
/// a step is only accepted if it does not raise the KL divergence; a rejected step halves the
/// learning rate and clears the velocity, so the objective is monotone from then on.
pub fn tsne(x: &[Vec<f64>], cfg: &TsneConfig, seed: u64) -> Result<EmbeddingResult> {
    let n = x.len();
    if n < 4 {
        return Err(Error::Invalid(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let dim = x[0].len();
    if dim == 0 || x.iter().any(|r| r.len() != dim) {
        return Err(Error::Invalid(
            "t-SNE input rows must share a positive dimension".into(),
        ));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE input contains non-finite values".into()));
    }
    let d = sq_dists(x);
    if d.iter().all(|&v| v == 0.0) {
        return Err(Error::Invalid("t-SNE input is degenerate: all points identical".into()));
    }
    let perplexity = cfg.perplexity.min(n as f64 / 4.0);
    let cond = conditional_affinities(&d, n, perplexity.max(1.0));
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut rng = named_rng(seed, "tsne");
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let mut vel = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut lr = cfg.learning_rate;
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut current_kl = f64::NAN;
    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iters;
        let scale = if early { cfg.exaggeration } else { 1.0 };
        let mom = if early { cfg.momentum_start } else { cfg.momentum_final };
        let g = gradient(&p, &y, scale);
        let mut next_gains = gains.clone();
        let mut next_vel = vel.clone();
        let mut cand = y.clone();
        for i in 0..n {
            for k in 0..2 {
                let same = (g[i][k] > 0.0) == (vel[i][k] > 0.0);
                let gain = if same { gains[i][k] * 0.8 } else { gains[i][k] + 0.2 };
                next_gains[i][k] = gain.max(0.01);
                next_vel[i][k] = mom * vel[i][k] - lr * next_gains[i][k] * g[i][k];
                cand[i][k] += next_vel[i][k];
            }
        }
        center(&mut cand);
        if early {
            y = cand;
            vel = next_vel;
            gains = next_gains;
            current_kl = kl_divergence(&p, &y, scale);
        } else {
            if it == cfg.exaggeration_iters || current_kl.is_nan() {
                current_kl = kl_divergence(&p, &y, 1.0);
            }
            let cand_kl = kl_divergence(&p, &cand, 1.0);
            if cand_kl <= current_kl {
                y = cand;
                vel = next_vel;
                gains = next_gains;
                current_kl = cand_kl;
            } else {
                lr *= 0.5;
                vel = vec![[0.0; 2]; n];
            }
        }
        history.push(current_kl);
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE embedding diverged".into()));
    }
    let kl = kl_divergence(&p, &y, 1.0);
    Ok(EmbeddingResult {
        coords: y,
        values: vec![0.0; n],
        kl,
        kl_history: history,
    })
}

fn center(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mx = y.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = y.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in y {
        p[0] -= mx;
        p[1] -= my;
    }
}
