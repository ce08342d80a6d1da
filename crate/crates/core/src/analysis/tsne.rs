//! Exact t-SNE.
//!
//! Rows are processed in a canonical (sorted) order and each row's starting
//! point is seeded from its own contents, so permuting the input permutes
//! the output and nothing else.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::AnalysisError;
use crate::rng::{derive_seed, splitmix64, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 10.0,
            iterations: 1000,
            learning_rate: 100.0,
            seed: 0,
        }
    }
}

const EXAGGERATION: f64 = 4.0;
const EXAGGERATION_ITERS: usize = 100;
const MOMENTUM_SWITCH: usize = 250;
const ENTROPY_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) at the initial layout.
    pub kl_initial: f64,
    pub kl_final: f64,
    pub iterations: usize,
    pub seed: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Conditional affinities of one row, with the Gaussian precision found by
/// bisection so the entropy matches ln(perplexity).
fn row_affinities(d: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    let mut p = vec![0.0; d.len()];
    for _ in 0..200 {
        let dmin = d
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for (j, &dj) in d.iter().enumerate() {
            p[j] = if j == i { 0.0 } else { (-(dj - dmin) * beta).exp() };
            sum += p[j];
        }
        let mut h = 0.0;
        for (j, pj) in p.iter_mut().enumerate() {
            *pj /= sum;
            if j != i && *pj > 0.0 {
                h -= *pj * pj.ln();
            }
        }
        let diff = h - target;
        if diff.abs() < ENTROPY_TOL {
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
    p
}

fn joint_affinities(x: &[Vec<f64>], perplexity: f64) -> Vec<f64> {
    let n = x.len();
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        let d: Vec<f64> = (0..n).map(|j| sq_dist(&x[i], &x[j])).collect();
        cond[i * n..(i + 1) * n].copy_from_slice(&row_affinities(&d, i, perplexity));
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    p
}

/// Student-t numerators and their sum.
fn kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                sum += v;
            }
        }
    }
    (num, sum)
}

fn kl(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let (num, sum) = kernel(y);
    let n = y.len();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[i * n + j];
                let qij = (num[i * n + j] / sum).max(1e-12);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

fn row_seed(seed: u64, row: &[f64]) -> u64 {
    let mut h = 0u64;
    for v in row {
        h = splitmix64(h ^ v.to_bits());
    }
    derive_seed(seed, h)
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

pub fn tsne(rows: &[Vec<f64>], config: &TsneConfig) -> Result<Embedding, AnalysisError> {
    let n = rows.len();
    if n < 3 {
        return Err(AnalysisError::Tsne(format!("need at least 3 rows, got {n}")));
    }
    if !(config.perplexity > 0.0 && config.perplexity < n as f64) {
        return Err(AnalysisError::Tsne(format!(
            "perplexity {} must be in (0, {n})",
            config.perplexity
        )));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(AnalysisError::Tsne("rows must be finite and of equal length".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .iter()
            .zip(&rows[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let x: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let p = joint_affinities(&x, config.perplexity);

    let mut y: Vec<[f64; 2]> = x
        .iter()
        .map(|r| {
            let mut rng = Rng::seed_from_u64(row_seed(config.seed, r));
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [1e-4 * a, 1e-4 * b]
        })
        .collect();
    center(&mut y);
    let kl_initial = kl(&p, &y);

    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    for iter in 0..config.iterations {
        let exaggeration = if iter < EXAGGERATION_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < MOMENTUM_SWITCH { 0.5 } else { 0.8 };
        let (num, sum) = kernel(&y);
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i != j {
                    let m = (exaggeration * p[i * n + j] - num[i * n + j] / sum) * num[i * n + j];
                    g[0] += m * (y[i][0] - y[j][0]);
                    g[1] += m * (y[i][1] - y[j][1]);
                }
            }
            for k in 0..2 {
                let grad = 4.0 * g[k];
                gains[i][k] = if (grad > 0.0) != (velocity[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8).max(0.01)
                };
                velocity[i][k] = momentum * velocity[i][k] - config.learning_rate * gains[i][k] * grad;
            }
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
        center(&mut y);
    }
    let kl_final = kl(&p, &y);

    let mut coords = vec![[0.0; 2]; n];
    for (k, &i) in order.iter().enumerate() {
        coords[i] = y[k];
    }
    Ok(Embedding {
        coords,
        kl_initial,
        kl_final,
        iterations: config.iterations,
        seed: config.seed,
    })
}
