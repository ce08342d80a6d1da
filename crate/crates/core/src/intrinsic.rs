//! Self-supervised reward generators.
//!
//! Each module observes a transition, emits a non-negative scalar reward and
//! then updates its own models with its own optimizer. Rewards are computed
//! with the weights as they were before that update.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::checkpoint::CheckpointEntry;
use crate::nn::{
    dot, log_softmax, softmax, Adam, AdamConfig, LayerSpec, NetworkSpec, NnError, Param, Scalar, Sequential, Tensor,
};
use crate::rng::Rng;
use crate::world::Action;

#[derive(Debug, Error)]
pub enum IntrinsicError {
    #[error("invalid intrinsic config: {0}")]
    InvalidConfig(String),
    #[error("unknown algorithm {0:?} (expected icm, rnd or contrastive)")]
    UnknownAlgorithm(String),
    #[error("reward summary of an empty episode")]
    Empty,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Icm,
    Rnd,
    Contrastive,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Icm, Algorithm::Rnd, Algorithm::Contrastive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Icm => "icm",
            Algorithm::Rnd => "rnd",
            Algorithm::Contrastive => "contrastive",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = IntrinsicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "icm" => Ok(Algorithm::Icm),
            "rnd" => Ok(Algorithm::Rnd),
            "contrastive" => Ok(Algorithm::Contrastive),
            other => Err(IntrinsicError::UnknownAlgorithm(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrinsicConfig {
    pub algorithm: Algorithm,
    pub strength: f64,
    pub gamma: f64,
    pub hidden_units: usize,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    /// ICM weight of the forward loss against the inverse loss.
    pub icm_forward_weight: f64,
    pub contrastive_memory: usize,
    pub contrastive_temperature: f64,
    pub contrastive_update_period: usize,
    /// Frames sampled per contrastive update (each yields two views).
    pub contrastive_batch: usize,
    /// Recent frames kept for contrastive updates.
    pub contrastive_replay: usize,
    pub crop_scale_min: f64,
    pub brightness_jitter: f64,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Icm,
            strength: 1.0,
            gamma: 0.99,
            hidden_units: 128,
            embedding_dim: 128,
            learning_rate: 3e-4,
            icm_forward_weight: 0.2,
            contrastive_memory: 1024,
            contrastive_temperature: 0.5,
            contrastive_update_period: 64,
            contrastive_batch: 32,
            contrastive_replay: 256,
            crop_scale_min: 0.8,
            brightness_jitter: 0.2,
        }
    }
}

impl IntrinsicConfig {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntrinsicError> {
        let bad = |m: &str| Err(IntrinsicError::InvalidConfig(m.to_string()));
        if !(self.strength >= 0.0) {
            return bad("strength must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.icm_forward_weight) {
            return bad("icm_forward_weight must be in [0, 1]");
        }
        if self.hidden_units == 0 || self.embedding_dim == 0 || !(self.learning_rate >= 0.0) {
            return bad("hidden_units and embedding_dim must be positive, learning_rate non-negative");
        }
        if self.contrastive_memory == 0 || self.contrastive_update_period == 0 {
            return bad("contrastive memory and update period must be positive");
        }
        if self.contrastive_batch < 2 || self.contrastive_replay < self.contrastive_batch {
            return bad("need 2 <= contrastive_batch <= contrastive_replay");
        }
        if !(self.contrastive_temperature > 0.0) {
            return bad("contrastive_temperature must be positive");
        }
        if !(self.crop_scale_min > 0.0 && self.crop_scale_min <= 1.0) || !(self.brightness_jitter >= 0.0) {
            return bad("crop_scale_min must be in (0, 1], brightness_jitter non-negative");
        }
        Ok(())
    }
}

/// Per-episode reward summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation; zero for a single reward.
    pub std: f64,
}

pub fn intrinsic_reward_stats(rewards: &[f64]) -> Result<RewardSummary, IntrinsicError> {
    if rewards.is_empty() {
        return Err(IntrinsicError::Empty);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = if rewards.len() < 2 {
        0.0
    } else {
        (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(RewardSummary {
        mean,
        min: rewards.iter().copied().fold(f64::INFINITY, f64::min),
        max: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        std,
    })
}

fn embedding_spec(input_shape: [usize; 3], cfg: &IntrinsicConfig) -> NetworkSpec {
    NetworkSpec::visual_encoder(input_shape, cfg.hidden_units, 0).then(&[LayerSpec::Dense {
        units: cfg.embedding_dim,
    }])
}

fn action_one_hot<T: Scalar>(a: Action) -> [T; 6] {
    let mut v = [T::ZERO; 6];
    v[a.translation_class()] = T::ONE;
    v[3 + a.rotation_class()] = T::ONE;
    v
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.to_f64() - y.to_f64()).powi(2)).sum()
}

fn all_params_mut<'a, T: Scalar>(nets: Vec<&'a mut Sequential<T>>) -> Vec<&'a mut Param<T>> {
    nets.into_iter().flat_map(|n| n.params_mut()).collect()
}

fn entries<T: Scalar>(nets: &[&Sequential<T>]) -> Vec<CheckpointEntry> {
    nets.iter()
        .flat_map(|n| n.params())
        .map(|p| CheckpointEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            data: p.value.iter().map(|v| v.to_f64() as f32).collect(),
        })
        .collect()
}

fn load<T: Scalar>(nets: Vec<&mut Sequential<T>>, found: &[CheckpointEntry]) -> Result<(), NnError> {
    for net in nets {
        for p in net.params_mut() {
            let e = found
                .iter()
                .find(|e| e.name == p.name)
                .ok_or_else(|| NnError::MissingParam(p.name.clone()))?;
            if e.shape != p.shape {
                return Err(NnError::ShapeMismatch {
                    expected: p.shape.clone(),
                    got: e.shape.clone(),
                });
            }
            for (d, &s) in p.value.iter_mut().zip(&e.data) {
                *d = T::from_f64(f64::from(s));
            }
        }
    }
    Ok(())
}

/// Intrinsic curiosity: reward is the error of a forward model predicting
/// the next embedding; an inverse model shapes the embedding.
#[derive(Debug, Clone)]
pub struct IcmModule<T: Scalar = f32> {
    pub encoder: Sequential<T>,
    pub forward_model: Sequential<T>,
    pub inverse_model: Sequential<T>,
    adam: Adam<T>,
    strength: f64,
    forward_weight: f64,
    lr: f64,
}

/// Losses of one ICM transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcmLoss {
    pub forward: f64,
    pub inverse: f64,
    pub total: f64,
}

impl<T: Scalar> IcmModule<T> {
    pub fn new(input_shape: [usize; 3], cfg: &IntrinsicConfig, rng: &mut Rng) -> Result<Self, IntrinsicError> {
        let e = cfg.embedding_dim;
        let h = cfg.hidden_units;
        let encoder_spec =
            NetworkSpec::visual_encoder(input_shape, h, 0).then(&[LayerSpec::Dense { units: e }, LayerSpec::Relu]);
        Ok(Self {
            encoder: Sequential::new(&encoder_spec, "icm.encoder", rng)?,
            forward_model: Sequential::new(&NetworkSpec::mlp(e + 6, &[h], e), "icm.forward", rng)?,
            inverse_model: Sequential::new(&NetworkSpec::mlp(2 * e, &[h], Action::COUNT), "icm.inverse", rng)?,
            adam: Adam::new(AdamConfig::default()),
            strength: cfg.strength,
            forward_weight: cfg.icm_forward_weight,
            lr: cfg.learning_rate,
        })
    }

    pub fn embed(&self, s: &Tensor<T>) -> Result<Vec<T>, NnError> {
        Ok(self.encoder.infer(s)?.data)
    }

    fn forward_input(phi: &[T], a: Action) -> Tensor<T> {
        let mut x = phi.to_vec();
        x.extend_from_slice(&action_one_hot::<T>(a));
        Tensor::from_vec(x)
    }

    fn pair(phi_s: &[T], phi_next: &[T]) -> Tensor<T> {
        let mut x = phi_s.to_vec();
        x.extend_from_slice(phi_next);
        Tensor::from_vec(x)
    }

    /// Predicted next embedding.
    pub fn predict(&self, phi_s: &[T], a: Action) -> Result<Vec<T>, NnError> {
        Ok(self.forward_model.infer(&Self::forward_input(phi_s, a))?.data)
    }

    /// Inverse-model logits over the nine joint actions.
    pub fn inverse_logits(&self, s: &Tensor<T>, s_next: &Tensor<T>) -> Result<Vec<T>, NnError> {
        let pair = Self::pair(&self.embed(s)?, &self.embed(s_next)?);
        Ok(self.inverse_model.infer(&pair)?.data)
    }

    /// `strength · ½‖f(φ(s), a) − φ(s')‖²` with the current weights.
    pub fn reward(&self, s: &Tensor<T>, a: Action, s_next: &Tensor<T>) -> Result<f64, NnError> {
        let pred = self.predict(&self.embed(s)?, a)?;
        Ok(self.strength * 0.5 * sq_dist(&pred, &self.embed(s_next)?))
    }

    /// `β·½‖f(φ(s), a) − φ(s')‖² + (1 − β)·CE(g(φ(s), φ(s')), a)`.
    pub fn loss(&self, s: &Tensor<T>, a: Action, s_next: &Tensor<T>) -> Result<IcmLoss, NnError> {
        let phi_s = self.embed(s)?;
        let phi_n = self.embed(s_next)?;
        let forward = 0.5 * sq_dist(&self.predict(&phi_s, a)?, &phi_n);
        let logits = self.inverse_model.infer(&Self::pair(&phi_s, &phi_n))?.data;
        let inverse = -log_softmax(&logits)[a.index()].to_f64();
        Ok(IcmLoss {
            forward,
            inverse,
            total: self.forward_weight * forward + (1.0 - self.forward_weight) * inverse,
        })
    }

    /// Accumulates gradients of [`loss`](Self::loss). The encoder receives
    /// gradients through both embeddings, including the forward target.
    pub fn accumulate_gradients(&mut self, s: &Tensor<T>, a: Action, s_next: &Tensor<T>) -> Result<IcmLoss, NnError> {
        let bf = T::from_f64(self.forward_weight);
        let bi = T::from_f64(1.0 - self.forward_weight);
        let e = self.encoder.output_dim();

        let phi_n = self.encoder.forward(s_next)?.data;
        let phi_s = self.encoder.infer(s)?.data;

        let pred = self.forward_model.forward(&Self::forward_input(&phi_s, a))?.data;
        let diff: Vec<T> = pred.iter().zip(&phi_n).map(|(&p, &t)| p - t).collect();
        let forward = 0.5 * diff.iter().map(|d| d.to_f64().powi(2)).sum::<f64>();
        let g_pred = Tensor::from_vec(diff.iter().map(|&d| bf * d).collect());
        let g_fwd_in = self.forward_model.backward(&g_pred)?.data;

        let logits = self.inverse_model.forward(&Self::pair(&phi_s, &phi_n))?.data;
        let lp = log_softmax(&logits);
        let inverse = -lp[a.index()].to_f64();
        let mut g_logits = softmax(&logits);
        g_logits[a.index()] -= T::ONE;
        for g in &mut g_logits {
            *g *= bi;
        }
        let g_pair = self.inverse_model.backward(&Tensor::from_vec(g_logits))?.data;

        let g_phi_n: Vec<T> = (0..e).map(|i| g_pair[e + i] - bf * diff[i]).collect();
        self.encoder.backward_params(&Tensor::from_vec(g_phi_n))?;
        let g_phi_s: Vec<T> = (0..e).map(|i| g_fwd_in[i] + g_pair[i]).collect();
        self.encoder.forward(s)?;
        self.encoder.backward_params(&Tensor::from_vec(g_phi_s))?;

        Ok(IcmLoss {
            forward,
            inverse,
            total: self.forward_weight * forward + (1.0 - self.forward_weight) * inverse,
        })
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.forward_model.zero_grad();
        self.inverse_model.zero_grad();
    }

    /// One gradient step on a single transition.
    pub fn train_step(&mut self, s: &Tensor<T>, a: Action, s_next: &Tensor<T>) -> Result<IcmLoss, NnError> {
        self.zero_grad();
        let loss = self.accumulate_gradients(s, a, s_next)?;
        let mut ps = all_params_mut(vec![
            &mut self.encoder,
            &mut self.forward_model,
            &mut self.inverse_model,
        ]);
        self.adam.step(&mut ps, self.lr);
        Ok(loss)
    }

    pub fn step(&mut self, s: &Tensor<T>, a: Action, s_next: &Tensor<T>) -> Result<f64, NnError> {
        let r = self.reward(s, a, s_next)?;
        self.train_step(s, a, s_next)?;
        Ok(r)
    }
}

/// Welford running variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStd {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStd {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Sample standard deviation, or 1 until it is meaningful.
    pub fn divisor(&self) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        let sd = (self.m2 / (self.count - 1) as f64).sqrt();
        if sd > 1e-8 {
            sd
        } else {
            1.0
        }
    }
}

/// Random network distillation: reward is the error of a trained predictor
/// against a frozen random network.
#[derive(Debug, Clone)]
pub struct RndModule<T: Scalar = f32> {
    target: Sequential<T>,
    pub predictor: Sequential<T>,
    adam: Adam<T>,
    normalizer: RunningStd,
    strength: f64,
    lr: f64,
}

impl<T: Scalar> RndModule<T> {
    pub fn new(input_shape: [usize; 3], cfg: &IntrinsicConfig, rng: &mut Rng) -> Result<Self, IntrinsicError> {
        let spec = embedding_spec(input_shape, cfg);
        Ok(Self {
            target: Sequential::new(&spec, "rnd.target", rng)?,
            predictor: Sequential::new(&spec, "rnd.predictor", rng)?,
            adam: Adam::new(AdamConfig::default()),
            normalizer: RunningStd::default(),
            strength: cfg.strength,
            lr: cfg.learning_rate,
        })
    }

    pub fn target(&self) -> &Sequential<T> {
        &self.target
    }

    /// Makes the predictor an exact copy of the target.
    pub fn copy_target_into_predictor(&mut self) {
        self.predictor.copy_weights_from(&self.target);
    }

    /// `‖f̂(s) − f(s)‖²`, unnormalized.
    pub fn raw_reward(&self, s: &Tensor<T>) -> Result<f64, NnError> {
        Ok(sq_dist(&self.predictor.infer(s)?.data, &self.target.infer(s)?.data))
    }

    /// Accumulates the gradient of the raw error into the predictor.
    pub fn accumulate_gradients(&mut self, s: &Tensor<T>) -> Result<f64, NnError> {
        let target = self.target.infer(s)?.data;
        let pred = self.predictor.forward(s)?.data;
        let two = T::from_f64(2.0);
        let g: Vec<T> = pred.iter().zip(&target).map(|(&p, &t)| two * (p - t)).collect();
        self.predictor.backward_params(&Tensor::from_vec(g))?;
        Ok(sq_dist(&pred, &target))
    }

    pub fn train_step(&mut self, s: &Tensor<T>) -> Result<f64, NnError> {
        self.predictor.zero_grad();
        let loss = self.accumulate_gradients(s)?;
        self.adam.step(&mut self.predictor.params_mut(), self.lr);
        Ok(loss)
    }

    pub fn step(&mut self, s_next: &Tensor<T>) -> Result<f64, NnError> {
        let raw = self.raw_reward(s_next)?;
        self.normalizer.push(raw);
        let r = self.strength * raw / self.normalizer.divisor();
        self.train_step(s_next)?;
        Ok(r)
    }
}

/// NT-Xent over `2N` views where views `2j` and `2j + 1` form a positive
/// pair. Takes unnormalized projections and returns the mean loss with its
/// gradient with respect to them.
pub fn nt_xent<T: Scalar>(h: &[Vec<T>], tau: f64) -> (f64, Vec<Vec<T>>) {
    let n = h.len();
    assert!(n >= 2 && n % 2 == 0, "NT-Xent needs an even number of views");
    let norms: Vec<f64> = h.iter().map(|v| dot(v, v).to_f64().sqrt().max(1e-12)).collect();
    let z: Vec<Vec<f64>> = h
        .iter()
        .zip(&norms)
        .map(|(v, &nv)| v.iter().map(|x| x.to_f64() / nv).collect())
        .collect();
    let d = z[0].len();
    let sim = |i: usize, k: usize| dot(&z[i], &z[k]) / tau;
    // coef[i][k] = dL/ds_ik
    let mut coef = vec![vec![0.0; n]; n];
    let mut loss = 0.0;
    for i in 0..n {
        let s: Vec<f64> = (0..n)
            .map(|k| if k == i { f64::NEG_INFINITY } else { sim(i, k) })
            .collect();
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + s.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - s[i ^ 1];
        for k in 0..n {
            if k != i {
                coef[i][k] = ((s[k] - lse).exp() - if k == i ^ 1 { 1.0 } else { 0.0 }) / n as f64;
            }
        }
    }
    let grads = (0..n)
        .map(|i| {
            let mut gz = vec![0.0; d];
            for k in 0..n {
                let c = (coef[i][k] + coef[k][i]) / tau;
                if c != 0.0 {
                    for (g, zk) in gz.iter_mut().zip(&z[k]) {
                        *g += c * zk;
                    }
                }
            }
            let zg: f64 = gz.iter().zip(&z[i]).map(|(a, b)| a * b).sum();
            gz.iter()
                .zip(&z[i])
                .map(|(g, zi)| T::from_f64((g - zi * zg) / norms[i]))
                .collect()
        })
        .collect();
    (loss / n as f64, grads)
}

/// Random crop (side fraction in `[min_scale, 1]`) resized back with
/// nearest-neighbor sampling, then an additive brightness shift.
pub fn augment<T: Scalar>(x: &Tensor<T>, min_scale: f64, jitter: f64, rng: &mut Rng) -> Tensor<T> {
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let scale = rng.random_range(min_scale..=1.0);
    let ch = ((h as f64 * scale).round() as usize).clamp(1, h);
    let cw = ((w as f64 * scale).round() as usize).clamp(1, w);
    let y0 = rng.random_range(0..=h - ch);
    let x0 = rng.random_range(0..=w - cw);
    let shift = if jitter > 0.0 {
        rng.random_range(-jitter..=jitter)
    } else {
        0.0
    };
    let shift = T::from_f64(shift);
    let mut out = Vec::with_capacity(x.len());
    for ci in 0..c {
        for yy in 0..h {
            let sy = y0 + yy * ch / h;
            for xx in 0..w {
                let sx = x0 + xx * cw / w;
                let v = x.data[(ci * h + sy) * w + sx] + shift;
                out.push(v.max(T::ZERO).min(T::ONE));
            }
        }
    }
    Tensor {
        shape: x.shape.clone(),
        data: out,
    }
}

/// Contrastive curiosity: reward is the embedding distance from the closest
/// recent observation; the embedding is trained with NT-Xent on augmented
/// views of recent frames.
#[derive(Debug, Clone)]
pub struct ContrastiveModule<T: Scalar = f32> {
    pub network: Sequential<T>,
    adam: Adam<T>,
    memory: VecDeque<Vec<f64>>,
    replay: VecDeque<Tensor<T>>,
    steps: u64,
    cfg: IntrinsicConfig,
}

impl<T: Scalar> ContrastiveModule<T> {
    pub fn new(input_shape: [usize; 3], cfg: &IntrinsicConfig, rng: &mut Rng) -> Result<Self, IntrinsicError> {
        Ok(Self {
            network: Sequential::new(&embedding_spec(input_shape, cfg), "contrastive", rng)?,
            adam: Adam::new(AdamConfig::default()),
            memory: VecDeque::with_capacity(cfg.contrastive_memory),
            replay: VecDeque::with_capacity(cfg.contrastive_replay),
            steps: 0,
            cfg: cfg.clone(),
        })
    }

    /// L2-normalized projection.
    pub fn embed(&self, s: &Tensor<T>) -> Result<Vec<f64>, NnError> {
        let h: Vec<f64> = self.network.infer(s)?.data.iter().map(|v| v.to_f64()).collect();
        let n = h.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        Ok(h.into_iter().map(|v| v / n).collect())
    }

    pub fn memory_len(&self) -> usize {
        self.memory.len()
    }

    fn reward_for(&self, z: &[f64]) -> f64 {
        if self.memory.is_empty() {
            return self.cfg.strength;
        }
        let best = self
            .memory
            .iter()
            .map(|m| dot(m.as_slice(), z))
            .fold(f64::NEG_INFINITY, f64::max);
        self.cfg.strength * (1.0 - best).max(0.0)
    }

    /// Reward `s` would receive now, without touching memory or weights.
    pub fn peek_reward(&self, s: &Tensor<T>) -> Result<f64, NnError> {
        Ok(self.reward_for(&self.embed(s)?))
    }

    /// One NT-Xent update on augmented pairs drawn from the replay.
    pub fn train_step(&mut self, rng: &mut Rng) -> Result<f64, NnError> {
        let n = self.cfg.contrastive_batch.min(self.replay.len());
        let picks = sample(rng, self.replay.len(), n).into_vec();
        let mut views = Vec::with_capacity(2 * n);
        for &i in &picks {
            for _ in 0..2 {
                views.push(augment(
                    &self.replay[i],
                    self.cfg.crop_scale_min,
                    self.cfg.brightness_jitter,
                    rng,
                ));
            }
        }
        let h: Vec<Vec<T>> = views
            .iter()
            .map(|v| self.network.infer(v).map(|t| t.data))
            .collect::<Result<_, _>>()?;
        let (loss, grads) = nt_xent(&h, self.cfg.contrastive_temperature);
        self.network.zero_grad();
        for (v, g) in views.iter().zip(grads) {
            self.network.forward(v)?;
            self.network.backward_params(&Tensor::from_vec(g))?;
        }
        self.adam.step(&mut self.network.params_mut(), self.cfg.learning_rate);
        Ok(loss)
    }

    pub fn step(&mut self, s_next: &Tensor<T>, rng: &mut Rng) -> Result<f64, NnError> {
        let z = self.embed(s_next)?;
        let r = self.reward_for(&z);
        if self.memory.len() == self.cfg.contrastive_memory {
            self.memory.pop_front();
        }
        self.memory.push_back(z);
        if self.replay.len() == self.cfg.contrastive_replay {
            self.replay.pop_front();
        }
        self.replay.push_back(s_next.clone());
        self.steps += 1;
        if self.steps % self.cfg.contrastive_update_period as u64 == 0 && self.replay.len() >= 2 {
            self.train_step(rng)?;
        }
        Ok(r)
    }
}

/// One of the three reward generators.
#[derive(Debug, Clone)]
pub enum IntrinsicModule<T: Scalar = f32> {
    Icm(IcmModule<T>),
    Rnd(RndModule<T>),
    Contrastive(ContrastiveModule<T>),
}

impl<T: Scalar> IntrinsicModule<T> {
    pub fn new(input_shape: [usize; 3], cfg: &IntrinsicConfig, rng: &mut Rng) -> Result<Self, IntrinsicError> {
        cfg.validate()?;
        Ok(match cfg.algorithm {
            Algorithm::Icm => Self::Icm(IcmModule::new(input_shape, cfg, rng)?),
            Algorithm::Rnd => Self::Rnd(RndModule::new(input_shape, cfg, rng)?),
            Algorithm::Contrastive => Self::Contrastive(ContrastiveModule::new(input_shape, cfg, rng)?),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Self::Icm(_) => Algorithm::Icm,
            Self::Rnd(_) => Algorithm::Rnd,
            Self::Contrastive(_) => Algorithm::Contrastive,
        }
    }

    /// Reward for the transition `s --a--> s_next`, followed by the module's
    /// own update.
    pub fn step(&mut self, s: &Tensor<T>, a: Action, s_next: &Tensor<T>, rng: &mut Rng) -> Result<f64, NnError> {
        let r = match self {
            Self::Icm(m) => m.step(s, a, s_next)?,
            Self::Rnd(m) => m.step(s_next)?,
            Self::Contrastive(m) => m.step(s_next, rng)?,
        };
        debug_assert!(r.is_finite() && r >= 0.0, "intrinsic reward {r}");
        Ok(r)
    }

    fn networks(&self) -> Vec<&Sequential<T>> {
        match self {
            Self::Icm(m) => vec![&m.encoder, &m.forward_model, &m.inverse_model],
            Self::Rnd(m) => vec![&m.target, &m.predictor],
            Self::Contrastive(m) => vec![&m.network],
        }
    }

    pub fn to_entries(&self) -> Vec<CheckpointEntry> {
        entries(&self.networks())
    }

    pub fn load_entries(&mut self, found: &[CheckpointEntry]) -> Result<(), NnError> {
        let nets = match self {
            Self::Icm(m) => vec![&mut m.encoder, &mut m.forward_model, &mut m.inverse_model],
            Self::Rnd(m) => vec![&mut m.target, &mut m.predictor],
            Self::Contrastive(m) => vec![&mut m.network],
        };
        load(nets, found)
    }
}
