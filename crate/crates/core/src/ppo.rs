//! Proximal policy optimization over the shared visual encoder.
//!
//! The policy factorizes into two independent categoricals (translation and
//! rotation, three classes each) plus a scalar value head, all read off one
//! seven-unit linear output.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Layer;
use crate::nn::{log_softmax, softmax, Adam, AdamConfig, LayerSpec, NetworkSpec, NnError, Scalar, Sequential, Tensor};
use crate::render::Observation;
use crate::rng::Rng;
use crate::world::Action;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid ppo config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("rollout buffer holds {len} of {capacity} transitions")]
    BufferNotFull { len: usize, capacity: usize },
    #[error("rollout buffer is full")]
    BufferFull,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub max_steps: u64,
    pub epochs_per_update: usize,
    pub hidden_units: usize,
    pub num_layers: usize,
    pub value_coef: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 500,
            buffer_size: 2048,
            beta: 0.01,
            epsilon: 0.2,
            lambda: 0.95,
            gamma: 0.99,
            max_steps: 1_000_000,
            epochs_per_update: 3,
            hidden_units: 128,
            num_layers: 2,
            value_coef: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 || self.buffer_size < self.batch_size {
            return bad("need 0 < batch_size <= buffer_size");
        }
        if !(self.learning_rate >= 0.0) || !(self.beta >= 0.0) || !(self.value_coef >= 0.0) {
            return bad("learning_rate, beta and value_coef must be non-negative");
        }
        if self.epochs_per_update == 0 || self.hidden_units == 0 {
            return bad("epochs_per_update and hidden_units must be positive");
        }
        Ok(())
    }
}

/// Linearly decaying learning rate, floored at zero.
pub fn lr_schedule(env_step: u64, config: &PpoConfig) -> f64 {
    let frac = 1.0 - env_step as f64 / config.max_steps as f64;
    config.learning_rate * frac.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput<T = f32> {
    pub translation: [T; 3],
    pub rotation: [T; 3],
    pub value: T,
}

impl<T: Scalar> PolicyOutput<T> {
    pub fn from_slice(out: &[T]) -> Self {
        Self {
            translation: [out[0], out[1], out[2]],
            rotation: [out[3], out[4], out[5]],
            value: out[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().chain(&self.rotation).all(|v| v.is_finite()) && self.value.is_finite()
    }

    pub fn log_prob(&self, action: Action) -> T {
        log_softmax(&self.translation)[action.translation_class()]
            + log_softmax(&self.rotation)[action.rotation_class()]
    }
}

const LOGIT_INIT_GAIN: f64 = 0.1;

/// Encoder, `num_layers` hidden layers, then the seven-unit head.
#[derive(Debug, Clone)]
pub struct PolicyNet<T: Scalar = f32> {
    pub net: Sequential<T>,
}

impl<T: Scalar> PolicyNet<T> {
    pub fn spec(input_shape: [usize; 3], config: &PpoConfig) -> NetworkSpec {
        NetworkSpec::visual_encoder(input_shape, config.hidden_units, config.num_layers)
            .then(&[LayerSpec::Dense { units: 7 }])
    }

    /// The six logit rows of the head start at 0.1× their He scale so the
    /// initial policy is close to uniform.
    pub fn new(input_shape: [usize; 3], config: &PpoConfig, rng: &mut Rng) -> Result<Self, PpoError> {
        let mut net = Sequential::new(&Self::spec(input_shape, config), "policy", rng)?;
        if let Some(Layer::Dense(head)) = net.layers.last_mut() {
            let logits = 6 * head.in_dim;
            for w in &mut head.weight.value[..logits] {
                *w = *w * T::from_f64(LOGIT_INIT_GAIN);
            }
        }
        Ok(Self { net })
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<PolicyOutput<T>, NnError> {
        Ok(PolicyOutput::from_slice(&self.net.infer(x)?.data))
    }
}

fn sample_categorical<T: Scalar>(logits: &[T], rng: &mut Rng) -> usize {
    let p = softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi.to_f64();
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Samples both branches; the joint log-probability is the sum of the branch
/// log-probabilities.
pub fn select_action<T: Scalar>(
    policy: &PolicyNet<T>,
    observation: &Tensor<T>,
    rng: &mut Rng,
) -> Result<(Action, T, T), NnError> {
    let out = policy.infer(observation)?;
    let action = Action::from_branches(
        sample_categorical(&out.translation, rng),
        sample_categorical(&out.rotation, rng),
    );
    Ok((action, out.log_prob(action), out.value))
}

/// Generalized advantage estimation.
///
/// `values` has one more entry than `rewards`: the bootstrap for the state
/// after the last transition. A `true` in `dones[t]` marks transition `t` as
/// the last of its episode, cutting both the bootstrap and the accumulation.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(PpoError::LengthMismatch(format!(
            "{n} rewards need {} values and {n} done flags, got {} and {}",
            n + 1,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Rescales to zero mean and unit (population) standard deviation. A
/// constant input becomes all zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-12 {
        adv.fill(0.0);
    } else {
        for a in adv {
            *a = (*a - mean) / sd;
        }
    }
}

/// The clipped surrogate objective for one sample.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub ratio: f64,
}

impl SampleLoss {
    pub fn total(&self, config: &PpoConfig) -> f64 {
        self.policy + config.value_coef * self.value - config.beta * self.entropy
    }
}

/// Per-sample loss and its gradient with respect to the seven network
/// outputs. `value` in the returned loss is the squared error `(V - R)²`;
/// `value_coef` (0.5) scales it in [`SampleLoss::total`] and in the gradient.
pub fn sample_loss<T: Scalar>(
    out: &[T],
    action: Action,
    old_log_prob: f64,
    advantage: f64,
    ret: f64,
    config: &PpoConfig,
) -> (SampleLoss, Vec<T>) {
    let po = PolicyOutput::from_slice(out);
    let mut grad = vec![T::ZERO; 7];
    let mut entropy = 0.0;
    let mut logp = 0.0;
    let branches = [
        (&po.translation, action.translation_class(), 0),
        (&po.rotation, action.rotation_class(), 3),
    ];
    let mut probs = Vec::with_capacity(2);
    for (logits, class, _) in branches {
        let lp: Vec<f64> = log_softmax(logits).iter().map(|v| v.to_f64()).collect();
        let h = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
        entropy += h;
        logp += lp[class];
        probs.push((lp, h));
    }
    let ratio = (logp - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - config.epsilon, 1.0 + config.epsilon) * advantage;
    let policy = -unclipped.min(clipped);
    // d(-surrogate)/d(log pi): nonzero only when the unclipped term is the min.
    let d_logp = if unclipped <= clipped { -unclipped } else { 0.0 };
    for ((_, class, off), (lp, h)) in branches.iter().zip(&probs) {
        for j in 0..3 {
            let p = lp[j].exp();
            let onehot = if j == *class { 1.0 } else { 0.0 };
            let g = d_logp * (onehot - p) + config.beta * p * (lp[j] + h);
            grad[off + j] = T::from_f64(g);
        }
    }
    let v = po.value.to_f64();
    grad[6] = T::from_f64(2.0 * config.value_coef * (v - ret));
    (
        SampleLoss {
            policy,
            value: (v - ret).powi(2),
            entropy,
            ratio,
        },
        grad,
    )
}

/// On-policy transitions awaiting an update.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    capacity: usize,
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            ..Self::default()
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity
    }

    pub fn push(
        &mut self,
        observation: Observation,
        action: Action,
        log_prob: f64,
        value: f64,
        reward: f64,
        done: bool,
    ) -> Result<(), PpoError> {
        if self.is_full() {
            return Err(PpoError::BufferFull);
        }
        self.observations.push(observation);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
        Ok(())
    }

    /// Marks the most recent transition as the end of an episode.
    pub fn mark_done(&mut self) {
        if let Some(d) = self.dones.last_mut() {
            *d = true;
        }
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.values.clear();
        self.rewards.clear();
        self.dones.clear();
    }
}

/// Mean losses over every minibatch of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// Splits `0..n` into consecutive minibatches of `batch` after shuffling;
/// the last minibatch holds the remainder, so no sample is dropped.
pub fn minibatches(n: usize, batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch).map(|c| c.to_vec()).collect()
}

/// Learner state: policy network and its optimizer.
#[derive(Debug, Clone)]
pub struct PpoLearner<T: Scalar = f32> {
    pub policy: PolicyNet<T>,
    pub adam: Adam<T>,
    pub config: PpoConfig,
}

impl<T: Scalar> PpoLearner<T> {
    pub fn new(input_shape: [usize; 3], config: PpoConfig, rng: &mut Rng) -> Result<Self, PpoError> {
        config.validate()?;
        Ok(Self {
            policy: PolicyNet::new(input_shape, &config, rng)?,
            adam: Adam::new(AdamConfig::default()),
            config,
        })
    }

    /// Runs the clipped-surrogate update on a full buffer and clears it.
    /// `bootstrap_value` is the value estimate of the state following the
    /// last transition (ignored if that transition ended an episode).
    pub fn update(
        &mut self,
        buffer: &mut RolloutBuffer,
        bootstrap_value: f64,
        lr: f64,
        rng: &mut Rng,
    ) -> Result<UpdateStats, PpoError> {
        if !buffer.is_full() {
            return Err(PpoError::BufferNotFull {
                len: buffer.len(),
                capacity: buffer.capacity(),
            });
        }
        let cfg = self.config.clone();
        let mut values = buffer.values.clone();
        values.push(bootstrap_value);
        let (mut adv, returns) = gae(&buffer.rewards, &values, &buffer.dones, cfg.gamma, cfg.lambda)?;
        normalize_advantages(&mut adv);

        let mut stats = UpdateStats::default();
        let mut clipped = 0usize;
        let mut seen = 0usize;
        for _ in 0..cfg.epochs_per_update {
            for mb in minibatches(buffer.len(), cfg.batch_size, rng) {
                self.policy.net.zero_grad();
                let (mut pl, mut vl, mut ent) = (0.0, 0.0, 0.0);
                for &i in &mb {
                    let x = buffer.observations[i].to_tensor::<T>();
                    let out = self.policy.net.forward(&x)?;
                    let (loss, g) = sample_loss(
                        &out.data,
                        buffer.actions[i],
                        buffer.log_probs[i],
                        adv[i],
                        returns[i],
                        &cfg,
                    );
                    self.policy.net.backward_params(&Tensor::from_vec(g))?;
                    pl += loss.policy;
                    vl += loss.value;
                    ent += loss.entropy;
                    if (loss.ratio - 1.0).abs() > cfg.epsilon {
                        clipped += 1;
                    }
                }
                let m = mb.len() as f64;
                self.policy.net.scale_grads(T::from_f64(1.0 / m));
                self.adam.step(&mut self.policy.net.params_mut(), lr);
                stats.policy_loss += pl / m;
                stats.value_loss += vl / m;
                stats.entropy += ent / m;
                stats.minibatches += 1;
                seen += mb.len();
            }
        }
        let k = stats.minibatches as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.clip_fraction = clipped as f64 / seen as f64;
        buffer.clear();
        Ok(stats)
    }
}
