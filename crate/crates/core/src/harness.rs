//! Rearing (training) and frozen-weight testing of one agent, run
//! bookkeeping, trajectory files and population orchestration.
//!
//! On-disk layout of a training run directory:
//!
//! ```text
//! run_config.json   the RunConfig, verbatim
//! checkpoint.nest   policy + intrinsic-module weights
//! metrics.csv       one row per PPO update
//! episodes.csv      one row per episode (intrinsic reward summary)
//! manifest.json     config, code version, timings, file checksums
//! ```
//!
//! A test directory holds `trials/trial_XXXX.csv`, `trials_index.csv` and
//! `test_summary.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::intrinsic::{intrinsic_reward_stats, Algorithm, IntrinsicConfig, IntrinsicError, IntrinsicModule};
use crate::nn::checkpoint::{self, CheckpointEntry};
use crate::nn::{NnError, Tensor};
use crate::ppo::{lr_schedule, select_action, PolicyNet, PpoConfig, PpoError, PpoLearner, RolloutBuffer};
use crate::render::{render_observation, Camera, DisplayContent, Observation, TextureCache, FRAME_SIZE};
use crate::rng::{derive_seed, rng_from_seed, splitmix64, streams, Rng};
use crate::world::{
    make_trial_schedule, spawn, step_pose, viewpoint_ranges, AgentBody, ChamberSpec, ObjectId, Pose, RearingCondition,
    TrialKind, TrialRecord, TrialSpec, ViewpointRange, Wall, Waveform, WorldError,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.nest";
pub const CONFIG_FILE: &str = "run_config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const TRIALS_DIR: &str = "trials";
pub const TRIALS_INDEX_FILE: &str = "trials_index.csv";
pub const TEST_SUMMARY_FILE: &str = "test_summary.json";

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

const INPUT_SHAPE: [usize; 3] = [3, FRAME_SIZE, FRAME_SIZE];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
    #[error("corrupt checkpoint {}: {reason}", path.display())]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("no moving steps")]
    NoMovement,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Ppo(PpoError),
    #[error(transparent)]
    Intrinsic(IntrinsicError),
}

impl From<PpoError> for HarnessError {
    fn from(e: PpoError) -> Self {
        match e {
            PpoError::InvalidConfig(m) => HarnessError::Config(m),
            other => HarnessError::Ppo(other),
        }
    }
}

impl From<IntrinsicError> for HarnessError {
    fn from(e: IntrinsicError) -> Self {
        match e {
            IntrinsicError::InvalidConfig(m) => HarnessError::Config(m),
            other => HarnessError::Intrinsic(other),
        }
    }
}

impl From<WorldError> for HarnessError {
    fn from(e: WorldError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl HarnessError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io { .. } | HarnessError::Malformed { .. } => 3,
            HarnessError::CorruptCheckpoint { .. } => 4,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub fov_deg: f64,
    pub near: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fov_deg: 60.0,
            near: 0.1,
        }
    }
}

/// Everything that determines a run. Unknown keys are rejected; omitted
/// keys take the defaults below, which describe the full-scale experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Rearing condition 1..=4: (A, front), (A, side), (B, front), (B, side).
    pub condition: u8,
    pub episodes: usize,
    pub episode_length: usize,
    pub test_trial_length: usize,
    pub imprinting_trials: usize,
    /// Steps per full back-and-forth rocking cycle of the displayed object.
    pub stimulus_period_steps: u64,
    pub waveform: Waveform,
    pub camera: CameraConfig,
    pub chamber: ChamberSpec,
    pub body: AgentBody,
    pub ppo: PpoConfig,
    /// `intrinsic.algorithm` selects ICM, RND or contrastive novelty.
    pub intrinsic: IntrinsicConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            condition: 1,
            episodes: 1000,
            episode_length: 1000,
            test_trial_length: 1000,
            imprinting_trials: 40,
            stimulus_period_steps: 60,
            waveform: Waveform::Triangle,
            camera: CameraConfig::default(),
            chamber: ChamberSpec::default(),
            body: AgentBody::default(),
            ppo: PpoConfig::default(),
            intrinsic: IntrinsicConfig::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn algorithm(&self) -> Algorithm {
        self.intrinsic.algorithm
    }

    pub fn rearing(&self) -> Result<RearingCondition, HarnessError> {
        Ok(RearingCondition::from_number(self.condition)?)
    }

    pub fn total_env_steps(&self) -> u64 {
        self.episodes as u64 * self.episode_length as u64
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        self.rearing()?;
        if self.episodes == 0 || self.episode_length == 0 {
            return bad("episodes and episode_length must be positive");
        }
        if self.test_trial_length == 0 {
            return bad("test_trial_length must be positive");
        }
        if self.imprinting_trials % 2 != 0 {
            return bad("imprinting_trials must be even (half per wall)");
        }
        if self.stimulus_period_steps == 0 {
            return bad("stimulus_period_steps must be positive");
        }
        if !(self.camera.fov_deg > 0.0 && self.camera.fov_deg < 180.0) || !(self.camera.near > 0.0) {
            return bad("camera needs fov_deg in (0, 180) and near > 0");
        }
        self.body.validate()?;
        self.chamber.validate(&self.body)?;
        if self.body.camera_height >= self.chamber.wall_height {
            return bad("camera_height must be below wall_height");
        }
        self.ppo.validate()?;
        self.intrinsic.validate()?;
        if self.intrinsic.gamma != self.ppo.gamma {
            return bad("intrinsic.gamma must equal ppo.gamma (the intrinsic reward is the only reward)");
        }
        Ok(())
    }
}

/// What one display wall shows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallShow {
    Blank,
    Object(ObjectId, ViewpointRange),
}

/// Display textures for both walls, cached per (content, pose).
#[derive(Default)]
struct Stage {
    x0: TextureCache,
    xl: TextureCache,
}

fn wall_texture<'a>(
    cache: &'a mut TextureCache,
    show: WallShow,
    t: u64,
    cfg: &RunConfig,
) -> &'a crate::render::DisplayTexture {
    match show {
        WallShow::Blank => cache.get(DisplayContent::Blank, 0.0, 0.0),
        WallShow::Object(id, range) => {
            let az = crate::world::stimulus_azimuth_with(t, &range, cfg.stimulus_period_steps, cfg.waveform);
            cache.get(DisplayContent::Object(id), az, range.elevation)
        }
    }
}

impl Stage {
    /// Renders the agent's view at stimulus time `t`; `shows` is (x0, xL).
    fn observe(&mut self, cfg: &RunConfig, pose: &Pose, shows: [WallShow; 2], t: u64) -> Observation {
        let a = wall_texture(&mut self.x0, shows[0], t, cfg);
        let b = wall_texture(&mut self.xl, shows[1], t, cfg);
        let camera = Camera::from_pose(pose, cfg.body.camera_height, cfg.camera.fov_deg, cfg.camera.near);
        render_observation(&cfg.chamber, a, b, &camera).quantize()
    }
}

/// The rearing display: imprinted object at its familiar range on x0.
pub fn training_shows(cond: &RearingCondition) -> [WallShow; 2] {
    [WallShow::Object(cond.object_id, cond.familiar_range()), WallShow::Blank]
}

/// Wall contents for a test trial, ordered (x0, xL).
pub fn trial_shows(cond: &RearingCondition, spec: &TrialSpec) -> [WallShow; 2] {
    let familiar = cond.familiar_range();
    let (imprint, other) = match (spec.kind, spec.viewpoint_index) {
        (TrialKind::Recognition, Some(v)) => (
            WallShow::Object(cond.object_id, viewpoint_ranges(cond.rearing_view)[v]),
            WallShow::Object(cond.object_id.other(), familiar),
        ),
        _ => (WallShow::Object(cond.object_id, familiar), WallShow::Blank),
    };
    match spec.imprint_wall {
        Wall::X0 => [imprint, other],
        Wall::XL => [other, imprint],
    }
}

/// A trained (or freshly initialized) agent.
pub struct Agent {
    pub learner: PpoLearner<f32>,
    pub intrinsic: IntrinsicModule<f32>,
}

impl Agent {
    pub fn new(cfg: &RunConfig) -> Result<Self, HarnessError> {
        let mut prng = rng_from_seed(derive_seed(cfg.seed, streams::POLICY_INIT));
        let mut irng = rng_from_seed(derive_seed(cfg.seed, streams::INTRINSIC_INIT));
        Ok(Self {
            learner: PpoLearner::new(INPUT_SHAPE, cfg.ppo.clone(), &mut prng)?,
            intrinsic: IntrinsicModule::new(INPUT_SHAPE, &cfg.intrinsic, &mut irng)?,
        })
    }

    pub fn to_entries(&self) -> Vec<CheckpointEntry> {
        let mut e = self.learner.policy.net.to_entries();
        e.extend(self.intrinsic.to_entries());
        e
    }

    pub fn load_entries(&mut self, entries: &[CheckpointEntry]) -> Result<(), NnError> {
        self.learner.policy.net.load_entries(entries)?;
        self.intrinsic.load_entries(entries)
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        checkpoint::encode(&self.to_entries()).expect("parameter shapes are consistent")
    }

    /// SHA-256 of the checkpoint encoding of every weight.
    pub fn weights_hash(&self) -> String {
        sha256_hex(&self.checkpoint_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One PPO update as logged to `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub update: usize,
    pub env_step: u64,
    pub lr: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_intrinsic_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub env_step_end: u64,
    pub reward_mean: f64,
    pub reward_min: f64,
    pub reward_max: f64,
    pub reward_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub metrics: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeRow>,
    pub env_steps: u64,
}

/// Rears an agent in memory. `on_episode` sees each finished episode row.
pub fn train_agent(
    cfg: &RunConfig,
    mut on_episode: impl FnMut(&EpisodeRow),
) -> Result<(Agent, TrainingLog), HarnessError> {
    cfg.validate()?;
    let cond = cfg.rearing()?;
    let shows = training_shows(&cond);
    let mut agent = Agent::new(cfg)?;
    let mut spawn_rng = rng_from_seed(derive_seed(cfg.seed, streams::SPAWN));
    let mut action_rng = rng_from_seed(derive_seed(cfg.seed, streams::ACTIONS));
    let mut batch_rng = rng_from_seed(derive_seed(cfg.seed, streams::MINIBATCH));
    let mut aug_rng = rng_from_seed(derive_seed(cfg.seed, streams::AUGMENT));
    let mut stage = Stage::default();
    let mut buffer = RolloutBuffer::new(cfg.ppo.buffer_size);
    let mut log = TrainingLog {
        metrics: Vec::new(),
        episodes: Vec::with_capacity(cfg.episodes),
        env_steps: 0,
    };
    let mut env_step: u64 = 0;

    for episode in 0..cfg.episodes {
        let mut pose = spawn(&mut spawn_rng, &cfg.chamber, &cfg.body);
        let mut obs = stage.observe(cfg, &pose, shows, env_step);
        let mut x = obs.to_tensor::<f32>();
        let mut rewards = Vec::with_capacity(cfg.episode_length);
        for t in 0..cfg.episode_length {
            let (action, logp, value) = select_action(&agent.learner.policy, &x, &mut action_rng)?;
            pose = step_pose(pose, action, &cfg.body, &cfg.chamber);
            env_step += 1;
            let next = stage.observe(cfg, &pose, shows, env_step);
            let x_next = next.to_tensor::<f32>();
            let r = agent.intrinsic.step(&x, action, &x_next, &mut aug_rng)?;
            let done = t + 1 == cfg.episode_length;
            rewards.push(r);
            buffer.push(obs, action, f64::from(logp), f64::from(value), r, done)?;
            if buffer.is_full() {
                let bootstrap = if done {
                    0.0
                } else {
                    f64::from(agent.learner.policy.infer(&x_next)?.value)
                };
                let mean_r = buffer.rewards.iter().sum::<f64>() / buffer.len() as f64;
                let lr = lr_schedule(env_step, &cfg.ppo);
                let s = agent.learner.update(&mut buffer, bootstrap, lr, &mut batch_rng)?;
                log.metrics.push(MetricsRow {
                    update: log.metrics.len(),
                    env_step,
                    lr,
                    policy_loss: s.policy_loss,
                    value_loss: s.value_loss,
                    entropy: s.entropy,
                    clip_fraction: s.clip_fraction,
                    mean_intrinsic_reward: mean_r,
                });
            }
            obs = next;
            x = x_next;
        }
        let rs = intrinsic_reward_stats(&rewards)?;
        let row = EpisodeRow {
            episode,
            env_step_end: env_step,
            reward_mean: rs.mean,
            reward_min: rs.min,
            reward_max: rs.max,
            reward_std: rs.std,
        };
        on_episode(&row);
        log.episodes.push(row);
    }
    log.env_steps = env_step;
    Ok((agent, log))
}

fn csv_bytes<R: Serialize>(rows: &[R], header: &[&str]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub code_version: String,
    pub complete: bool,
    pub error: Option<String>,
    /// Wall-clock seconds per phase.
    pub timings_s: BTreeMap<String, f64>,
    pub env_steps: u64,
    pub updates: usize,
    pub checkpoint: Option<String>,
    pub weights_hash: Option<String>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Malformed {
            path,
            reason: e.to_string(),
        })
    }

    /// Recomputes every listed checksum; returns the first mismatching file.
    pub fn verify(&self, dir: &Path) -> Result<(), HarnessError> {
        for f in &self.files {
            let path = dir.join(&f.path);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(HarnessError::Malformed {
                    path,
                    reason: "checksum mismatch".into(),
                });
            }
        }
        Ok(())
    }

    pub fn file(&self, name: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.path == name)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub manifest: RunManifest,
}

/// Trains and writes the run directory. On failure a manifest marked
/// incomplete is still attempted.
pub fn run_training(cfg: &RunConfig, out: &Path) -> Result<TrainingOutcome, HarnessError> {
    run_training_with(cfg, out, |_| {})
}

pub fn run_training_with(
    cfg: &RunConfig,
    out: &Path,
    on_episode: impl FnMut(&EpisodeRow),
) -> Result<TrainingOutcome, HarnessError> {
    cfg.validate()?;
    create_dir(out)?;
    let mut manifest = RunManifest {
        config: cfg.clone(),
        code_version: CODE_VERSION.to_string(),
        complete: false,
        error: None,
        timings_s: BTreeMap::new(),
        env_steps: 0,
        updates: 0,
        checkpoint: None,
        weights_hash: None,
        files: Vec::new(),
    };
    let result = train_and_write(cfg, out, &mut manifest, on_episode);
    if let Err(e) = &result {
        manifest.error = Some(e.to_string());
    }
    manifest.complete = result.is_ok();
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let written = write_file(&out.join(MANIFEST_FILE), text.as_bytes());
    result?;
    written?;
    Ok(TrainingOutcome {
        dir: out.to_path_buf(),
        checkpoint: out.join(CHECKPOINT_FILE),
        manifest,
    })
}

fn train_and_write(
    cfg: &RunConfig,
    out: &Path,
    manifest: &mut RunManifest,
    on_episode: impl FnMut(&EpisodeRow),
) -> Result<(), HarnessError> {
    let record = |name: &str, bytes: &[u8], m: &mut RunManifest| -> Result<(), HarnessError> {
        write_file(&out.join(name), bytes)?;
        m.files.push(FileEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    };
    record(CONFIG_FILE, cfg.to_json().as_bytes(), manifest)?;

    let t0 = Instant::now();
    let (agent, log) = train_agent(cfg, on_episode)?;
    manifest.timings_s.insert("training".into(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let ckpt = agent.checkpoint_bytes();
    record(CHECKPOINT_FILE, &ckpt, manifest)?;
    record(
        METRICS_FILE,
        &csv_bytes(
            &log.metrics,
            &[
                "update",
                "env_step",
                "lr",
                "policy_loss",
                "value_loss",
                "entropy",
                "clip_fraction",
                "mean_intrinsic_reward",
            ],
        ),
        manifest,
    )?;
    record(
        EPISODES_FILE,
        &csv_bytes(
            &log.episodes,
            &[
                "episode",
                "env_step_end",
                "reward_mean",
                "reward_min",
                "reward_max",
                "reward_std",
            ],
        ),
        manifest,
    )?;
    manifest.timings_s.insert("writing".into(), t1.elapsed().as_secs_f64());
    manifest.env_steps = log.env_steps;
    manifest.updates = log.metrics.len();
    manifest.checkpoint = Some(CHECKPOINT_FILE.to_string());
    manifest.weights_hash = Some(sha256_hex(&ckpt));
    Ok(())
}

/// Loads a checkpoint and the config stored beside it. When a manifest is
/// present its checksums for both files must match.
pub fn load_run(checkpoint_path: &Path) -> Result<(RunConfig, Agent, String), HarnessError> {
    let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let bytes = fs::read(checkpoint_path).map_err(io_err(checkpoint_path))?;
    let digest = sha256_hex(&bytes);
    let corrupt = |reason: String| HarnessError::CorruptCheckpoint {
        path: checkpoint_path.to_path_buf(),
        reason,
    };
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg_text = fs::read_to_string(&cfg_path).map_err(io_err(&cfg_path))?;
    if dir.join(MANIFEST_FILE).exists() {
        let manifest = RunManifest::load(dir)?;
        let name = checkpoint_path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match manifest.file(name) {
            Some(f) if f.sha256 == digest => {}
            Some(_) => return Err(corrupt("checksum mismatch".into())),
            None => return Err(corrupt("not listed in manifest".into())),
        }
        if let Some(f) = manifest.file(CONFIG_FILE) {
            if sha256_hex(cfg_text.as_bytes()) != f.sha256 {
                return Err(HarnessError::Malformed {
                    path: cfg_path,
                    reason: "checksum mismatch".into(),
                });
            }
        }
    }
    let cfg = RunConfig::from_json(&cfg_text)?;
    let entries = checkpoint::decode(&bytes).map_err(|e| corrupt(e.to_string()))?;
    let mut agent = Agent::new(&cfg)?;
    agent.load_entries(&entries).map_err(|e| corrupt(e.to_string()))?;
    Ok((cfg, agent, digest))
}

fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn trial_rng(cfg: &RunConfig, trial_id: usize) -> Rng {
    rng_from_seed(derive_seed(cfg.seed, streams::TRIAL_BASE.wrapping_add(trial_id as u64)))
}

/// Runs one test trial with frozen weights. The trace holds the pose at
/// the start of every step.
pub fn run_trial(
    cfg: &RunConfig,
    policy: &PolicyNet<f32>,
    spec: &TrialSpec,
    greedy: bool,
) -> Result<TrialRecord, HarnessError> {
    let cond = cfg.rearing()?;
    let shows = trial_shows(&cond, spec);
    let mut rng = trial_rng(cfg, spec.trial_id);
    let mut stage = Stage::default();
    let mut pose = spawn(&mut rng, &cfg.chamber, &cfg.body);
    let mut trace = Vec::with_capacity(spec.duration);
    for t in 0..spec.duration {
        trace.push(pose);
        let x: Tensor<f32> = stage.observe(cfg, &pose, shows, t as u64).to_tensor();
        let action = if greedy {
            let out = policy.infer(&x)?;
            crate::world::Action::from_branches(argmax(&out.translation), argmax(&out.rotation))
        } else {
            select_action(policy, &x, &mut rng)?.0
        };
        pose = step_pose(pose, action, &cfg.body, &cfg.chamber);
    }
    Ok(TrialRecord {
        trial_id: spec.trial_id,
        kind: spec.kind,
        viewpoint_index: spec.viewpoint_index,
        imprint_wall: spec.imprint_wall,
        trace,
    })
}

pub fn test_schedule(cfg: &RunConfig) -> Result<Vec<TrialSpec>, HarnessError> {
    Ok(make_trial_schedule(
        &cfg.rearing()?,
        cfg.imprinting_trials,
        cfg.test_trial_length,
        derive_seed(cfg.seed, streams::SCHEDULE),
    )?)
}

/// Every trial of the schedule, in trial-id order. Trials are independent
/// and run in parallel.
pub fn run_test_phase(cfg: &RunConfig, agent: &Agent, greedy: bool) -> Result<Vec<TrialRecord>, HarnessError> {
    let schedule = test_schedule(cfg)?;
    let policy = &agent.learner.policy;
    schedule.par_iter().map(|s| run_trial(cfg, policy, s, greedy)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub code_version: String,
    pub algorithm: Algorithm,
    pub condition: u8,
    pub seed: u64,
    pub greedy: bool,
    pub trials: usize,
    pub trial_length: usize,
    /// Canonical path of the checkpoint that was tested.
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub weights_hash_before: String,
    pub weights_hash_after: String,
    pub heading_alignment_deg: Option<f64>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub summary: TestSummary,
    pub records: Vec<TrialRecord>,
}

/// Frozen-weight test phase for a checkpoint written by `run_training`.
pub fn run_test(checkpoint_path: &Path, out: &Path, greedy: bool) -> Result<TestOutcome, HarnessError> {
    let (cfg, agent, digest) = load_run(checkpoint_path)?;
    let before = agent.weights_hash();
    let records = run_test_phase(&cfg, &agent, greedy)?;
    let after = agent.weights_hash();
    let summary = TestSummary {
        code_version: CODE_VERSION.to_string(),
        algorithm: cfg.algorithm(),
        condition: cfg.condition,
        seed: cfg.seed,
        greedy,
        trials: records.len(),
        trial_length: cfg.test_trial_length,
        checkpoint: fs::canonicalize(checkpoint_path).map_err(io_err(checkpoint_path))?,
        checkpoint_sha256: digest,
        weights_hash_before: before,
        weights_hash_after: after,
        heading_alignment_deg: heading_alignment(&records).ok(),
        config: cfg,
    };
    write_test_output(out, &summary, &records)?;
    Ok(TestOutcome { summary, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TraceRow {
    step: usize,
    x: f64,
    y: f64,
    heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexRow {
    trial_id: usize,
    kind: String,
    viewpoint_index: Option<usize>,
    imprint_wall: String,
    file: String,
}

pub fn trial_file_name(trial_id: usize) -> String {
    format!("trial_{trial_id:04}.csv")
}

/// CSV bytes of one trial trace (`step, x, y, heading_deg`).
pub fn trace_csv(record: &TrialRecord) -> Vec<u8> {
    let rows: Vec<TraceRow> = record
        .trace
        .iter()
        .enumerate()
        .map(|(step, p)| TraceRow {
            step,
            x: p.x,
            y: p.y,
            heading_deg: p.heading,
        })
        .collect();
    csv_bytes(&rows, &["step", "x", "y", "heading_deg"])
}

pub fn write_test_output(out: &Path, summary: &TestSummary, records: &[TrialRecord]) -> Result<(), HarnessError> {
    let trials = out.join(TRIALS_DIR);
    create_dir(&trials)?;
    let mut index = Vec::with_capacity(records.len());
    for r in records {
        let name = trial_file_name(r.trial_id);
        write_file(&trials.join(&name), &trace_csv(r))?;
        index.push(IndexRow {
            trial_id: r.trial_id,
            kind: r.kind.as_str().to_string(),
            viewpoint_index: r.viewpoint_index,
            imprint_wall: r.imprint_wall.as_str().to_string(),
            file: format!("{TRIALS_DIR}/{name}"),
        });
    }
    write_file(
        &out.join(TRIALS_INDEX_FILE),
        &csv_bytes(&index, &["trial_id", "kind", "viewpoint_index", "imprint_wall", "file"]),
    )?;
    let text = serde_json::to_string_pretty(summary).expect("summary serializes") + "\n";
    write_file(&out.join(TEST_SUMMARY_FILE), text.as_bytes())
}

fn malformed(path: &Path, reason: impl ToString) -> HarnessError {
    HarnessError::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Reads a test directory back: its summary and every TrialRecord.
pub fn read_test_output(dir: &Path) -> Result<(TestSummary, Vec<TrialRecord>), HarnessError> {
    let spath = dir.join(TEST_SUMMARY_FILE);
    let text = fs::read_to_string(&spath).map_err(io_err(&spath))?;
    let summary: TestSummary = serde_json::from_str(&text).map_err(|e| malformed(&spath, e))?;
    let ipath = dir.join(TRIALS_INDEX_FILE);
    let mut rdr = csv::Reader::from_path(&ipath).map_err(|e| malformed(&ipath, e))?;
    let mut records = Vec::new();
    for row in rdr.deserialize::<IndexRow>() {
        let row = row.map_err(|e| malformed(&ipath, e))?;
        let kind = match row.kind.as_str() {
            "imprinting" => TrialKind::Imprinting,
            "recognition" => TrialKind::Recognition,
            other => return Err(malformed(&ipath, format!("unknown trial kind {other}"))),
        };
        let imprint_wall = match row.imprint_wall.as_str() {
            "x0" => Wall::X0,
            "xL" => Wall::XL,
            other => return Err(malformed(&ipath, format!("unknown wall {other}"))),
        };
        let tpath = dir.join(&row.file);
        let mut t = csv::Reader::from_path(&tpath).map_err(|e| malformed(&tpath, e))?;
        let trace = t
            .deserialize::<TraceRow>()
            .map(|r| {
                r.map(|r| Pose {
                    x: r.x,
                    y: r.y,
                    heading: r.heading_deg,
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| malformed(&tpath, e))?;
        records.push(TrialRecord {
            trial_id: row.trial_id,
            kind,
            viewpoint_index: row.viewpoint_index,
            imprint_wall,
            trace,
        });
    }
    Ok((summary, records))
}

/// Mean absolute angle between the heading after each step and the
/// direction the agent actually moved, over steps with nonzero
/// displacement. Degrees in `[0, 180]`.
pub fn heading_alignment(records: &[TrialRecord]) -> Result<f64, HarnessError> {
    let (mut total, mut n) = (0.0, 0usize);
    for r in records {
        for w in r.trace.windows(2) {
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            if dx == 0.0 && dy == 0.0 {
                continue;
            }
            let moved = libm::atan2(dy, dx).to_degrees();
            let diff = (w[1].heading - moved).rem_euclid(360.0);
            total += if diff > 180.0 { 360.0 - diff } else { diff };
            n += 1;
        }
    }
    if n == 0 {
        return Err(HarnessError::NoMovement);
    }
    Ok(total / n as f64)
}

/// Population layout: `<out>/<algo>/condition_<k>/agent_<ii>/` with the
/// test output in its `test/` subdirectory.
#[derive(Debug, Clone)]
pub struct PopulationOptions {
    pub agents: usize,
    pub algorithms: Vec<Algorithm>,
    pub conditions: Vec<u8>,
    pub greedy: bool,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationJob {
    pub algorithm: Algorithm,
    pub condition: u8,
    pub agent: usize,
    pub seed: u64,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub job: PopulationJob,
    pub error: Option<String>,
    pub exit_code: i32,
}

const POPULATION_STREAM: u64 = 0x504f_5055_4c00_0000;

pub fn population_jobs(base: &RunConfig, opts: &PopulationOptions) -> Vec<PopulationJob> {
    let mut jobs = Vec::new();
    for &algorithm in &opts.algorithms {
        let a = Algorithm::ALL.iter().position(|&x| x == algorithm).unwrap_or(0) as u64;
        for &condition in &opts.conditions {
            for agent in 0..opts.agents {
                let stream = POPULATION_STREAM ^ (a << 48 | u64::from(condition) << 40 | agent as u64);
                jobs.push(PopulationJob {
                    algorithm,
                    condition,
                    agent,
                    seed: derive_seed(base.seed, splitmix64(stream)),
                    dir: format!("{}/condition_{condition}/agent_{agent:02}", algorithm.as_str()),
                });
            }
        }
    }
    jobs
}

fn run_job(base: &RunConfig, job: &PopulationJob, out: &Path, greedy: bool) -> Result<(), HarnessError> {
    let mut cfg = base.clone();
    cfg.seed = job.seed;
    cfg.condition = job.condition;
    cfg.intrinsic.algorithm = job.algorithm;
    let dir = out.join(&job.dir);
    cfg.output_dir = Some(dir.clone());
    let trained = run_training(&cfg, &dir)?;
    run_test(&trained.checkpoint, &dir.join("test"), greedy)?;
    Ok(())
}

/// Trains and tests every (algorithm, condition, agent) job. Jobs share
/// nothing; a failed job is recorded and the others continue.
pub fn run_population(base: &RunConfig, opts: &PopulationOptions, out: &Path) -> Result<Vec<JobResult>, HarnessError> {
    base.validate()?;
    for &c in &opts.conditions {
        RearingCondition::from_number(c)?;
    }
    create_dir(out)?;
    let jobs = population_jobs(base, opts);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(e.to_string()))?;
    let results: Vec<JobResult> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let r = run_job(base, job, out, opts.greedy);
                JobResult {
                    job: job.clone(),
                    exit_code: r.as_ref().map_or_else(|e| e.exit_code(), |_| 0),
                    error: r.err().map(|e| e.to_string()),
                }
            })
            .collect()
    });
    let text = serde_json::to_string_pretty(&results).expect("results serialize") + "\n";
    write_file(&out.join("population.json"), text.as_bytes())?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Action;

    fn straight(headings: &[f64], dx: f64) -> TrialRecord {
        let trace = headings
            .iter()
            .enumerate()
            .map(|(i, &h)| Pose {
                x: 5.0 + dx * i as f64,
                y: 5.0,
                heading: h,
            })
            .collect();
        TrialRecord {
            trial_id: 0,
            kind: TrialKind::Imprinting,
            viewpoint_index: None,
            imprint_wall: Wall::X0,
            trace,
        }
    }

    #[test]
    fn heading_alignment_examples() {
        assert_eq!(heading_alignment(&[straight(&[0.0; 5], 0.2)]).unwrap(), 0.0);
        assert_eq!(heading_alignment(&[straight(&[90.0; 5], 0.2)]).unwrap(), 90.0);
        // Post-step headings 0, 90, 0, 90 over four moves.
        let r = straight(&[0.0, 0.0, 90.0, 0.0, 90.0], 0.2);
        assert_eq!(heading_alignment(&[r]).unwrap(), 45.0);
    }

    #[test]
    fn heading_alignment_folds_and_skips() {
        assert_eq!(heading_alignment(&[straight(&[180.0; 3], 0.2)]).unwrap(), 180.0);
        assert_eq!(heading_alignment(&[straight(&[350.0; 3], 0.2)]).unwrap(), 10.0);
        assert!(matches!(
            heading_alignment(&[straight(&[0.0; 4], 0.0)]),
            Err(HarnessError::NoMovement)
        ));
        assert!(matches!(heading_alignment(&[]), Err(HarnessError::NoMovement)));
    }

    #[test]
    fn step_pose_trace_is_aligned_forward() {
        let cfg = RunConfig::default();
        let mut pose = Pose::new(8.0, 7.0, 30.0);
        let mut trace = vec![pose];
        for _ in 0..5 {
            pose = step_pose(
                pose,
                Action {
                    translation: 1,
                    rotation: 1,
                },
                &cfg.body,
                &cfg.chamber,
            );
            trace.push(pose);
        }
        let r = TrialRecord {
            trace,
            ..straight(&[], 0.0)
        };
        assert!(heading_alignment(&[r]).unwrap() < 1e-9);
    }

    #[test]
    fn default_config_is_the_full_experiment() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.total_env_steps(), 1_000_000);
        assert_eq!(cfg.total_env_steps(), cfg.ppo.max_steps);
        assert_eq!(test_schedule(&cfg).unwrap().len(), 520);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            RunConfig::from_json(r#"{"sed": 1}"#),
            Err(HarnessError::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"ppo": {"lr": 1}}"#),
            Err(HarnessError::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"condition": 5}"#),
            Err(HarnessError::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"intrinsic": {"gamma": 0.9}}"#),
            Err(HarnessError::Config(_))
        ));
        let cfg = RunConfig::from_json(r#"{"seed": 7, "intrinsic": {"algorithm": "rnd"}}"#).unwrap();
        assert_eq!((cfg.seed, cfg.algorithm()), (7, Algorithm::Rnd));
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn trial_displays() {
        let cond = RearingCondition::from_number(1).unwrap();
        let fam = cond.familiar_range();
        let spec = TrialSpec {
            trial_id: 0,
            kind: TrialKind::Recognition,
            viewpoint_index: Some(4),
            imprint_wall: Wall::XL,
            duration: 1,
        };
        let shows = trial_shows(&cond, &spec);
        assert_eq!(shows[0], WallShow::Object(ObjectId::B, fam));
        assert_eq!(
            shows[1],
            WallShow::Object(ObjectId::A, viewpoint_ranges(cond.rearing_view)[4])
        );
        let imp = TrialSpec {
            kind: TrialKind::Imprinting,
            viewpoint_index: None,
            imprint_wall: Wall::X0,
            ..spec
        };
        assert_eq!(
            trial_shows(&cond, &imp),
            [WallShow::Object(ObjectId::A, fam), WallShow::Blank]
        );
        assert_eq!(
            training_shows(&cond),
            [WallShow::Object(ObjectId::A, fam), WallShow::Blank]
        );
    }

    #[test]
    fn population_jobs_are_distinct() {
        let opts = PopulationOptions {
            agents: 26,
            algorithms: Algorithm::ALL.to_vec(),
            conditions: vec![1, 2, 3, 4],
            greedy: false,
            jobs: None,
        };
        let jobs = population_jobs(&RunConfig::default(), &opts);
        assert_eq!(jobs.len(), 312);
        let mut seeds: Vec<u64> = jobs.iter().map(|j| j.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 312);
        assert_eq!(jobs[27].dir, "icm/condition_2/agent_01");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 2);
        let io = HarnessError::Io {
            path: "x".into(),
            source: std::io::Error::other("x"),
        };
        assert_eq!(io.exit_code(), 3);
        let c = HarnessError::CorruptCheckpoint {
            path: "x".into(),
            reason: "short read".into(),
        };
        assert_eq!(c.exit_code(), 4);
    }
}
