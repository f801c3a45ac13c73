//! Small feedforward PPO learner with the four-head action decomposition.
//!
//! Rollouts fan out over environment workers with rayon; every worker owns
//! its own RNG stream and episode-seed stream, and transitions are
//! concatenated in worker order, so a run depends only on its seed.

pub mod features;
pub mod net;
pub mod ppo;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, Turn};
use crate::explore::{intrinsic_reward, BonusConfig, EpisodicLangCounter};
use crate::seeding;
use crate::world::{EnvConfig, HistoryMode, Observation, StepResult, Variant, WorldError, WorldState};

pub use features::{FeatureEncoder, INPUT_DIM};
pub use net::{HeadAction, PolicyNet, PolicyOutput};
pub use ppo::{clipped_update, compute_gae, loss_and_grad, Adam, LossCoefs, LossStats, Sample, UpdateConfig};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("length mismatch: {rewards} rewards, {values} values (want rewards + 1), {dones} dones")]
    Shape { rewards: usize, values: usize, dones: usize },
    #[error("non-finite {0} during update")]
    NonFinite(&'static str),
    #[error("training halted at step {step}: {reason}")]
    Halted { step: u64, reason: String },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub history_mode: HistoryMode,
    pub learning_rate: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub optimizer_epsilon: f64,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub gamma: f64,
    pub epochs_per_update: usize,
    pub total_steps: u64,
    pub num_envs: usize,
    pub hidden: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub bonus: Option<BonusConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Original,
            history_mode: HistoryMode::Current,
            learning_rate: 1e-4,
            gae_lambda: 0.99,
            clip_epsilon: 0.2,
            optimizer_epsilon: 1e-5,
            batch_size: 1280,
            minibatch_size: 256,
            gamma: 0.99,
            epochs_per_update: 4,
            total_steps: 500_000,
            num_envs: 16,
            hidden: 128,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            bonus: None,
        }
    }
}

impl TrainConfig {
    /// Parses flat `key = value` text over the defaults. `#` starts a comment.
    /// Setting `expl_bonus.C` or `expl_bonus.M` enables the bonus.
    pub fn parse(text: &str) -> Result<Self, LearnerError> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| LearnerError::Config { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(err)?;
        }
        cfg.validate().map_err(|message| LearnerError::Config { line: 0, message })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LearnerError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        match key {
            "variant" => self.variant = value.parse().map_err(|e| format!("{e}"))?,
            "history_mode" => self.history_mode = value.parse().map_err(|e| format!("{e}"))?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "gae_lambda" => self.gae_lambda = num(key, value)?,
            "clip_epsilon" => self.clip_epsilon = num(key, value)?,
            "optimizer_epsilon" => self.optimizer_epsilon = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "minibatch_size" => self.minibatch_size = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "epochs_per_update" => self.epochs_per_update = num(key, value)?,
            "total_steps" => self.total_steps = num(key, value)?,
            "num_envs" => self.num_envs = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "value_coef" => self.value_coef = num(key, value)?,
            "entropy_coef" => self.entropy_coef = num(key, value)?,
            "max_grad_norm" => self.max_grad_norm = num(key, value)?,
            "expl_bonus.C" => self.bonus.get_or_insert_with(BonusConfig::default).scale = num(key, value)?,
            "expl_bonus.M" => {
                self.bonus.get_or_insert_with(BonusConfig::default).exponent = num(key, value)?
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("gae_lambda", self.gae_lambda),
            ("clip_epsilon", self.clip_epsilon),
            ("optimizer_epsilon", self.optimizer_epsilon),
            ("gamma", self.gamma),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{k} must be positive, got {v}"));
            }
        }
        if self.gamma > 1.0 || self.gae_lambda > 1.0 {
            return Err("gamma and gae_lambda must be at most 1".into());
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 || self.max_grad_norm < 0.0 {
            return Err("coefficients must be non-negative".into());
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("minibatch_size", self.minibatch_size),
            ("epochs_per_update", self.epochs_per_update),
            ("num_envs", self.num_envs),
            ("hidden", self.hidden),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(format!("{k} must be positive"));
            }
        }
        if self.total_steps < self.batch_size as u64 {
            return Err(format!(
                "total_steps {} is smaller than one batch of {}",
                self.total_steps, self.batch_size
            ));
        }
        if !self.batch_size.is_multiple_of(self.num_envs) {
            return Err(format!(
                "batch_size {} is not a multiple of num_envs {}",
                self.batch_size, self.num_envs
            ));
        }
        if let Some(b) = self.bonus {
            if b.scale < 0.0 || b.exponent < 0.0 {
                return Err("expl_bonus parameters must be non-negative".into());
            }
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig::new(self.variant).with_history(self.history_mode)
    }

    fn update_config(&self) -> UpdateConfig {
        UpdateConfig {
            coefs: LossCoefs {
                clip_epsilon: self.clip_epsilon,
                value_coef: self.value_coef,
                entropy_coef: self.entropy_coef,
            },
            epochs: self.epochs_per_update,
            minibatch_size: self.minibatch_size,
            max_grad_norm: self.max_grad_norm,
        }
    }
}

/// Extrinsic and intrinsic reward of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapedStep {
    pub extrinsic: f64,
    pub intrinsic: f64,
}

/// Finished-episode totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeReturn {
    pub success: bool,
    pub extrinsic: f64,
    pub intrinsic: f64,
}

/// One environment instance with its episode-seed stream and bonus counter.
#[derive(Debug, Clone)]
pub struct EnvWorker {
    config: EnvConfig,
    bonus: Option<BonusConfig>,
    seed_base: u64,
    episodes: u64,
    pub state: WorldState,
    pub obs: Observation,
    pub counter: EpisodicLangCounter,
    extrinsic: f64,
    intrinsic: f64,
}

impl EnvWorker {
    pub fn new(config: EnvConfig, bonus: Option<BonusConfig>, seed_base: u64) -> Result<Self, WorldError> {
        let (state, obs) = WorldState::reset(config, seeding::derive(seed_base, 0))?;
        Ok(EnvWorker {
            config,
            bonus,
            seed_base,
            episodes: 1,
            state,
            obs,
            counter: EpisodicLangCounter::new(),
            extrinsic: 0.0,
            intrinsic: 0.0,
        })
    }

    /// Steps the world, scores heard lines with the bonus, and starts a new
    /// episode when this one ends.
    pub fn step(
        &mut self,
        action: &crate::world::Action,
    ) -> Result<(StepResult, ShapedStep, Option<EpisodeReturn>), WorldError> {
        let result = self.state.step(action)?;
        let intrinsic = match &self.bonus {
            Some(cfg) => {
                let lines: Vec<String> = result.observation.heard.iter().map(|l| l.serialize()).collect();
                intrinsic_reward(&lines, &mut self.counter, cfg)
            }
            None => 0.0,
        };
        self.extrinsic += result.reward;
        self.intrinsic += intrinsic;
        let shaped = ShapedStep { extrinsic: result.reward, intrinsic };
        let finished = if result.done {
            let ret = EpisodeReturn {
                success: result.info.success,
                extrinsic: self.extrinsic,
                intrinsic: self.intrinsic,
            };
            let (state, obs) =
                WorldState::reset(self.config, seeding::derive(self.seed_base, self.episodes))?;
            self.episodes += 1;
            self.state = state;
            self.obs = obs;
            self.counter.reset();
            self.extrinsic = 0.0;
            self.intrinsic = 0.0;
            Some(ret)
        } else {
            self.obs = result.observation.clone();
            None
        };
        Ok((result, shaped, finished))
    }
}

struct Lane {
    env: EnvWorker,
    encoder: FeatureEncoder,
    rng: ChaCha8Rng,
}

struct Segment {
    samples: Vec<Sample>,
    finished: Vec<EpisodeReturn>,
}

fn collect(lane: &mut Lane, net: &PolicyNet, steps: usize, cfg: &TrainConfig) -> Result<Segment, WorldError> {
    let mut samples = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    let mut values = Vec::with_capacity(steps + 1);
    let mut dones = Vec::with_capacity(steps);
    let mut finished = Vec::new();
    for _ in 0..steps {
        let input = lane.encoder.encode(&lane.env.obs);
        let out = net.output(&input);
        let head = out.sample(&mut lane.rng);
        let (_, shaped, done) = lane.env.step(&head.to_action())?;
        samples.push(Sample {
            input,
            action: head,
            old_log_prob: out.joint_log_prob(&head),
            advantage: 0.0,
            ret: 0.0,
        });
        values.push(out.value);
        rewards.push(shaped.extrinsic + shaped.intrinsic);
        dones.push(done.is_some());
        if let Some(ret) = done {
            finished.push(ret);
            lane.encoder.reset();
        }
    }
    let tail = lane.encoder.encode(&lane.env.obs);
    values.push(net.output(&tail).value);
    let (adv, ret) = compute_gae(&rewards, &values, &dones, cfg.gamma, cfg.gae_lambda)
        .expect("segment arrays are aligned");
    for (s, (a, r)) in samples.iter_mut().zip(adv.into_iter().zip(ret)) {
        s.advantage = a;
        s.ret = r;
    }
    Ok(Segment { samples, finished })
}

/// One row of the learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub success_rate: f64,
    pub extrinsic_return: f64,
    pub intrinsic_return: f64,
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("step,success_rate,extrinsic_return,intrinsic_return\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            p.step, p.success_rate, p.extrinsic_return, p.intrinsic_return
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub seed: u64,
    pub steps: u64,
    pub net: PolicyNet,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), LearnerError> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearnerError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<CurvePoint>,
    pub checkpoint: Checkpoint,
}

/// Alternates rollout collection and clipped updates for as many whole
/// batches as fit in `total_steps`. `on_point` sees each curve row as it is
/// produced.
pub fn train(
    cfg: &TrainConfig,
    seed: u64,
    mut on_point: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome, LearnerError> {
    cfg.validate().map_err(|message| LearnerError::Config { line: 0, message })?;
    let mut net = PolicyNet::new(INPUT_DIM, cfg.hidden, &mut seeding::rng(seed, 0x4E45_5400));
    let mut opt = Adam::new(net.num_params(), cfg.learning_rate, cfg.optimizer_epsilon);
    let mut update_rng = seeding::rng(seed, 0x5550_4400);
    let env_cfg = cfg.env_config();
    let mut lanes = (0..cfg.num_envs as u64)
        .map(|i| {
            Ok(Lane {
                env: EnvWorker::new(env_cfg, cfg.bonus, seeding::derive(seed, 0x454E_0000 + i))?,
                encoder: FeatureEncoder::new(),
                rng: seeding::rng(seed, 0x5241_0000 + i),
            })
        })
        .collect::<Result<Vec<_>, WorldError>>()?;
    let per_lane = cfg.batch_size / cfg.num_envs;
    let update = cfg.update_config();
    let mut curve = Vec::new();
    let mut steps = 0u64;
    while steps + cfg.batch_size as u64 <= cfg.total_steps {
        let snapshot = &net;
        let segments = lanes
            .par_iter_mut()
            .map(|lane| collect(lane, snapshot, per_lane, cfg))
            .collect::<Result<Vec<_>, WorldError>>()?;
        steps += cfg.batch_size as u64;
        let finished: Vec<EpisodeReturn> = segments.iter().flat_map(|s| s.finished.iter().copied()).collect();
        let batch: Vec<Sample> = segments.into_iter().flat_map(|s| s.samples).collect();
        clipped_update(&mut net, &mut opt, &batch, &update, &mut update_rng).map_err(|e| {
            LearnerError::Halted { step: steps, reason: e.to_string() }
        })?;
        let n = finished.len().max(1) as f64;
        let point = CurvePoint {
            step: steps,
            success_rate: finished.iter().filter(|r| r.success).count() as f64 / n,
            extrinsic_return: finished.iter().map(|r| r.extrinsic).sum::<f64>() / n,
            intrinsic_return: finished.iter().map(|r| r.intrinsic).sum::<f64>() / n,
        };
        on_point(&point);
        curve.push(point);
    }
    Ok(TrainOutcome {
        curve,
        checkpoint: Checkpoint { config: cfg.clone(), seed, steps, net },
    })
}

/// Acts with a trained network: greedy heads by default, sampled otherwise.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    net: PolicyNet,
    encoder: FeatureEncoder,
    greedy: bool,
    rng: ChaCha8Rng,
}

impl PolicyAgent {
    pub fn new(net: PolicyNet, greedy: bool) -> Self {
        PolicyAgent { net, encoder: FeatureEncoder::new(), greedy, rng: ChaCha8Rng::seed_from_u64(0) }
    }
}

impl Agent for PolicyAgent {
    fn begin_episode(&mut self, episode_seed: u64) {
        self.encoder.reset();
        self.rng = seeding::rng(episode_seed, 0x504F_4C49);
    }

    fn act(&mut self, turn: &Turn<'_>) -> Result<crate::world::Action, AgentError> {
        let out = self.net.output(&self.encoder.encode(turn.obs));
        let head = if self.greedy { out.greedy() } else { out.sample(&mut self.rng) };
        Ok(head.to_action())
    }
}
