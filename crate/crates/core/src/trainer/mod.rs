//! Rewards, shaping, advantage estimation and the episode training loop.

mod gae;
mod reward;
mod rollout;
mod update;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, TrainError};
use crate::policy::{ArchitectureSpec, GraphLayerKind, Policy};
use crate::sim::SimConfig;

pub use gae::{compute_gae, gae_double_sum};
pub use reward::{
    base_reward, potential, reward_case, shaped_reward, PotentialParams, RewardCase, CRASH_REWARD, GOAL_REWARD,
    PENALTY_REWARD,
};
pub use rollout::{collect_episode, EpisodeBuffer, EpisodeCounters, StepSnapshot, Transition};
pub use update::{
    advantages_and_returns, apply_gradients, build_batch, critic_values, loss_gradients, record_loss, update,
    LossBatch, LossStats, LossVars,
};

pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub graph_layer: GraphLayerKind,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    pub episodes: usize,
    pub max_aircraft: usize,
    pub aircraft_per_episode: usize,
    pub max_steps_per_episode: usize,
    pub potential_b: f64,
    /// Defaults to `1 / penalty_radius_m`.
    pub potential_c1: Option<f64>,
    /// Defaults to `1 / penalty_halfheight_m`.
    pub potential_c2: Option<f64>,
    pub goal_weight_altitude: f64,
    pub goal_weight_speed: f64,
    pub goal_weight_heading: f64,
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<f64>,
    /// Write a checkpoint every this many episodes; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            graph_layer: GraphLayerKind::Gat,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            entropy_coeff: 0.01,
            value_coeff: 0.5,
            episodes: 5000,
            max_aircraft: 10,
            aircraft_per_episode: 30,
            max_steps_per_episode: 2000,
            potential_b: 2.0,
            potential_c1: None,
            potential_c2: None,
            goal_weight_altitude: 1.0 / 100.0,
            goal_weight_speed: 1.0 / 5.0,
            goal_weight_heading: 1.0 / 5.0,
            normalize_advantages: false,
            max_grad_norm: None,
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.entropy_coeff < 0.0 || self.value_coeff < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        if self.max_aircraft < 2 || self.aircraft_per_episode < 2 {
            return bad("max_aircraft and aircraft_per_episode must allow one pair");
        }
        if self.max_steps_per_episode == 0 {
            return bad("max_steps_per_episode must be positive");
        }
        if matches!(self.max_grad_norm, Some(m) if m <= 0.0) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }

    pub fn architecture(&self) -> ArchitectureSpec {
        ArchitectureSpec::new(self.graph_layer)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    /// Sum of base rewards divided by the number of aircraft flown.
    pub mean_return: f64,
    pub mean_shaped_return: f64,
    #[serde(flatten)]
    pub counters: EpisodeCounters,
    pub loss: Option<LossStats>,
}

impl EpisodeStats {
    fn new(episode: usize, buf: &EpisodeBuffer, loss: Option<LossStats>) -> Self {
        let aircraft = buf.trajectories().len().max(1) as f64;
        Self {
            episode,
            mean_return: buf.total_base_reward() / aircraft,
            mean_shaped_return: buf.total_shaped_reward() / aircraft,
            counters: buf.counters.clone(),
            loss,
        }
    }
}

pub struct TrainingOutcome {
    pub policy: Policy,
    pub log: Vec<EpisodeStats>,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains from scratch. With `out` set, the log is streamed to
/// `out/train_log.jsonl` and checkpoints are written beside it.
pub fn run_training(
    sim: &SimConfig,
    cfg: &TrainConfig,
    seed: u64,
    out: Option<&Path>,
    mut on_episode: impl FnMut(&EpisodeStats),
) -> Result<TrainingOutcome, TrainError> {
    sim.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = Policy::new(cfg.architecture(), &mut rng);
    let mut log_file = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join(TRAIN_LOG_FILE))?))
        }
        None => None,
    };
    let mut log = Vec::with_capacity(cfg.episodes);
    let mut checkpoints = Vec::new();

    for episode in 0..cfg.episodes {
        let world_seed: u64 = rng.random();
        let buf = collect_episode(&policy, sim, cfg, world_seed, &mut rng)?;
        let loss = update(&mut policy, &buf, cfg);
        let stats = EpisodeStats::new(episode, &buf, loss);
        if let Some(f) = log_file.as_mut() {
            serde_json::to_writer(&mut *f, &stats).map_err(std::io::Error::from)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        on_episode(&stats);
        log.push(stats);

        if let Some(dir) = out {
            if cfg.checkpoint_every > 0 && (episode + 1) % cfg.checkpoint_every == 0 {
                let path = dir.join(format!("checkpoint_{:05}.ckpt", episode + 1));
                policy.save(&path)?;
                checkpoints.push(path);
            }
        }
    }
    if let Some(dir) = out {
        let path = dir.join(FINAL_CHECKPOINT);
        policy.save(&path)?;
        checkpoints.push(path);
    }
    Ok(TrainingOutcome {
        policy,
        log,
        checkpoints,
    })
}
