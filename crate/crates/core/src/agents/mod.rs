//! Recurrent actor-critic agents.
//!
//! Actors and critics see the current observation plus the `l` observations
//! before it (no past actions). [`Agent`] wraps the two algorithms behind one
//! interface used by the training loop and checkpoints.

pub mod history;
pub mod nets;
pub mod replay;
pub mod sac;
pub mod td3;
pub mod train;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use history::History;
use replay::Batch;
pub use sac::Sac;
pub use td3::Td3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoKind {
    Td3,
    Sac,
}

impl AlgoKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgoKind::Td3 => "td3",
            AlgoKind::Sac => "sac",
        }
    }
}

impl fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "td3" => Ok(AlgoKind::Td3),
            "sac" => Ok(AlgoKind::Sac),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub history_len: usize,
    pub hidden_units: usize,
    /// Soft target update coefficient.
    pub tau: f64,
    /// TD3 target policy smoothing noise std.
    pub target_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: u64,
    /// TD3 Gaussian exploration noise std.
    pub exploration_noise: f64,
    pub initial_alpha: f64,
    pub alpha_lr: f64,
    pub target_entropy: f64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            gamma: 0.99,
            batch_size: 32,
            buffer_size: 1_000_000,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            history_len: 10,
            hidden_units: 128,
            tau: 0.005,
            target_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            exploration_noise: 0.1,
            initial_alpha: 0.2,
            alpha_lr: 1e-4,
            target_entropy: -1.0,
        }
    }
}

impl AlgoConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    // negated comparisons also reject NaN
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_size == 0 || self.hidden_units == 0 || self.policy_delay == 0 {
            return bad("batch_size, buffer_size, hidden_units and policy_delay must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.alpha_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if !(self.initial_alpha > 0.0) {
            return bad("initial_alpha must be positive");
        }
        if !(self.target_noise >= 0.0 && self.noise_clip >= 0.0 && self.exploration_noise >= 0.0) {
            return bad("noise parameters must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    /// Set on updates that also trained the actor.
    pub actor_loss: Option<f64>,
    pub alpha: Option<f64>,
}

/// `(l, 1, dim)` history and `(1, dim)` observation for a single decision.
pub(crate) fn single_input(history: &History, obs: &[f32]) -> (Array3<f32>, Array2<f32>) {
    let hist =
        Array3::from_shape_vec((history.len(), 1, history.dim()), history.as_slice().to_vec()).expect("history shape");
    let obs = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).expect("observation shape");
    (hist, obs)
}

pub(crate) fn ensure_finite(stage: &str, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            stage: stage.to_string(),
            loss,
        })
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "lowercase")]
pub enum Agent {
    Td3(Td3),
    Sac(Sac),
}

impl Agent {
    pub fn new(algo: AlgoKind, obs_dim: usize, config: AlgoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(match algo {
            AlgoKind::Td3 => Agent::Td3(Td3::new(obs_dim, config, seed)),
            AlgoKind::Sac => Agent::Sac(Sac::new(obs_dim, config, seed)),
        })
    }

    pub fn algo(&self) -> AlgoKind {
        match self {
            Agent::Td3(_) => AlgoKind::Td3,
            Agent::Sac(_) => AlgoKind::Sac,
        }
    }

    pub fn config(&self) -> &AlgoConfig {
        match self {
            Agent::Td3(a) => &a.config,
            Agent::Sac(a) => &a.config,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Agent::Td3(a) => a.actor.mem.inputs(),
            Agent::Sac(a) => a.actor.mem.inputs(),
        }
    }

    /// Action in `[-1, 1]`; `explore` adds the algorithm's exploration noise.
    pub fn act<R: Rng>(&self, history: &History, obs: &[f32], explore: bool, rng: &mut R) -> f64 {
        match self {
            Agent::Td3(a) => a.act(history, obs, explore, rng),
            Agent::Sac(a) => a.act(history, obs, explore, rng),
        }
    }

    pub fn update<R: Rng>(&mut self, batch: &Batch<f32>, rng: &mut R) -> Result<UpdateStats> {
        match self {
            Agent::Td3(a) => a.update(batch, rng),
            Agent::Sac(a) => a.update(batch, rng),
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            Agent::Td3(a) => a.all_finite(),
            Agent::Sac(a) => a.all_finite(),
        }
    }
}

const CHECKPOINT_FORMAT: &str = "doa-agent/1";

/// Agent with optimizer state, tagged with the hash of the experiment
/// configuration that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format: String,
    pub config_hash: String,
    pub env_step: usize,
    pub agent: Agent,
}

impl AgentCheckpoint {
    pub fn new(agent: Agent, config_hash: String, env_step: usize) -> Self {
        AgentCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config_hash,
            env_step,
            agent,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: AgentCheckpoint = serde_json::from_slice(&bytes)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "{}: unsupported agent checkpoint format `{}`",
                path.display(),
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}
