//! Experiment configuration, seeding and persistence.
//!
//! An [`ExperimentConfig`] is a TOML file. Run `k` of an experiment uses the
//! seed derived from `(seed, k)`, and every run directory keeps a snapshot
//! of the config narrowed to that single run, so re-running the snapshot
//! reproduces the run exactly.

pub mod aggregate;
pub mod experiments;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::train::TrainSchedule;
use crate::agents::{AlgoConfig, AlgoKind};
use crate::dynamics::BehaviorKind;
use crate::env::{EnvConfig, ObservationMode};
use crate::error::{Error, Result};
use crate::predictor::PredictorTrainConfig;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorSection {
    /// Trained predictor used for the collision-risk features.
    pub checkpoint: Option<PathBuf>,
    pub train_trajectories: usize,
    pub eval_trajectories: usize,
    pub trajectory_len: usize,
    pub horizon: usize,
    pub window: usize,
    pub train: PredictorTrainConfig,
}

impl Default for PredictorSection {
    fn default() -> Self {
        PredictorSection {
            checkpoint: None,
            train_trajectories: 1000,
            eval_trajectories: 200,
            trajectory_len: 200,
            horizon: crate::predictor::DEFAULT_HORIZON,
            window: crate::predictor::DEFAULT_WINDOW,
            train: PredictorTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub behavior: BehaviorKind,
    pub mode: ObservationMode,
    pub algo: AlgoKind,
    pub runs: usize,
    /// Index of the first run; run indices are `first_run..first_run + runs`.
    pub first_run: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// `behavior` and `mode` here are replaced by the top-level fields.
    pub env: EnvConfig,
    pub agent: AlgoConfig,
    pub schedule: TrainSchedule,
    pub predictor: PredictorSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            behavior: BehaviorKind::Stochastic,
            mode: ObservationMode::Sl,
            algo: AlgoKind::Td3,
            runs: 1,
            first_run: 0,
            seed: 0,
            out_dir: PathBuf::from("runs"),
            env: EnvConfig::default(),
            agent: AlgoConfig::default(),
            schedule: TrainSchedule::default(),
            predictor: PredictorSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = toml::from_str(&text)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the serialized config, hex.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml()?.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be positive".into()));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must fit in a signed 64-bit integer".into()));
        }
        self.env_config().validate()?;
        self.agent.validate()?;
        self.schedule.validate()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            behavior: self.behavior,
            mode: self.mode,
            ..self.env.clone()
        }
    }

    pub fn run_indices(&self) -> std::ops::Range<usize> {
        self.first_run..self.first_run + self.runs
    }

    pub fn run_seed(&self, run_index: usize) -> u64 {
        run_seed(self.seed, run_index)
    }

    /// Config that reproduces only run `run_index`.
    pub fn single_run(&self, run_index: usize) -> Self {
        ExperimentConfig {
            runs: 1,
            first_run: run_index,
            ..self.clone()
        }
    }

    /// Short variant label such as `sl-td3-stochastic`.
    pub fn variant_id(&self) -> String {
        let prefix = match self.mode {
            ObservationMode::Sl => "sl-",
            ObservationMode::Baseline => "",
        };
        format!("{prefix}{}-{}", self.algo, self.behavior)
    }

    /// Legend label such as `SL-LSTM-TD3`.
    pub fn variant_label(&self) -> String {
        let prefix = match self.mode {
            ObservationMode::Sl => "SL-",
            ObservationMode::Baseline => "",
        };
        format!("{prefix}LSTM-{}", self.algo.as_str().to_uppercase())
    }
}

pub fn run_seed(master: u64, run_index: usize) -> u64 {
    derive_seed(master, &[stream::RUNS, run_index as u64])
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Files produced by one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub run_index: usize,
    pub seed: u64,
    pub metric_log: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub traces: Vec<PathBuf>,
    pub config_snapshot: PathBuf,
    /// Set when the run ended with an error; the metric log is then partial.
    pub error: Option<String>,
}

impl RunArtifacts {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
