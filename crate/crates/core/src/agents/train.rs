//! Training loop: random warm-up, one gradient update per environment step,
//! and periodic deterministic evaluation on a fixed set of episode seeds.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::history::History;
use super::replay::{ReplayBuffer, Transition};
use super::Agent;
use crate::env::trace::EpisodeTrace;
use crate::env::{Environment, PassingEvent};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub total_steps: usize,
    /// Uniformly random actions before learning starts.
    pub warmup_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub updates_per_step: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            total_steps: 100_000,
            warmup_steps: 2000,
            eval_interval: 5000,
            eval_episodes: 5,
            updates_per_step: 1,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 || self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(Error::Config(
                "total_steps, eval_interval and eval_episodes must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub env_step: usize,
    pub mean_eval_return: f64,
    pub std_eval_return: f64,
}

impl EvalPoint {
    pub fn from_returns(env_step: usize, returns: &[f64]) -> Self {
        EvalPoint {
            env_step,
            mean_eval_return: stats::mean(returns),
            std_eval_return: stats::std(returns),
        }
    }
}

/// Evaluation history of one run. The point at step 0 is the uniformly
/// random policy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricLog {
    pub points: Vec<EvalPoint>,
}

impl MetricLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let points = r.deserialize().collect::<std::result::Result<Vec<EvalPoint>, _>>()?;
        Ok(MetricLog { points })
    }

    pub fn final_return(&self) -> Option<f64> {
        self.points.last().map(|p| p.mean_eval_return)
    }

    pub fn random_policy_return(&self) -> Option<f64> {
        self.points
            .first()
            .filter(|p| p.env_step == 0)
            .map(|p| p.mean_eval_return)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeOutcome {
    pub total_return: f64,
    pub events: Vec<PassingEvent>,
}

impl EpisodeOutcome {
    pub fn violations(&self) -> usize {
        self.events.iter().filter(|e| e.violation).count()
    }
}

fn to_f32(obs: &[f64]) -> Vec<f32> {
    obs.iter().map(|&v| v as f32).collect()
}

/// Plays one full episode with `policy(history, observation)`.
pub fn run_episode<P>(
    env: &mut Environment,
    seed: u64,
    history_len: usize,
    mut policy: P,
    mut trace: Option<&mut EpisodeTrace>,
) -> Result<EpisodeOutcome>
where
    P: FnMut(&History, &[f32]) -> f64,
{
    let mut obs = to_f32(&env.reset(seed)?);
    let mut history = History::new(history_len, obs.len());
    if let Some(t) = trace.as_deref_mut() {
        t.record(env, 0.0, 0.0, 0);
    }
    let mut outcome = EpisodeOutcome::default();
    loop {
        let action = policy(&history, &obs);
        let r = env.step(action)?;
        outcome.total_return += r.reward;
        if let Some(t) = trace.as_deref_mut() {
            let violations = r.info.events.iter().filter(|e| e.violation).count();
            t.record(env, action.clamp(-1.0, 1.0), r.reward, violations);
        }
        outcome.events.extend(r.info.events);
        history.push(&obs);
        obs = to_f32(&r.observation);
        if r.done {
            return Ok(outcome);
        }
    }
}

pub fn eval_seeds(run_seed: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64)
        .map(|k| derive_seed(run_seed, &[stream::EVALUATION, k]))
        .collect()
}

/// Returns of deterministic-policy episodes, one per seed.
pub fn evaluate(agent: &Agent, env: &mut Environment, seeds: &[u64]) -> Result<Vec<f64>> {
    let l = agent.config().history_len;
    let mut unused = rng_from(0, &[]);
    seeds
        .iter()
        .map(|&s| Ok(run_episode(env, s, l, |h, o| agent.act(h, o, false, &mut unused), None)?.total_return))
        .collect()
}

pub fn evaluate_random<R: Rng>(env: &mut Environment, seeds: &[u64], rng: &mut R) -> Result<Vec<f64>> {
    seeds
        .iter()
        .map(|&s| Ok(run_episode(env, s, 0, |_, _| rng.random_range(-1.0..=1.0), None)?.total_return))
        .collect()
}

/// Trains `agent` in `env`, evaluating in `eval_env`. Evaluation points are
/// appended to `log` as they happen, so it holds the partial history if an
/// error ends the run early. `on_eval` sees every new point.
pub fn train<C>(
    agent: &mut Agent,
    env: &mut Environment,
    eval_env: &mut Environment,
    schedule: &TrainSchedule,
    seed: u64,
    log: &mut MetricLog,
    mut on_eval: C,
) -> Result<()>
where
    C: FnMut(&EvalPoint, &Agent),
{
    schedule.validate()?;
    let cfg = agent.config().clone();
    let dim = env.observation_len();
    if dim != agent.obs_dim() {
        return Err(Error::LengthMismatch {
            expected: agent.obs_dim(),
            actual: dim,
        });
    }
    let seeds = eval_seeds(seed, schedule.eval_episodes);
    let mut explore_rng = rng_from(seed, &[stream::EXPLORATION]);
    let mut replay_rng = rng_from(seed, &[stream::REPLAY]);
    let mut random_rng = rng_from(seed, &[stream::EVALUATION, u64::MAX]);

    let random = evaluate_random(eval_env, &seeds, &mut random_rng)?;
    let point = EvalPoint::from_returns(0, &random);
    log.points.push(point);
    on_eval(&point, agent);

    let mut buffer = ReplayBuffer::new(cfg.buffer_size, cfg.history_len, dim);
    let mut episode = 0u64;
    let mut obs = to_f32(&env.reset(derive_seed(seed, &[stream::EPISODES, episode]))?);
    let mut history = History::new(cfg.history_len, dim);

    for env_step in 1..=schedule.total_steps {
        let action = if env_step <= schedule.warmup_steps {
            explore_rng.random_range(-1.0..=1.0)
        } else {
            agent.act(&history, &obs, true, &mut explore_rng)
        };
        let r = env.step(action)?;
        let next_obs = to_f32(&r.observation);
        buffer.push(&Transition {
            history: history.as_slice().to_vec(),
            obs: obs.clone(),
            action: action.clamp(-1.0, 1.0) as f32,
            reward: r.reward as f32,
            next_obs: next_obs.clone(),
            // episodes end only by the time limit, never by a terminal state
            done: false,
        });
        history.push(&obs);
        obs = next_obs;
        if r.done {
            episode += 1;
            obs = to_f32(&env.reset(derive_seed(seed, &[stream::EPISODES, episode]))?);
            history.clear();
        }

        if env_step > schedule.warmup_steps && buffer.len() >= cfg.batch_size {
            for _ in 0..schedule.updates_per_step {
                let batch = buffer.sample(cfg.batch_size, &mut replay_rng);
                agent.update(&batch, &mut replay_rng)?;
            }
        }

        if env_step % schedule.eval_interval == 0 || env_step == schedule.total_steps {
            let returns = evaluate(agent, eval_env, &seeds)?;
            let point = EvalPoint::from_returns(env_step, &returns);
            log::info!(
                "step {env_step}: eval return {:.2} ± {:.2}",
                point.mean_eval_return,
                point.std_eval_return
            );
            log.points.push(point);
            on_eval(&point, agent);
        }
    }
    Ok(())
}
