//! Experiment runners behind the CLI subcommands. Each writes its data files
//! into the output directory and returns what it wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};

use super::aggregate::{aggregate, write_curve_csv, CurvePoint};
use super::{ensure_dir, file_sha256, ExperimentConfig, RunArtifacts};
use crate::agents::train::{eval_seeds, run_episode, train, EpisodeOutcome, MetricLog};
use crate::agents::{Agent, AgentCheckpoint};
use crate::dynamics::{simulate_trajectory, ObstacleSpec, PassingRule};
use crate::env::trace::EpisodeTrace;
use crate::env::{Environment, ObservationMode};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::predictor::{
    generate_trajectories, make_training_set, one_step_rmse, rmse_by_horizon, rollout, train_predictor, Direction,
    Forecaster, HorizonQuantiles, PredictorModel, TrainingLog,
};
use crate::risk::{collision_risk_batch, write_profile_rows, AgentState, CRMetrics};
use crate::rng::{derive_seed, rng_from};
use crate::stats;

/// Trajectories drawn exactly like environment obstacles: training set from
/// the experiment seed, held-out set from a derived seed.
pub fn predictor_data(cfg: &ExperimentConfig) -> (Vec<Vec<Vec2>>, Vec<Vec<Vec2>>) {
    let env = cfg.env_config();
    let params = env.effective_dynamics();
    let p = &cfg.predictor;
    let train = generate_trajectories(
        cfg.behavior,
        &params,
        p.train_trajectories,
        p.trajectory_len,
        env.v_x_max,
        env.v_y_max,
        cfg.seed,
    );
    let eval_len = p.trajectory_len.max(p.window + p.horizon);
    let held_out = generate_trajectories(
        cfg.behavior,
        &params,
        p.eval_trajectories,
        eval_len,
        env.v_x_max,
        env.v_y_max,
        derive_seed(cfg.seed, &[1]),
    );
    (train, held_out)
}

pub fn predictor_checkpoint_path(out: &Path, cfg: &ExperimentConfig) -> PathBuf {
    out.join(format!("predictor-{}.json", cfg.behavior))
}

#[derive(Debug)]
pub struct PredictorArtifacts {
    pub model: PredictorModel,
    pub log: TrainingLog,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub loss_csv: PathBuf,
}

pub fn train_predictor_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<PredictorArtifacts> {
    ensure_dir(out)?;
    let (trajectories, _) = predictor_data(cfg);
    let set = make_training_set(&trajectories, cfg.predictor.window, cfg.behavior);
    info!("training {} predictor on {} pairs", cfg.behavior, set.len());
    let (model, log) = train_predictor(&set, &cfg.predictor.train)?;
    let checkpoint = predictor_checkpoint_path(out, cfg);
    model.save(&checkpoint)?;
    let loss_csv = out.join(format!("predictor-{}-loss.csv", cfg.behavior));
    log.write_csv(&loss_csv)?;
    Ok(PredictorArtifacts {
        checkpoint_sha256: file_sha256(&checkpoint)?,
        model,
        log,
        checkpoint,
        loss_csv,
    })
}

#[derive(Debug)]
pub struct PredictorReport {
    pub one_step_rmse: f64,
    pub quantiles: Vec<HorizonQuantiles>,
    pub encounter: CRMetrics,
    pub table_csv: PathBuf,
    pub overlay_csv: PathBuf,
    pub profile_csv: PathBuf,
}

/// Held-out forecasts shown against the truth.
pub const OVERLAY_TRAJECTORIES: usize = 3;

pub fn eval_predictor_experiment<F: Forecaster + ?Sized>(
    cfg: &ExperimentConfig,
    model: &F,
    out: &Path,
) -> Result<PredictorReport> {
    ensure_dir(out)?;
    if let Some(b) = model.behavior() {
        if b != cfg.behavior {
            return Err(Error::BehaviorMismatch {
                checkpoint: b.to_string(),
                requested: cfg.behavior.to_string(),
            });
        }
    }
    let (_, held_out) = predictor_data(cfg);
    let rmse = one_step_rmse(model, &held_out);
    let quantiles = rmse_by_horizon(model, &held_out, cfg.predictor.horizon)?;
    let b = cfg.behavior;

    let table_csv = out.join(format!("rmse-{b}.csv"));
    let mut w = csv::Writer::from_path(&table_csv)?;
    for q in &quantiles {
        w.serialize(q)?;
    }
    w.flush().map_err(|e| Error::io(&table_csv, e))?;

    let overlay_csv = out.join(format!("overlay-{b}.csv"));
    write_overlay(
        &overlay_csv,
        model,
        &held_out[..OVERLAY_TRAJECTORIES.min(held_out.len())],
        cfg.predictor.horizon,
    )?;

    let profile_csv = out.join(format!("cpa-profile-{b}.csv"));
    let encounter = write_encounter_profile(&profile_csv, model, cfg)?;

    Ok(PredictorReport {
        one_step_rmse: rmse,
        quantiles,
        encounter,
        table_csv,
        overlay_csv,
        profile_csv,
    })
}

/// Rows `trajectory,kind,t_step,x,y` with kinds `observed`, `truth`, `predicted`.
pub fn write_overlay<F: Forecaster + ?Sized>(
    path: &Path,
    model: &F,
    trajectories: &[Vec<Vec2>],
    horizon: usize,
) -> Result<()> {
    let h = model.window_len();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(out, "trajectory,kind,t_step,x,y").map_err(io)?;
    for (i, traj) in trajectories.iter().enumerate() {
        let horizon = horizon.min(traj.len().saturating_sub(h));
        let pred = rollout(model, &traj[..h], horizon, Direction::Forward);
        let rows = traj[..h]
            .iter()
            .enumerate()
            .map(|(t, p)| ("observed", t, *p))
            .chain(
                traj[h..h + horizon]
                    .iter()
                    .enumerate()
                    .map(|(k, p)| ("truth", h + k, *p)),
            )
            .chain(pred.iter().enumerate().map(|(k, p)| ("predicted", h + k, *p)));
        for (kind, t, p) in rows {
            writeln!(out, "{i},{kind},{t},{},{}", p.x, p.y).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// A fixed encounter: the agent heads east at 3 m/s and the obstacle's linear
/// motion brings it 30 m to the agent's left about 40 steps ahead. Writes the
/// raw and smoothed distance curves and returns the CPA estimate.
pub fn write_encounter_profile<F: Forecaster + ?Sized>(
    path: &Path,
    model: &F,
    cfg: &ExperimentConfig,
) -> Result<CRMetrics> {
    let env = cfg.env_config();
    let dt = env.dt;
    let h = model.window_len();
    let agent = AgentState {
        velocity: Vec2::new(3.0, 0.0),
        ..Default::default()
    };
    let velocity = Vec2::new(-0.3 * env.v_x_max / 0.5, 0.2 * env.v_y_max / 0.5);
    let meet = 40.0 * dt;
    let now = Vec2::new(agent.velocity.x * meet, 30.0) - velocity * meet;
    let spec = ObstacleSpec {
        initial_position: now - velocity * ((h - 1) as f64 * dt),
        velocity,
        behavior: cfg.behavior,
        noise_seed: derive_seed(cfg.seed, &[2]),
        passing_rule: PassingRule::Right,
    };
    let history = simulate_trajectory(&spec, &env.effective_dynamics(), h);
    let profile = collision_risk_batch(model, &[&history], &agent, &env.effective_cpa())?.remove(0);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_profile_rows(&mut out, 0, &profile, true).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(profile.metrics)
}

/// The predictor an environment needs: none for the baseline, the
/// configured checkpoint (with matching behavior) for SL.
pub fn load_forecaster(cfg: &ExperimentConfig) -> Result<Option<Arc<dyn Forecaster>>> {
    if cfg.mode == ObservationMode::Baseline {
        return Ok(None);
    }
    let path = cfg
        .predictor
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("SL mode needs predictor.checkpoint".into()))?;
    let model = PredictorModel::load(path)?;
    model.ensure_behavior(cfg.behavior)?;
    Ok(Some(Arc::new(model)))
}

pub fn variant_dir(out: &Path, cfg: &ExperimentConfig) -> PathBuf {
    out.join(cfg.variant_id())
}

pub fn run_dir(out: &Path, cfg: &ExperimentConfig, run_index: usize) -> PathBuf {
    variant_dir(out, cfg).join(format!("run-{run_index:02}"))
}

/// One seeded training run. Errors inside the run are recorded in the
/// returned artifacts; only failures to write artifacts are returned as `Err`.
pub fn train_agent_run(
    cfg: &ExperimentConfig,
    run_index: usize,
    forecaster: Option<Arc<dyn Forecaster>>,
    out: &Path,
) -> Result<RunArtifacts> {
    let dir = run_dir(out, cfg, run_index);
    ensure_dir(&dir)?;
    let snapshot = cfg.single_run(run_index);
    let config_snapshot = dir.join("config.toml");
    snapshot.save(&config_snapshot)?;
    let seed = cfg.run_seed(run_index);
    let mut artifacts = RunArtifacts {
        run_index,
        seed,
        metric_log: dir.join("metrics.csv"),
        checkpoints: Vec::new(),
        traces: Vec::new(),
        config_snapshot,
        error: None,
    };

    let mut log = MetricLog::default();
    let result = (|| -> Result<Agent> {
        let env_cfg = cfg.env_config();
        let mut env = Environment::new(env_cfg.clone(), forecaster.clone())?;
        let mut eval_env = Environment::new(env_cfg, forecaster.clone())?;
        let mut agent = Agent::new(cfg.algo, env.observation_len(), cfg.agent.clone(), seed)?;
        train(
            &mut agent,
            &mut env,
            &mut eval_env,
            &cfg.schedule,
            seed,
            &mut log,
            |p, _| {
                info!(
                    "{} run {run_index} step {}: {:.2}",
                    cfg.variant_id(),
                    p.env_step,
                    p.mean_eval_return
                );
            },
        )?;
        // final policy on the first evaluation seed
        let mut trace = EpisodeTrace::default();
        let l = agent.config().history_len;
        let mut unused = rng_from(0, &[]);
        let episode_seed = eval_seeds(seed, 1)[0];
        run_episode(
            &mut eval_env,
            episode_seed,
            l,
            |h, o| agent.act(h, o, false, &mut unused),
            Some(&mut trace),
        )?;
        let trace_path = dir.join("trace.csv");
        trace.write_csv(&trace_path)?;
        artifacts.traces.push(trace_path);
        Ok(agent)
    })();

    log.write_csv(&artifacts.metric_log)?;
    match result {
        Ok(agent) => {
            let path = dir.join("agent.json");
            AgentCheckpoint::new(agent, snapshot.hash()?, cfg.schedule.total_steps).save(&path)?;
            artifacts.checkpoints.push(path);
        }
        Err(e) => {
            warn!("{} run {run_index} failed: {e}", cfg.variant_id());
            artifacts.error = Some(e.to_string());
        }
    }
    artifacts.save(&dir.join("run.json"))?;
    Ok(artifacts)
}

#[derive(Debug)]
pub struct AgentExperiment {
    pub runs: Vec<RunArtifacts>,
    pub curve: Vec<CurvePoint>,
    pub curve_csv: PathBuf,
}

impl AgentExperiment {
    pub fn failed_runs(&self) -> impl Iterator<Item = &RunArtifacts> {
        self.runs.iter().filter(|r| r.error.is_some())
    }
}

/// Runs every configured seed, then aggregates the completed runs.
pub fn train_agent_experiment(
    cfg: &ExperimentConfig,
    forecaster: Option<Arc<dyn Forecaster>>,
    out: &Path,
) -> Result<AgentExperiment> {
    cfg.validate()?;
    let mut runs = Vec::new();
    for k in cfg.run_indices() {
        runs.push(train_agent_run(cfg, k, forecaster.clone(), out)?);
    }
    let (curve, curve_csv) = aggregate_variant(&variant_dir(out, cfg))?;
    Ok(AgentExperiment { runs, curve, curve_csv })
}

/// Aggregates every completed run found under a variant directory and
/// writes `learning-curve.csv` there. Failed runs are skipped with a warning.
pub fn aggregate_variant(dir: &Path) -> Result<(Vec<CurvePoint>, PathBuf)> {
    let mut manifests: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("run.json"))
        .filter(|p| p.is_file())
        .collect();
    manifests.sort();
    let mut logs = Vec::new();
    for path in manifests {
        let run = RunArtifacts::load(&path)?;
        if let Some(err) = &run.error {
            warn!("skipping failed run {} ({err})", run.run_index);
            continue;
        }
        logs.push(MetricLog::read_csv(&run.metric_log)?);
    }
    if logs.is_empty() {
        return Err(Error::Empty("completed runs"));
    }
    let curve = aggregate(&logs);
    let path = dir.join("learning-curve.csv");
    write_curve_csv(&path, &curve)?;
    Ok((curve, path))
}

#[derive(Debug)]
pub struct AgentEvalReport {
    pub outcomes: Vec<EpisodeOutcome>,
    pub traces: Vec<PathBuf>,
    pub summary_csv: PathBuf,
}

impl AgentEvalReport {
    pub fn returns(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.total_return).collect()
    }

    pub fn mean_return(&self) -> f64 {
        stats::mean(&self.returns())
    }
}

/// Deterministic episodes of a saved agent, one trace per episode.
pub fn eval_agent_checkpoint(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    forecaster: Option<Arc<dyn Forecaster>>,
    episodes: usize,
    out: &Path,
) -> Result<AgentEvalReport> {
    ensure_dir(out)?;
    let ckpt = AgentCheckpoint::load(checkpoint)?;
    let mut env = Environment::new(cfg.env_config(), forecaster)?;
    if ckpt.agent.obs_dim() != env.observation_len() {
        return Err(Error::LengthMismatch {
            expected: ckpt.agent.obs_dim(),
            actual: env.observation_len(),
        });
    }
    let agent = &ckpt.agent;
    let l = agent.config().history_len;
    let mut unused = rng_from(0, &[]);
    let mut outcomes = Vec::new();
    let mut traces = Vec::new();
    let summary_csv = out.join("eval-returns.csv");
    let mut summary = csv::Writer::from_path(&summary_csv)?;
    summary.write_record(["episode", "seed", "return", "violations"])?;
    for (k, seed) in eval_seeds(cfg.seed, episodes).into_iter().enumerate() {
        let mut trace = EpisodeTrace::default();
        let outcome = run_episode(
            &mut env,
            seed,
            l,
            |h, o| agent.act(h, o, false, &mut unused),
            Some(&mut trace),
        )?;
        let path = out.join(format!("trace-{k:02}.csv"));
        trace.write_csv(&path)?;
        summary.write_record([
            k.to_string(),
            seed.to_string(),
            outcome.total_return.to_string(),
            outcome.violations().to_string(),
        ])?;
        traces.push(path);
        outcomes.push(outcome);
    }
    summary.flush().map_err(|e| Error::io(&summary_csv, e))?;
    Ok(AgentEvalReport {
        outcomes,
        traces,
        summary_csv,
    })
}
