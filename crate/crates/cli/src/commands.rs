//! Subcommand definitions and handlers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use doa_core::agents::AlgoKind;
use doa_core::dynamics::BehaviorKind;
use doa_core::env::ObservationMode;
use doa_core::harness::aggregate::read_curve_csv;
use doa_core::harness::experiments::{
    eval_agent_checkpoint, eval_predictor_experiment, load_forecaster, predictor_checkpoint_path,
    train_agent_experiment, train_predictor_experiment,
};
use doa_core::harness::ExperimentConfig;
use doa_core::predictor::PredictorModel;

use crate::plot;

/// Environment variable naming the output root; `--out` takes precedence.
pub const OUT_ROOT_VAR: &str = "DOA_OUT_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "doa",
    version,
    about = "Dynamic obstacle avoidance with collision-risk-aware recurrent RL"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trajectories, train a predictor, save it and its loss curve.
    TrainPredictor(Common),
    /// RMSE quantiles by horizon, forecast overlays and a CPA profile.
    EvalPredictor {
        #[command(flatten)]
        common: Common,
        /// Predictor checkpoint; defaults to the config's, then `<out>/predictor-<behavior>.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Seeded training runs plus the aggregated learning curve.
    TrainAgent {
        #[command(flatten)]
        common: Common,
        /// Predictor checkpoint for SL mode.
        #[arg(long)]
        predictor: Option<PathBuf>,
    },
    /// Deterministic episodes of a saved agent with trajectory plots.
    EvalAgent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        /// Predictor checkpoint for SL mode.
        #[arg(long)]
        predictor: Option<PathBuf>,
    },
    /// Redraw figures from data files. Several learning-curve files are
    /// combined into one figure written to `--output`.
    Plot {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Flags shared by the experiment subcommands; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML experiment file; missing keys take defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of independent runs
    #[arg(long)]
    pub runs: Option<usize>,
    /// Output root
    #[arg(long, env = OUT_ROOT_VAR)]
    pub out: Option<PathBuf>,
    /// Observation mode: sl or baseline
    #[arg(long)]
    pub mode: Option<ObservationMode>,
    /// td3 or sac
    #[arg(long)]
    pub algo: Option<AlgoKind>,
    /// Obstacle behavior: linear, periodic or stochastic
    #[arg(long)]
    pub behavior: Option<BehaviorKind>,
}

impl Common {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.algo {
            cfg.algo = v;
        }
        if let Some(v) = self.behavior {
            cfg.behavior = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainPredictor(common) => train_predictor_cmd(&common.resolve()?),
        Command::EvalPredictor { common, checkpoint } => eval_predictor_cmd(&common.resolve()?, checkpoint),
        Command::TrainAgent { common, predictor } => train_agent_cmd(common.resolve()?, predictor),
        Command::EvalAgent {
            common,
            checkpoint,
            episodes,
            predictor,
        } => eval_agent_cmd(common.resolve()?, &checkpoint, episodes, predictor),
        Command::Plot { files, output } => plot_cmd(&files, output.as_deref()),
    }
}

fn train_predictor_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let out = &cfg.out_dir;
    let run = train_predictor_experiment(cfg, out)?;
    let best = &run.log.epochs[run.log.best_epoch.saturating_sub(1).min(run.log.epochs.len() - 1)];
    plot::plot_file(&run.loss_csv)?;
    println!(
        "{} predictor: {} epochs, best validation MSE {:.3} m², checkpoint {} (sha256 {})",
        cfg.behavior,
        run.log.epochs.len(),
        best.validation_mse,
        run.checkpoint.display(),
        run.checkpoint_sha256
    );
    Ok(())
}

fn predictor_path(cfg: &ExperimentConfig, explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| cfg.predictor.checkpoint.clone())
        .unwrap_or_else(|| predictor_checkpoint_path(&cfg.out_dir, cfg))
}

fn eval_predictor_cmd(cfg: &ExperimentConfig, checkpoint: Option<PathBuf>) -> Result<()> {
    let path = predictor_path(cfg, checkpoint);
    let model = PredictorModel::load(&path).with_context(|| format!("loading {}", path.display()))?;
    model.ensure_behavior(cfg.behavior)?;
    let report = eval_predictor_experiment(cfg, &model, &cfg.out_dir)?;
    for csv in [&report.table_csv, &report.overlay_csv, &report.profile_csv] {
        plot::plot_file(csv)?;
    }
    let q = &report.quantiles;
    println!(
        "{} predictor, held-out one-step RMSE {:.3} m",
        cfg.behavior, report.one_step_rmse
    );
    println!("horizon  q25  q50  q75  q90 (m)");
    for k in [1usize, 10, 50, q.len()] {
        if let Some(r) = q.get(k.saturating_sub(1)) {
            println!("{:>7} {:.2} {:.2} {:.2} {:.2}", r.horizon, r.q25, r.q50, r.q75, r.q90);
        }
    }
    println!(
        "encounter CPA: d = {:.1} m at t = {:.0} s",
        report.encounter.d_cpa, report.encounter.t_cpa
    );
    Ok(())
}

fn with_predictor(mut cfg: ExperimentConfig, predictor: Option<PathBuf>) -> ExperimentConfig {
    if cfg.mode == ObservationMode::Sl {
        let path = predictor_path(&cfg, predictor);
        cfg.predictor.checkpoint = Some(path);
    }
    cfg
}

fn train_agent_cmd(cfg: ExperimentConfig, predictor: Option<PathBuf>) -> Result<()> {
    let cfg = with_predictor(cfg, predictor);
    let forecaster = load_forecaster(&cfg)?;
    let exp = train_agent_experiment(&cfg, forecaster, &cfg.out_dir)?;
    for run in &exp.runs {
        for trace in &run.traces {
            if trace.is_file() {
                plot::plot_file(trace)?;
            }
        }
    }
    plot::plot_file(&exp.curve_csv)?;
    let combined = combine_behavior_curves(&cfg.out_dir, cfg.behavior)?;
    if let Some(path) = combined {
        info!("comparison figure {}", plot::svg_sibling(&path).display());
    }
    if let Some(last) = exp.curve.last() {
        println!(
            "{}: final mean evaluation return {:.2} [{:.2}, {:.2}] over {} runs",
            cfg.variant_label(),
            last.mean_return,
            last.ci_low,
            last.ci_high,
            last.n_runs
        );
    }
    let failed: Vec<_> = exp.failed_runs().collect();
    if !failed.is_empty() {
        for r in &failed {
            eprintln!("run {} failed: {}", r.run_index, r.error.as_deref().unwrap_or(""));
        }
        bail!("{} of {} runs failed", failed.len(), exp.runs.len());
    }
    Ok(())
}

/// Collects every `<variant>-<behavior>/learning-curve.csv` under `out`
/// into `learning-curves-<behavior>.csv` and draws it.
pub fn combine_behavior_curves(out: &Path, behavior: BehaviorKind) -> Result<Option<PathBuf>> {
    let suffix = format!("-{behavior}");
    let mut dirs: Vec<PathBuf> = fs::read_dir(out)
        .with_context(|| format!("listing {}", out.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(&suffix))
                && p.join("learning-curve.csv").is_file()
        })
        .collect();
    if dirs.is_empty() {
        return Ok(None);
    }
    // baseline before SL for each algorithm
    dirs.sort_by_key(|p| {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let sl = name.starts_with("sl-");
        (name.trim_start_matches("sl-").to_string(), sl)
    });
    let curves = dirs
        .iter()
        .map(|d| {
            let csv = d.join("learning-curve.csv");
            Ok((plot::curve_label(&csv), read_curve_csv(&csv)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let path = out.join(format!("learning-curves-{behavior}.csv"));
    plot::write_combined_curves(&path, &curves)?;
    plot::plot_file(&path)?;
    Ok(Some(path))
}

fn eval_agent_cmd(cfg: ExperimentConfig, checkpoint: &Path, episodes: usize, predictor: Option<PathBuf>) -> Result<()> {
    let cfg = with_predictor(cfg, predictor);
    let forecaster = load_forecaster(&cfg)?;
    let out = cfg.out_dir.join("eval").join(cfg.variant_id());
    let report = eval_agent_checkpoint(&cfg, checkpoint, forecaster, episodes, &out)
        .with_context(|| format!("evaluating {}", checkpoint.display()))?;
    for trace in &report.traces {
        plot::plot_file(trace)?;
    }
    for (k, o) in report.outcomes.iter().enumerate() {
        println!(
            "episode {k}: return {:.0}, violations {}",
            o.total_return,
            o.violations()
        );
    }
    let returns = report.returns();
    println!(
        "{} over {} episodes: mean return {:.2}, std {:.2}",
        cfg.variant_label(),
        returns.len(),
        report.mean_return(),
        doa_core::stats::std(&returns)
    );
    Ok(())
}

fn plot_cmd(files: &[PathBuf], output: Option<&Path>) -> Result<()> {
    let curves: Vec<&PathBuf> = files
        .iter()
        .filter(|f| matches!(plot::detect_kind(f), Ok(plot::FigureKind::LearningCurve)))
        .collect();
    if curves.len() > 1 {
        let Some(output) = output else {
            bail!("combining several learning curves needs --output");
        };
        let data = curves
            .iter()
            .map(|f| Ok((plot::curve_label(f), read_curve_csv(f)?)))
            .collect::<Result<Vec<_>>>()?;
        let csv = output.with_extension("csv");
        plot::write_combined_curves(&csv, &data)?;
        let svg = plot::plot_file(&csv)?;
        println!("{}", svg.display());
    }
    for f in files {
        if curves.len() > 1 && curves.contains(&f) {
            continue;
        }
        match plot::plot_file(f) {
            Ok(svg) => println!("{}", svg.display()),
            Err(e) => {
                warn!("{}: {e:#}", f.display());
                return Err(e);
            }
        }
    }
    Ok(())
}
