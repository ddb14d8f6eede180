//! One-step-ahead obstacle position model and its iterated rollouts.
//!
//! The model sees the last `h` positions of an obstacle, translated so that
//! the newest one is the origin and divided by a fixed position scale, and
//! predicts the displacement to the next position. Long forecasts feed
//! predictions back in as observations. Running the same model on a reversed
//! window forecasts the past.

use std::fs;
use std::path::Path;

use log::{info, warn};
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_velocity, simulate_trajectory, BehaviorKind, DynamicsParams, ObstacleSpec, PassingRule};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::nn::{relu_backward_in_place, relu_in_place, Adam, Float, Linear, Lstm, LstmTape, Params};
use crate::rng::{derive_seed, rng_from, stream};
use crate::stats;

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_HORIZON: usize = 100;
const CHECKPOINT_FORMAT: &str = "doa-predictor/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Anything that maps a window of past positions (oldest first) to the next one.
pub trait Forecaster: Send + Sync {
    fn window_len(&self) -> usize;

    /// Next absolute position for every window.
    fn predict_batch(&self, windows: &[&[Vec2]]) -> Vec<Vec2>;

    /// Behavior the forecaster was fitted to, if it is tied to one.
    fn behavior(&self) -> Option<BehaviorKind> {
        None
    }
}

pub fn predict_next<F: Forecaster + ?Sized>(model: &F, window: &[Vec2]) -> Vec2 {
    model.predict_batch(&[window])[0]
}

/// Iterated forecast of `horizon` positions.
///
/// `Backward` reverses the window, rolls forward and returns the result in
/// reverse-time order: element `k` lies `k + 1` steps before the oldest
/// observed position.
pub fn rollout<F: Forecaster + ?Sized>(model: &F, window: &[Vec2], horizon: usize, direction: Direction) -> Vec<Vec2> {
    rollout_batch(model, &[window], horizon, direction)
        .pop()
        .unwrap_or_default()
}

/// [`rollout`] for many windows at once, sharing each model call.
pub fn rollout_batch<F: Forecaster + ?Sized>(
    model: &F,
    windows: &[&[Vec2]],
    horizon: usize,
    direction: Direction,
) -> Vec<Vec<Vec2>> {
    let h = model.window_len();
    let mut tracks: Vec<Vec<Vec2>> = windows
        .iter()
        .map(|w| {
            assert_eq!(w.len(), h, "window length must equal the model's history length");
            let mut v = Vec::with_capacity(h + horizon);
            match direction {
                Direction::Forward => v.extend_from_slice(w),
                Direction::Backward => v.extend(w.iter().rev()),
            }
            v
        })
        .collect();
    for _ in 0..horizon {
        let next = {
            let views: Vec<&[Vec2]> = tracks.iter().map(|t| &t[t.len() - h..]).collect();
            model.predict_batch(&views)
        };
        for (track, p) in tracks.iter_mut().zip(next) {
            track.push(p);
        }
    }
    tracks.into_iter().map(|t| t[h..].to_vec()).collect()
}

/// Constant-velocity continuation from the last two positions. Exact on
/// linear trajectories; used as an oracle and as a cheap stand-in model.
#[derive(Debug, Clone, Copy)]
pub struct LinearForecaster {
    pub window: usize,
}

impl Default for LinearForecaster {
    fn default() -> Self {
        LinearForecaster { window: DEFAULT_WINDOW }
    }
}

impl Forecaster for LinearForecaster {
    fn window_len(&self) -> usize {
        self.window
    }

    fn predict_batch(&self, windows: &[&[Vec2]]) -> Vec<Vec2> {
        windows
            .iter()
            .map(|w| {
                let last = w[w.len() - 1];
                if w.len() < 2 {
                    return last;
                }
                last + (last - w[w.len() - 2])
            })
            .collect()
    }
}

/// LSTM over the window, then a ReLU layer, then a linear 2-D output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorNet<F> {
    pub lstm: Lstm<F>,
    pub hidden: Linear<F>,
    pub out: Linear<F>,
}

struct PredictorTape<F> {
    lstm: LstmTape<F>,
    hidden: Array2<F>,
}

impl<F: Float> PredictorNet<F> {
    pub fn new(hidden_units: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed, &[stream::NETWORK_INIT]);
        PredictorNet {
            lstm: Lstm::new(2, hidden_units, &mut rng),
            hidden: Linear::new(hidden_units, hidden_units, &mut rng),
            out: Linear::new(hidden_units, 2, &mut rng),
        }
    }

    /// `xs` has shape `(h, batch, 2)`; returns `(batch, 2)`.
    pub fn predict(&self, xs: &Array3<F>) -> Array2<F> {
        let h = self.lstm.last_hidden(xs.view());
        let mut z = self.hidden.forward(h.view());
        relu_in_place(&mut z);
        self.out.forward(z.view())
    }

    fn forward(&self, xs: &Array3<F>) -> (Array2<F>, PredictorTape<F>) {
        let lstm = self.lstm.forward(xs.view());
        let mut hidden = self.hidden.forward(lstm.last_hidden().view());
        relu_in_place(&mut hidden);
        let y = self.out.forward(hidden.view());
        (y, PredictorTape { lstm, hidden })
    }

    fn backward(&self, tape: &PredictorTape<F>, dy: &Array2<F>, grad: &mut PredictorNet<F>) {
        let mut dz = self.out.backward(tape.hidden.view(), dy.view(), &mut grad.out);
        relu_backward_in_place(&mut dz, &tape.hidden);
        let dh = self
            .hidden
            .backward(tape.lstm.last_hidden().view(), dz.view(), &mut grad.hidden);
        self.lstm.backward(&tape.lstm, dh.view(), &mut grad.lstm, false);
    }
}

impl<F: Float> Params<F> for PredictorNet<F> {
    fn tensors(&self) -> Vec<&[F]> {
        let mut v = self.lstm.tensors();
        v.extend(self.hidden.tensors());
        v.extend(self.out.tensors());
        v
    }
    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut v = self.lstm.tensors_mut();
        v.extend(self.hidden.tensors_mut());
        v.extend(self.out.tensors_mut());
        v
    }
}

/// Trained predictor plus everything needed to interpret its inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorModel {
    pub format: String,
    pub behavior: BehaviorKind,
    /// History length `h`.
    pub window: usize,
    /// Inputs and targets are `(p - p_last) / position_scale`.
    pub position_scale: f64,
    pub net: PredictorNet<f32>,
}

impl PredictorModel {
    pub fn new(behavior: BehaviorKind, window: usize, position_scale: f64, net: PredictorNet<f32>) -> Self {
        PredictorModel {
            format: CHECKPOINT_FORMAT.to_string(),
            behavior,
            window,
            position_scale,
            net,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: PredictorModel = serde_json::from_slice(&bytes)?;
        if model.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "{}: unsupported predictor format `{}`",
                path.display(),
                model.format
            )));
        }
        Ok(model)
    }

    /// Refuses to serve a behavior the model was not trained on.
    pub fn ensure_behavior(&self, requested: BehaviorKind) -> Result<()> {
        if self.behavior != requested {
            return Err(Error::BehaviorMismatch {
                checkpoint: self.behavior.to_string(),
                requested: requested.to_string(),
            });
        }
        Ok(())
    }

    fn encode(&self, windows: &[&[Vec2]]) -> Array3<f32> {
        encode_windows(windows, self.window, self.position_scale)
    }
}

fn encode_windows<F: Float>(windows: &[&[Vec2]], h: usize, scale: f64) -> Array3<F> {
    let mut xs = Array3::zeros((h, windows.len(), 2));
    for (b, w) in windows.iter().enumerate() {
        let last = w[h - 1];
        for (t, p) in w.iter().enumerate() {
            let r = (*p - last) / scale;
            xs[(t, b, 0)] = F::lit(r.x);
            xs[(t, b, 1)] = F::lit(r.y);
        }
    }
    xs
}

impl Forecaster for PredictorModel {
    fn window_len(&self) -> usize {
        self.window
    }

    fn behavior(&self) -> Option<BehaviorKind> {
        Some(self.behavior)
    }

    fn predict_batch(&self, windows: &[&[Vec2]]) -> Vec<Vec2> {
        if windows.is_empty() {
            return Vec::new();
        }
        let out = self.net.predict(&self.encode(windows));
        windows
            .iter()
            .enumerate()
            .map(|(b, w)| {
                let d = Vec2::new(out[(b, 0)] as f64, out[(b, 1)] as f64) * self.position_scale;
                w[self.window - 1] + d
            })
            .collect()
    }
}

/// Supervised pairs in window-relative coordinates: the newest position of
/// each input window is the origin.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub window: usize,
    pub behavior: BehaviorKind,
    /// Flattened inputs, `window` positions per pair, oldest first.
    pub inputs: Vec<Vec2>,
    pub targets: Vec<Vec2>,
    /// Trajectories too short to yield a single pair.
    pub skipped: usize,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[Vec2] {
        &self.inputs[i * self.window..(i + 1) * self.window]
    }
}

pub fn make_training_set(trajectories: &[Vec<Vec2>], window: usize, behavior: BehaviorKind) -> TrainingSet {
    let mut set = TrainingSet {
        window,
        behavior,
        inputs: Vec::new(),
        targets: Vec::new(),
        skipped: 0,
    };
    for traj in trajectories {
        if traj.len() < window + 1 {
            set.skipped += 1;
            continue;
        }
        for start in 0..traj.len() - window {
            let origin = traj[start + window - 1];
            set.inputs
                .extend(traj[start..start + window].iter().map(|p| *p - origin));
            set.targets.push(traj[start + window] - origin);
        }
    }
    if set.skipped > 0 {
        warn!(
            "skipped {} trajectories shorter than {} positions",
            set.skipped,
            window + 1
        );
    }
    set
}

/// Simulated obstacle tracks with velocities drawn like the environment draws them.
pub fn generate_trajectories(
    behavior: BehaviorKind,
    params: &DynamicsParams,
    count: usize,
    len: usize,
    v_x_max: f64,
    v_y_max: f64,
    seed: u64,
) -> Vec<Vec<Vec2>> {
    let mut rng = rng_from(seed, &[stream::TRAJECTORIES]);
    (0..count)
        .map(|i| {
            let spec = ObstacleSpec {
                initial_position: Vec2::ZERO,
                velocity: sample_velocity(&mut rng, v_x_max, v_y_max),
                behavior,
                noise_seed: derive_seed(seed, &[stream::OBSTACLE, i as u64]),
                passing_rule: PassingRule::Right,
            };
            simulate_trajectory(&spec, params, len)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorTrainConfig {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub position_scale: f64,
    pub seed: u64,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        PredictorTrainConfig {
            hidden_units: 64,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            position_scale: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over pairs of the squared Euclidean error, m².
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_pairs: usize,
    pub validation_pairs: usize,
}

impl TrainingLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.epochs {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn batch_arrays(set: &TrainingSet, idx: &[usize], scale: f64) -> (Array3<f32>, Array2<f32>) {
    let windows: Vec<&[Vec2]> = idx.iter().map(|&i| set.input(i)).collect();
    let xs = encode_windows(&windows, set.window, scale);
    let ys = Array2::from_shape_fn((idx.len(), 2), |(b, c)| {
        let t = set.targets[idx[b]] / scale;
        (if c == 0 { t.x } else { t.y }) as f32
    });
    (xs, ys)
}

/// Mean squared Euclidean error in m² over the pairs in `idx`.
fn evaluate_mse(net: &PredictorNet<f32>, set: &TrainingSet, idx: &[usize], scale: f64) -> f64 {
    let mut total = 0.0;
    for chunk in idx.chunks(512) {
        let (xs, ys) = batch_arrays(set, chunk, scale);
        let pred = net.predict(&xs);
        total += (&pred - &ys).mapv(|d| (d as f64).powi(2)).sum();
    }
    total * scale * scale / idx.len().max(1) as f64
}

/// Adam on the mean squared error with early stopping on the validation split.
/// The returned model carries the parameters of the best validation epoch.
pub fn train_predictor(set: &TrainingSet, config: &PredictorTrainConfig) -> Result<(PredictorModel, TrainingLog)> {
    if set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let scale = config.position_scale;
    let mut rng = rng_from(config.seed, &[stream::SHUFFLE]);
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((set.len() as f64) * config.validation_fraction).round() as usize;
    let n_val = n_val.min(set.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val_idx = if val_idx.is_empty() {
        train_idx.clone()
    } else {
        val_idx.to_vec()
    };

    let mut net = PredictorNet::<f32>::new(config.hidden_units, config.seed);
    let mut adam = Adam::new(config.learning_rate);
    let mut log = TrainingLog {
        train_pairs: train_idx.len(),
        validation_pairs: if n_val == 0 { 0 } else { val_idx.len() },
        ..Default::default()
    };
    let mut best = (f64::INFINITY, net.clone(), 0usize);

    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut sse = 0.0;
        for chunk in train_idx.chunks(config.batch_size) {
            let (xs, ys) = batch_arrays(set, chunk, scale);
            let (pred, tape) = net.forward(&xs);
            let diff = &pred - &ys;
            sse += diff.mapv(|d| (d as f64).powi(2)).sum();
            let dy = diff * (2.0 / chunk.len() as f32);
            let mut grad = net.zeroed();
            net.backward(&tape, &dy, &mut grad);
            adam.step(&mut net, &grad);
        }
        let train_mse = sse * scale * scale / train_idx.len() as f64;
        if !train_mse.is_finite() || !net.all_finite() {
            return Err(Error::Diverged {
                stage: format!("predictor epoch {epoch}"),
                loss: train_mse,
            });
        }
        let validation_mse = evaluate_mse(&net, set, &val_idx, scale);
        info!("epoch {epoch}: train {train_mse:.4} m², validation {validation_mse:.4} m²");
        log.epochs.push(EpochRecord {
            epoch,
            train_mse,
            validation_mse,
        });
        if validation_mse < best.0 {
            best = (validation_mse, net.clone(), epoch);
        } else if epoch - best.2 >= config.patience {
            break;
        }
    }
    log.best_epoch = best.2;
    Ok((PredictorModel::new(set.behavior, set.window, scale, best.1), log))
}

/// Per-coordinate RMSE of one-step predictions over every window of the
/// given trajectories, m.
pub fn one_step_rmse<F: Forecaster + ?Sized>(model: &F, trajectories: &[Vec<Vec2>]) -> f64 {
    let h = model.window_len();
    let mut sq = 0.0;
    let mut n = 0usize;
    for traj in trajectories.iter().filter(|t| t.len() > h) {
        let windows: Vec<&[Vec2]> = (0..traj.len() - h).map(|s| &traj[s..s + h]).collect();
        for (chunk_start, chunk) in windows.chunks(1024).enumerate() {
            let preds = model.predict_batch(chunk);
            for (k, p) in preds.iter().enumerate() {
                let target = traj[chunk_start * 1024 + k + h];
                sq += (*p - target).norm_squared();
                n += 2;
            }
        }
    }
    (sq / n.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonQuantiles {
    pub horizon: usize,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q90: f64,
}

/// RMSE of forecast vs. truth as a function of the forecast horizon.
///
/// Each test trajectory contributes one forecast from its first `h`
/// positions. For horizon `k` its error is the per-coordinate RMSE over the
/// first `k` forecast steps; quantiles are taken across trajectories.
pub fn rmse_by_horizon<F: Forecaster + ?Sized>(
    model: &F,
    trajectories: &[Vec<Vec2>],
    horizon: usize,
) -> Result<Vec<HorizonQuantiles>> {
    let h = model.window_len();
    if trajectories.is_empty() {
        return Err(Error::Empty("test trajectories"));
    }
    if let Some(t) = trajectories.iter().find(|t| t.len() < h + horizon) {
        return Err(Error::LengthMismatch {
            expected: h + horizon,
            actual: t.len(),
        });
    }
    let windows: Vec<&[Vec2]> = trajectories.iter().map(|t| &t[..h]).collect();
    let forecasts = rollout_batch(model, &windows, horizon, Direction::Forward);
    let mut per_traj = vec![Vec::with_capacity(horizon); trajectories.len()];
    for (i, (traj, pred)) in trajectories.iter().zip(&forecasts).enumerate() {
        let mut cum = 0.0;
        for k in 0..horizon {
            cum += (pred[k] - traj[h + k]).norm_squared();
            per_traj[i].push((cum / (2.0 * (k + 1) as f64)).sqrt());
        }
    }
    Ok((0..horizon)
        .map(|k| {
            let column: Vec<f64> = per_traj.iter().map(|r| r[k]).collect();
            HorizonQuantiles {
                horizon: k + 1,
                q25: stats::quantile(&column, 0.25),
                q50: stats::quantile(&column, 0.50),
                q75: stats::quantile(&column, 0.75),
                q90: stats::quantile(&column, 0.90),
            }
        })
        .collect())
}
