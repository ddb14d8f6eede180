//! Collision-risk estimation from forecast trajectories.
//!
//! The obstacle track over `j ∈ [-past, horizon]` steps around "now" is
//! stitched from a backward rollout, the observed window and a forward
//! rollout. The agent is extrapolated linearly from its current velocity.
//! Their pointwise distance is smoothed with a symmetric moving average and
//! the global minimum gives `(d_cpa, t_cpa)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::predictor::{rollout_batch, Direction, Forecaster};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Lateral acceleration applied on the last step, m/s².
    pub lateral_acceleration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpaConfig {
    /// Forecast steps into the future.
    pub horizon: usize,
    /// Steps into the past covered by the distance curve.
    pub past_horizon: usize,
    /// Half-width `n` of the `2n + 1` moving average.
    pub smoothing_half_window: usize,
    pub dt: f64,
}

impl Default for CpaConfig {
    fn default() -> Self {
        CpaConfig {
            horizon: 100,
            past_horizon: 100,
            smoothing_half_window: 10,
            dt: 5.0,
        }
    }
}

/// Distances indexed by relative step `j`, starting at `first_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCurve {
    pub values: Vec<f64>,
    pub first_index: i64,
    pub dt: f64,
}

impl DistanceCurve {
    pub fn relative_step(&self, k: usize) -> i64 {
        self.first_index + k as i64
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values.iter().enumerate().map(|(k, v)| (self.relative_step(k), *v))
    }
}

/// Estimated closest point of approach for one obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CRMetrics {
    pub d_cpa: f64,
    /// Negative when the closest approach lies in the past.
    pub t_cpa: f64,
    /// Steps since the last refresh.
    pub age: usize,
}

pub fn agent_linear_trajectory(agent: &AgentState, first: i64, last: i64, dt: f64) -> Vec<Vec2> {
    (first..=last)
        .map(|j| agent.position + agent.velocity * (j as f64 * dt))
        .collect()
}

pub fn distance_curve(obstacle: &[Vec2], agent: &[Vec2], first_index: i64, dt: f64) -> Result<DistanceCurve> {
    if obstacle.len() != agent.len() {
        return Err(Error::LengthMismatch {
            expected: obstacle.len(),
            actual: agent.len(),
        });
    }
    Ok(DistanceCurve {
        values: obstacle.iter().zip(agent).map(|(o, a)| o.distance(*a)).collect(),
        first_index,
        dt,
    })
}

/// Symmetric `2n + 1` moving average; near the ends the window shrinks to
/// the samples that exist.
pub fn smooth_distance(curve: &DistanceCurve, n: usize) -> DistanceCurve {
    let len = curve.values.len();
    let values = (0..len)
        .map(|k| {
            let window = &curve.values[k.saturating_sub(n)..(k + n + 1).min(len)];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect();
    DistanceCurve {
        values,
        first_index: curve.first_index,
        dt: curve.dt,
    }
}

/// Global minimum of the curve and its time; ties go to the earliest step.
pub fn estimate_cpa(curve: &DistanceCurve) -> Result<(f64, f64)> {
    let (k, d) = curve
        .values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (k, &v)| match best {
            Some((_, b)) if v >= b => best,
            _ => Some((k, v)),
        })
        .ok_or(Error::Empty("distance curve"))?;
    Ok((d, curve.relative_step(k) as f64 * curve.dt))
}

/// Exact CPA of two constant-velocity points with relative position
/// `p_rel` and relative velocity `v_rel`.
pub fn closed_form_cpa(p_rel: Vec2, v_rel: Vec2) -> (f64, f64) {
    let speed2 = v_rel.norm_squared();
    let t = if speed2 > 0.0 { -p_rel.dot(v_rel) / speed2 } else { 0.0 };
    ((p_rel + v_rel * t).norm(), t)
}

/// Raw and smoothed curves plus the resulting estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CpaProfile {
    pub obstacle_track: Vec<Vec2>,
    pub raw: DistanceCurve,
    pub smoothed: DistanceCurve,
    pub metrics: CRMetrics,
}

/// Obstacle positions for `j ∈ [-past_horizon, horizon]`, built from
/// backward rollout, observed window and forward rollout.
pub fn obstacle_tracks<F: Forecaster + ?Sized>(
    model: &F,
    histories: &[&[Vec2]],
    config: &CpaConfig,
) -> Result<Vec<Vec<Vec2>>> {
    let h = model.window_len();
    if let Some(w) = histories.iter().find(|w| w.len() != h) {
        return Err(Error::LengthMismatch {
            expected: h,
            actual: w.len(),
        });
    }
    let back_len = (config.past_horizon + 1).saturating_sub(h);
    let forward = rollout_batch(model, histories, config.horizon, Direction::Forward);
    let backward = rollout_batch(model, histories, back_len, Direction::Backward);
    let observed = config.past_horizon.min(h - 1);

    Ok(histories
        .iter()
        .zip(forward.into_iter().zip(backward))
        .map(|(w, (fwd, bwd))| {
            let mut track = Vec::with_capacity(config.past_horizon + config.horizon + 1);
            track.extend(bwd.into_iter().rev());
            track.extend_from_slice(&w[h - 1 - observed..]);
            track.extend(fwd);
            track
        })
        .collect())
}

pub fn collision_risk_batch<F: Forecaster + ?Sized>(
    model: &F,
    histories: &[&[Vec2]],
    agent: &AgentState,
    config: &CpaConfig,
) -> Result<Vec<CpaProfile>> {
    let first = -(config.past_horizon as i64);
    let agent_track = agent_linear_trajectory(agent, first, config.horizon as i64, config.dt);
    obstacle_tracks(model, histories, config)?
        .into_iter()
        .map(|track| {
            let raw = distance_curve(&track, &agent_track, first, config.dt)?;
            let smoothed = smooth_distance(&raw, config.smoothing_half_window);
            let (d_cpa, t_cpa) = estimate_cpa(&smoothed)?;
            Ok(CpaProfile {
                obstacle_track: track,
                raw,
                smoothed,
                metrics: CRMetrics { d_cpa, t_cpa, age: 0 },
            })
        })
        .collect()
}

pub fn collision_risk_for_obstacle<F: Forecaster + ?Sized>(
    model: &F,
    history: &[Vec2],
    agent: &AgentState,
    config: &CpaConfig,
) -> Result<CRMetrics> {
    Ok(collision_risk_batch(model, &[history], agent, config)?[0].metrics)
}

/// Debug rows `obstacle_id,j,raw,smoothed`.
pub fn write_profile_rows<W: Write>(
    mut out: W,
    obstacle_id: usize,
    profile: &CpaProfile,
    header: bool,
) -> std::io::Result<()> {
    if header {
        writeln!(out, "obstacle_id,j,raw_distance,smoothed_distance")?;
    }
    for ((j, raw), (_, smooth)) in profile.raw.iter().zip(profile.smoothed.iter()) {
        writeln!(out, "{obstacle_id},{j},{raw},{smooth}")?;
    }
    Ok(())
}
