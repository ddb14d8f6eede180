//! Obstacle motion: a constant-velocity linear part plus a behavior-specific
//! non-linear offset.
//!
//! Linear positions use physical time (`t_step * dt`); the AR(1) recurrence
//! and the sinusoid are indexed by simulation step, so a period of 20 steps
//! lasts 100 s at the default `dt = 5 s`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorKind {
    Linear,
    Stochastic,
    Periodic,
}

impl BehaviorKind {
    pub const ALL: [BehaviorKind; 3] = [BehaviorKind::Linear, BehaviorKind::Stochastic, BehaviorKind::Periodic];

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorKind::Linear => "linear",
            BehaviorKind::Stochastic => "stochastic",
            BehaviorKind::Periodic => "periodic",
        }
    }
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(BehaviorKind::Linear),
            "stochastic" => Ok(BehaviorKind::Stochastic),
            "periodic" => Ok(BehaviorKind::Periodic),
            other => Err(Error::Config(format!("unknown behavior `{other}`"))),
        }
    }
}

/// Side on which the agent has to pass an obstacle. Facing +x, "right"
/// means the agent stays at smaller y than the obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassingRule {
    Right,
    Left,
}

impl PassingRule {
    pub fn as_str(self) -> &'static str {
        match self {
            PassingRule::Right => "right",
            PassingRule::Left => "left",
        }
    }
}

impl fmt::Display for PassingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsParams {
    /// AR(1) coefficient of the stochastic offset.
    pub phi_stoch: f64,
    /// Innovation variance of the AR(1) process, m².
    pub sigma2_stoch: f64,
    /// Exponential smoothing factor applied to the AR(1) process.
    pub beta_stoch: f64,
    /// Speed used to scale the stochastic offset, m/s.
    pub v_max: f64,
    /// Sinusoid amplitude, m.
    pub a_sin: f64,
    /// Sinusoid period, steps.
    pub t_sin: f64,
    /// Per-coordinate noise variance of the periodic behavior, m².
    pub sigma2_sin: f64,
    /// Simulation step, s.
    pub dt: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            phi_stoch: 0.9,
            sigma2_stoch: 225.0,
            beta_stoch: 0.2,
            v_max: 5.0,
            a_sin: 15.0,
            t_sin: 20.0,
            sigma2_sin: 16.0,
            dt: 5.0,
        }
    }
}

impl DynamicsParams {
    /// Same parameters with every noise variance set to zero.
    pub fn noiseless(self) -> Self {
        DynamicsParams {
            sigma2_stoch: 0.0,
            sigma2_sin: 0.0,
            ..self
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    // negated comparisons also reject NaN
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..1.0).contains(&self.phi_stoch) {
            return bad("phi_stoch must lie in [0, 1)");
        }
        if !(self.beta_stoch > 0.0 && self.beta_stoch <= 1.0) {
            return bad("beta_stoch must lie in (0, 1]");
        }
        if !(self.sigma2_stoch >= 0.0 && self.sigma2_sin >= 0.0) {
            return bad("noise variances must be non-negative");
        }
        if !(self.t_sin >= 1.0) {
            return bad("t_sin must be at least one step");
        }
        if !(self.v_max > 0.0 && self.dt > 0.0) {
            return bad("v_max and dt must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    /// Linear-part position at the obstacle's step 0, m.
    pub initial_position: Vec2,
    /// Constant linear velocity, m/s.
    pub velocity: Vec2,
    pub behavior: BehaviorKind,
    pub noise_seed: u64,
    pub passing_rule: PassingRule,
}

impl ObstacleSpec {
    pub fn validate(&self, v_x_max: f64, v_y_max: f64) -> Result<()> {
        if !self.velocity.is_finite() || !self.initial_position.is_finite() {
            return Err(Error::Config("obstacle state must be finite".into()));
        }
        if self.velocity.x.abs() > v_x_max || self.velocity.y.abs() > v_y_max {
            return Err(Error::Config(format!(
                "obstacle velocity {:?} exceeds bounds ({v_x_max}, {v_y_max})",
                self.velocity
            )));
        }
        Ok(())
    }
}

/// AR(1) value and its exponentially smoothed companion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StochasticState {
    pub ar_value: Vec2,
    pub smoothed: Vec2,
}

pub fn linear_position(spec: &ObstacleSpec, t_step: usize, dt: f64) -> Vec2 {
    spec.initial_position + spec.velocity * (t_step as f64 * dt)
}

fn gaussian_pair(rng: &mut SimRng, variance: f64) -> Vec2 {
    if variance == 0.0 {
        return Vec2::ZERO;
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite non-negative std");
    Vec2::new(normal.sample(rng), normal.sample(rng))
}

/// One AR(1) + smoothing step with an explicit innovation `noise`.
pub fn stochastic_offset_step_with(
    state: StochasticState,
    params: &DynamicsParams,
    speed: f64,
    noise: Vec2,
) -> (StochasticState, Vec2) {
    let ar_value = state.ar_value * params.phi_stoch + noise;
    let smoothed = ar_value * params.beta_stoch + state.smoothed * (1.0 - params.beta_stoch);
    let offset = smoothed * (speed / params.v_max);
    (StochasticState { ar_value, smoothed }, offset)
}

pub fn stochastic_offset_step(
    state: StochasticState,
    params: &DynamicsParams,
    speed: f64,
    rng: &mut SimRng,
) -> (StochasticState, Vec2) {
    let noise = gaussian_pair(rng, params.sigma2_stoch);
    stochastic_offset_step_with(state, params, speed, noise)
}

/// Periodic offset without the noise term. The direction `(vy, -vx)` is
/// deliberately left unnormalized, so the amplitude grows with speed.
pub fn periodic_mean_offset(velocity: Vec2, t_step: usize, params: &DynamicsParams) -> Vec2 {
    let phase = 2.0 * PI * t_step as f64 / params.t_sin;
    Vec2::new(velocity.y, -velocity.x) * (params.a_sin * phase.sin())
}

pub fn periodic_offset(velocity: Vec2, t_step: usize, params: &DynamicsParams, rng: &mut SimRng) -> Vec2 {
    periodic_mean_offset(velocity, t_step, params) + gaussian_pair(rng, params.sigma2_sin)
}

pub fn obstacle_position(spec: &ObstacleSpec, t_step: usize, dt: f64, offset: Vec2) -> Vec2 {
    linear_position(spec, t_step, dt) + offset
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BehaviorState {
    Linear,
    Stochastic(StochasticState),
    Periodic,
}

/// A single obstacle advanced step by step from its own noise stream.
#[derive(Debug, Clone)]
pub struct ObstacleTrack {
    spec: ObstacleSpec,
    params: DynamicsParams,
    step: usize,
    state: BehaviorState,
    offset: Vec2,
    rng: SimRng,
}

impl ObstacleTrack {
    pub fn new(spec: ObstacleSpec, params: DynamicsParams) -> Self {
        use rand::SeedableRng;
        let mut rng = SimRng::seed_from_u64(spec.noise_seed);
        let (state, offset) = match spec.behavior {
            BehaviorKind::Linear => (BehaviorState::Linear, Vec2::ZERO),
            BehaviorKind::Stochastic => (BehaviorState::Stochastic(StochasticState::default()), Vec2::ZERO),
            BehaviorKind::Periodic => (
                BehaviorState::Periodic,
                periodic_offset(spec.velocity, 0, &params, &mut rng),
            ),
        };
        ObstacleTrack {
            spec,
            params,
            step: 0,
            state,
            offset,
            rng,
        }
    }

    pub fn spec(&self) -> &ObstacleSpec {
        &self.spec
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn offset(&self) -> Vec2 {
        self.offset
    }

    pub fn linear_position(&self) -> Vec2 {
        linear_position(&self.spec, self.step, self.params.dt)
    }

    pub fn position(&self) -> Vec2 {
        obstacle_position(&self.spec, self.step, self.params.dt, self.offset)
    }

    pub fn advance(&mut self) {
        self.step += 1;
        let speed = self.spec.velocity.norm();
        self.offset = match &mut self.state {
            BehaviorState::Linear => Vec2::ZERO,
            BehaviorState::Stochastic(s) => {
                let (next, offset) = stochastic_offset_step(*s, &self.params, speed, &mut self.rng);
                *s = next;
                offset
            }
            BehaviorState::Periodic => periodic_offset(self.spec.velocity, self.step, &self.params, &mut self.rng),
        };
    }
}

/// Positions at steps `0..len`.
pub fn simulate_trajectory(spec: &ObstacleSpec, params: &DynamicsParams, len: usize) -> Vec<Vec2> {
    let mut track = ObstacleTrack::new(*spec, *params);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        if i > 0 {
            track.advance();
        }
        out.push(track.position());
    }
    out
}

/// Samples a velocity uniformly from the box `[-vx, vx] x [-vy, vy]`.
pub fn sample_velocity<R: Rng>(rng: &mut R, v_x_max: f64, v_y_max: f64) -> Vec2 {
    Vec2::new(
        rng.random_range(-v_x_max..=v_x_max),
        rng.random_range(-v_y_max..=v_y_max),
    )
}

/// Writes `t_step, x, y` rows.
pub fn write_trajectory<W: Write>(mut out: W, positions: &[Vec2]) -> std::io::Result<()> {
    writeln!(out, "t_step,x,y")?;
    for (t, p) in positions.iter().enumerate() {
        writeln!(out, "{t},{},{}", p.x, p.y)?;
    }
    Ok(())
}
