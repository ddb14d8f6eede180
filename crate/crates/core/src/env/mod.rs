//! Dynamic obstacle avoidance environment.
//!
//! The agent moves at constant longitudinal speed and controls its lateral
//! acceleration. Obstacles stream toward it in two equal blocks, one to be
//! passed on the right (smaller `y`) and one on the left; every pass on the
//! wrong side costs one unit of reward. Passed obstacles are recycled into
//! new ones placed around a hidden lateral reference path.

pub mod observation;
pub mod reference;
pub mod replace;
pub mod trace;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BehaviorKind, DynamicsParams, ObstacleSpec, ObstacleTrack, PassingRule};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::predictor::Forecaster;
use crate::risk::{collision_risk_batch, AgentState, CRMetrics, CpaConfig, CpaProfile};
use crate::rng::{derive_seed, rng_from, stream, SimRng};

use observation::{build_observation, observation_len, ObservationLayout, ObstacleView};
use reference::{reference_trajectory, ReferenceTrajectory};
use replace::{sample_placement, sample_ttc, select_for_replacement, ttc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    /// Positions plus collision-risk features.
    Sl,
    /// Positions only.
    Baseline,
}

impl ObservationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ObservationMode::Sl => "sl",
            ObservationMode::Baseline => "baseline",
        }
    }
}

impl fmt::Display for ObservationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObservationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sl" => Ok(ObservationMode::Sl),
            "baseline" => Ok(ObservationMode::Baseline),
            other => Err(Error::Config(format!("unknown observation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub n_obstacles: usize,
    /// Maximum lateral acceleration, m/s².
    pub a_y_max: f64,
    /// Upper bound of the agent's longitudinal speed, m/s; also the velocity scale.
    pub v_max: f64,
    /// Lower bound of the agent's longitudinal speed, m/s.
    pub v_min: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub p_scale: f64,
    pub d_cpa_scale: f64,
    pub t_cpa_scale: f64,
    pub dttc_max: f64,
    pub phi_traj: f64,
    pub sigma2_traj: f64,
    pub beta_traj: f64,
    pub mu_dy: f64,
    pub sigma2_dy: f64,
    pub dy_min: f64,
    pub v_x_max: f64,
    pub v_y_max: f64,
    /// Obstacle velocities closer than this to the agent's are redrawn, m/s.
    pub min_closing_speed: f64,
    /// Collision-risk features are recomputed every this many steps.
    pub cr_refresh_interval: usize,
    pub behavior: BehaviorKind,
    pub mode: ObservationMode,
    /// `dt` and `v_max` here are overridden by the fields above.
    pub dynamics: DynamicsParams,
    /// `dt` here is overridden by the field above.
    pub cpa: CpaConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            n_obstacles: 10,
            a_y_max: 0.01,
            v_max: 5.0,
            v_min: 1.0,
            dt: 5.0,
            n_steps: 500,
            p_scale: 3000.0,
            d_cpa_scale: 400.0,
            t_cpa_scale: 300.0,
            dttc_max: 300.0,
            phi_traj: 0.99,
            sigma2_traj: 800.0,
            beta_traj: 0.03,
            mu_dy: 100.0,
            sigma2_dy: 2500.0,
            dy_min: 40.0,
            v_x_max: 0.5,
            v_y_max: 0.5,
            min_closing_speed: 0.05,
            cr_refresh_interval: 10,
            behavior: BehaviorKind::Linear,
            mode: ObservationMode::Sl,
            dynamics: DynamicsParams::default(),
            cpa: CpaConfig::default(),
        }
    }
}

impl EnvConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    // negated comparisons also reject NaN
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_obstacles == 0 || !self.n_obstacles.is_multiple_of(2) {
            return bad("n_obstacles must be even and positive");
        }
        let positive = [
            self.a_y_max,
            self.v_max,
            self.v_min,
            self.dt,
            self.p_scale,
            self.d_cpa_scale,
            self.t_cpa_scale,
            self.dttc_max,
        ];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            return bad("accelerations, speeds, dt, scales and dttc_max must be positive");
        }
        if self.v_min > self.v_max {
            return bad("v_min exceeds v_max");
        }
        if self.n_steps == 0 || self.cr_refresh_interval == 0 {
            return bad("n_steps and cr_refresh_interval must be positive");
        }
        if !(self.sigma2_traj >= 0.0 && self.sigma2_dy >= 0.0 && self.dy_min >= 0.0) {
            return bad("variances and dy_min must be non-negative");
        }
        if !((0.0..=1.0).contains(&self.beta_traj) && self.phi_traj.is_finite()) {
            return bad("beta_traj must lie in [0, 1]");
        }
        if !(self.v_x_max >= 0.0 && self.v_y_max >= 0.0) {
            return bad("obstacle speed bounds must be non-negative");
        }
        if !(self.min_closing_speed > 0.0) {
            return bad("min_closing_speed must be positive");
        }
        // velocity resampling must be able to succeed for every agent speed
        if self.v_min - self.v_x_max < self.min_closing_speed && self.v_x_max <= self.min_closing_speed {
            return bad("obstacle longitudinal speeds cannot avoid matching the agent's");
        }
        self.effective_dynamics().validate()
    }

    pub fn effective_dynamics(&self) -> DynamicsParams {
        DynamicsParams {
            dt: self.dt,
            v_max: self.v_max,
            ..self.dynamics
        }
    }

    pub fn effective_cpa(&self) -> CpaConfig {
        CpaConfig {
            dt: self.dt,
            ..self.cpa
        }
    }

    pub fn observation_len(&self) -> usize {
        observation_len(self.n_obstacles, self.mode)
    }

    pub fn rule_of_slot(&self, slot: usize) -> PassingRule {
        if slot < self.n_obstacles / 2 {
            PassingRule::Right
        } else {
            PassingRule::Left
        }
    }
}

#[derive(Debug, Clone)]
pub struct Obstacle {
    pub id: usize,
    pub rule: PassingRule,
    /// How many times this slot has been recycled.
    pub generation: u64,
    track: ObstacleTrack,
    /// Last observed positions, oldest first.
    history: Vec<Vec2>,
    pub cr: CRMetrics,
    passed: bool,
    cr_pending: bool,
}

impl Obstacle {
    pub fn position(&self) -> Vec2 {
        self.track.position()
    }

    pub fn linear_position(&self) -> Vec2 {
        self.track.linear_position()
    }

    pub fn velocity(&self) -> Vec2 {
        self.track.spec().velocity
    }

    pub fn spec(&self) -> &ObstacleSpec {
        self.track.spec()
    }

    pub fn history(&self) -> &[Vec2] {
        &self.history
    }

    pub fn passed(&self) -> bool {
        self.passed
    }

    fn view(&self) -> ObstacleView {
        ObstacleView {
            id: self.id,
            rule: self.rule,
            position: self.position(),
            cr: self.cr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassingEvent {
    pub obstacle_id: usize,
    pub step: usize,
    pub side: PassingRule,
    pub violation: bool,
}

/// Side of the obstacle the agent is on; facing `+x`, right is smaller `y`.
pub fn passing_side(agent_y: f64, obstacle_y: f64) -> PassingRule {
    if agent_y < obstacle_y {
        PassingRule::Right
    } else {
        PassingRule::Left
    }
}

/// Crossing check for one obstacle between two steps.
pub fn detect_passing(
    obstacle_id: usize,
    rule: PassingRule,
    step: usize,
    rel_x_before: f64,
    rel_x_after: f64,
    agent_y: f64,
    obstacle_y: f64,
) -> Option<PassingEvent> {
    if rel_x_before > 0.0 && rel_x_after <= 0.0 {
        let side = passing_side(agent_y, obstacle_y);
        Some(PassingEvent {
            obstacle_id,
            step,
            side,
            violation: side != rule,
        })
    } else {
        None
    }
}

pub fn reward_for(events: &[PassingEvent]) -> f64 {
    -(events.iter().filter(|e| e.violation).count() as f64)
}

/// `ÿ = a_max·a`, `ẏ' = ẏ + ÿ·dt`, `p' = p + (ṗ + ṗ')/2·dt`.
pub fn agent_kinematics(agent: &AgentState, action: f64, a_y_max: f64, dt: f64) -> AgentState {
    let ay = a_y_max * action;
    let velocity = Vec2::new(agent.velocity.x, agent.velocity.y + ay * dt);
    AgentState {
        position: agent.position + (agent.velocity + velocity) * (0.5 * dt),
        velocity,
        lateral_acceleration: ay,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    pub events: Vec<PassingEvent>,
    /// The requested action was outside `[-1, 1]` and got clipped.
    pub clipped: bool,
    /// Slots recycled at the end of this step.
    pub replaced: Vec<usize>,
    /// Collision-risk features were recomputed for every obstacle.
    pub refreshed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub struct Environment {
    config: EnvConfig,
    dynamics: DynamicsParams,
    cpa: CpaConfig,
    forecaster: Option<Arc<dyn Forecaster>>,
    seed: u64,
    step: usize,
    agent: AgentState,
    reference: ReferenceTrajectory,
    obstacles: Vec<Obstacle>,
    placement_rng: SimRng,
    layout: ObservationLayout,
    observation: Vec<f64>,
    record_profiles: bool,
    profiles: Vec<(usize, CpaProfile)>,
}

impl Environment {
    /// `forecaster` supplies the trajectory predictions behind the
    /// collision-risk features and is required in SL mode.
    pub fn new(config: EnvConfig, forecaster: Option<Arc<dyn Forecaster>>) -> Result<Self> {
        config.validate()?;
        if config.mode == ObservationMode::Sl {
            let f = forecaster
                .as_ref()
                .ok_or_else(|| Error::Config("SL mode needs a trajectory forecaster".into()))?;
            if let Some(b) = f.behavior() {
                if b != config.behavior {
                    return Err(Error::BehaviorMismatch {
                        checkpoint: b.to_string(),
                        requested: config.behavior.to_string(),
                    });
                }
            }
        }
        let dynamics = config.effective_dynamics();
        let cpa = config.effective_cpa();
        let mut env = Environment {
            dynamics,
            cpa,
            forecaster,
            seed: 0,
            step: 0,
            agent: AgentState::default(),
            reference: ReferenceTrajectory {
                raw: Vec::new(),
                y: vec![0.0],
            },
            obstacles: Vec::new(),
            placement_rng: rng_from(0, &[]),
            layout: ObservationLayout::default(),
            observation: Vec::new(),
            record_profiles: false,
            profiles: Vec::new(),
            config,
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.n_steps
    }

    pub fn agent(&self) -> &AgentState {
        &self.agent
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn reference(&self) -> &ReferenceTrajectory {
        &self.reference
    }

    pub fn observation(&self) -> &[f64] {
        &self.observation
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn observation_len(&self) -> usize {
        self.config.observation_len()
    }

    /// Keep the full distance profiles of every collision-risk computation
    /// made during the last reset or step.
    pub fn set_record_profiles(&mut self, on: bool) {
        self.record_profiles = on;
    }

    /// `(obstacle id, profile)` pairs from the last reset or step.
    pub fn profiles(&self) -> &[(usize, CpaProfile)] {
        &self.profiles
    }

    /// Time-to-collision of an obstacle from its linear motion, s.
    pub fn ttc_of(&self, obstacle: &Obstacle) -> f64 {
        ttc(
            obstacle.linear_position().x,
            self.agent.position.x,
            self.agent.velocity.x,
            obstacle.velocity().x,
        )
    }

    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.seed = seed;
        self.step = 0;
        self.profiles.clear();
        let mut init = rng_from(seed, &[stream::AGENT_INIT]);
        let vx = init.random_range(self.config.v_min..=self.config.v_max);
        self.agent = AgentState {
            position: Vec2::ZERO,
            velocity: Vec2::new(vx, 0.0),
            lateral_acceleration: 0.0,
        };
        self.reference = reference_trajectory(seed, &self.config);
        self.placement_rng = rng_from(seed, &[stream::PLACEMENT]);

        let n = self.config.n_obstacles;
        self.obstacles = Vec::with_capacity(n);
        let mut block_max = 0.0;
        for slot in 0..n {
            let rule = self.config.rule_of_slot(slot);
            let t = if slot == 0 || slot == n / 2 {
                self.placement_rng.random_range(0.0..self.config.dttc_max)
            } else {
                sample_ttc(block_max, self.config.dttc_max, &mut self.placement_rng)
            };
            block_max = t;
            let o = self.spawn(slot, rule, 0, t);
            self.obstacles.push(o);
        }
        self.update_collision_risk(true)?;
        self.check_invariants()?;
        self.rebuild_observation();
        Ok(self.observation.clone())
    }

    pub fn step(&mut self, action: f64) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::Config(format!(
                "episode finished after {} steps; call reset",
                self.step
            )));
        }
        if !action.is_finite() {
            return Err(Error::Config(format!("action must be finite, got {action}")));
        }
        let clipped = !(-1.0..=1.0).contains(&action);
        if clipped {
            log::debug!("step {}: action {action} clipped to [-1, 1]", self.step);
        }
        let action = action.clamp(-1.0, 1.0);

        let rel_before: Vec<f64> = self
            .obstacles
            .iter()
            .map(|o| o.position().x - self.agent.position.x)
            .collect();
        self.agent = agent_kinematics(&self.agent, action, self.config.a_y_max, self.config.dt);
        let h = self.history_len();
        for o in &mut self.obstacles {
            o.track.advance();
            push_history(&mut o.history, o.track.position(), h);
        }
        self.step += 1;

        let mut events = Vec::new();
        for (o, before) in self.obstacles.iter_mut().zip(rel_before) {
            if o.passed {
                continue;
            }
            let p = o.position();
            if let Some(e) = detect_passing(
                o.id,
                o.rule,
                self.step,
                before,
                p.x - self.agent.position.x,
                self.agent.position.y,
                p.y,
            ) {
                o.passed = true;
                events.push(e);
            }
        }
        let reward = reward_for(&events);

        let replaced = self.replace_passed();
        let refreshed = self.step.is_multiple_of(self.config.cr_refresh_interval);
        self.update_collision_risk(refreshed)?;
        self.check_invariants()?;
        self.rebuild_observation();

        Ok(StepResult {
            observation: self.observation.clone(),
            reward,
            done: self.is_done(),
            info: StepInfo {
                events,
                clipped,
                replaced,
                refreshed: refreshed && self.config.mode == ObservationMode::Sl,
            },
        })
    }

    fn history_len(&self) -> usize {
        self.forecaster
            .as_ref()
            .map(|f| f.window_len())
            .unwrap_or(crate::predictor::DEFAULT_WINDOW)
    }

    /// Creates the obstacle for `slot` whose linear motion reaches the
    /// agent's longitudinal position in `ttc_s` seconds. Its track starts
    /// `h - 1` steps in the past so a full history window exists at once.
    fn spawn(&mut self, slot: usize, rule: PassingRule, generation: u64, ttc_s: f64) -> Obstacle {
        let placement = sample_placement(
            rule,
            ttc_s,
            &self.agent,
            self.step,
            &self.config,
            &self.reference,
            &mut self.placement_rng,
        );
        let h = self.history_len();
        let lead = (h - 1) as f64 * self.config.dt;
        let spec = ObstacleSpec {
            initial_position: placement.position - placement.velocity * lead,
            velocity: placement.velocity,
            behavior: self.config.behavior,
            noise_seed: derive_seed(self.seed, &[stream::OBSTACLE, slot as u64, generation]),
            passing_rule: rule,
        };
        let mut track = ObstacleTrack::new(spec, self.dynamics);
        let mut history = Vec::with_capacity(h);
        history.push(track.position());
        for _ in 1..h {
            track.advance();
            history.push(track.position());
        }
        let passed = track.position().x - self.agent.position.x <= 0.0;
        Obstacle {
            id: slot,
            rule,
            generation,
            track,
            history,
            cr: CRMetrics::default(),
            passed,
            cr_pending: true,
        }
    }

    fn replace_passed(&mut self) -> Vec<usize> {
        let mut replaced = Vec::new();
        for rule in [PassingRule::Right, PassingRule::Left] {
            let block: Vec<(usize, f64)> = self
                .obstacles
                .iter()
                .filter(|o| o.rule == rule)
                .map(|o| (o.id, self.ttc_of(o)))
                .collect();
            if let Some(slot) = select_for_replacement(&block) {
                let block_max = block.iter().map(|(_, t)| *t).fold(f64::NEG_INFINITY, f64::max);
                let t = sample_ttc(block_max, self.config.dttc_max, &mut self.placement_rng);
                let generation = self.obstacles[slot].generation + 1;
                let o = self.spawn(slot, rule, generation, t);
                self.obstacles[slot] = o;
                replaced.push(slot);
            }
        }
        replaced
    }

    /// Recomputes collision risk for every obstacle when `refresh` is set,
    /// otherwise only for newly spawned ones; the rest age by one step.
    fn update_collision_risk(&mut self, refresh: bool) -> Result<()> {
        self.profiles.clear();
        if self.config.mode != ObservationMode::Sl {
            return Ok(());
        }
        let forecaster = self
            .forecaster
            .clone()
            .expect("SL mode is only constructed with a forecaster");
        let targets: Vec<usize> = (0..self.obstacles.len())
            .filter(|&i| refresh || self.obstacles[i].cr_pending)
            .collect();
        for o in &mut self.obstacles {
            if !(refresh || o.cr_pending) {
                o.cr.age += 1;
            }
        }
        if targets.is_empty() {
            return Ok(());
        }
        let histories: Vec<&[Vec2]> = targets.iter().map(|&i| self.obstacles[i].history()).collect();
        let profiles = collision_risk_batch(forecaster.as_ref(), &histories, &self.agent, &self.cpa)?;
        for (&i, profile) in targets.iter().zip(profiles) {
            let o = &mut self.obstacles[i];
            o.cr = profile.metrics;
            o.cr_pending = false;
            if self.record_profiles {
                self.profiles.push((o.id, profile));
            }
        }
        Ok(())
    }

    fn check_invariants(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::Invariant {
                step: self.step,
                message,
            })
        };
        let n = self.config.n_obstacles;
        if self.obstacles.len() != n {
            return fail(format!("{} obstacles, expected {n}", self.obstacles.len()));
        }
        let right = self.obstacles.iter().filter(|o| o.rule == PassingRule::Right).count();
        if right != n / 2 {
            return fail(format!("{right} right-rule obstacles, expected {}", n / 2));
        }
        if !(self.agent.position.is_finite() && self.agent.velocity.is_finite()) {
            return fail("agent state is not finite".into());
        }
        if let Some(o) = self.obstacles.iter().find(|o| !o.position().is_finite()) {
            return fail(format!("obstacle {} position is not finite", o.id));
        }
        Ok(())
    }

    fn rebuild_observation(&mut self) {
        let views: Vec<ObstacleView> = self.obstacles.iter().map(Obstacle::view).collect();
        let (obs, layout) = build_observation(&self.config, &self.agent, &views);
        self.observation = obs;
        self.layout = layout;
    }
}

fn push_history(history: &mut Vec<Vec2>, p: Vec2, h: usize) {
    if history.len() == h {
        history.remove(0);
    }
    history.push(p);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::LinearForecaster;

    fn env(mode: ObservationMode) -> Environment {
        let config = EnvConfig {
            mode,
            ..Default::default()
        };
        Environment::new(config, Some(Arc::new(LinearForecaster::default()))).unwrap()
    }

    #[test]
    fn kinematics_example() {
        let a = AgentState {
            velocity: Vec2::new(2.0, 0.0),
            ..Default::default()
        };
        let b = agent_kinematics(&a, 1.0, 0.01, 5.0);
        assert_eq!(b.lateral_acceleration, 0.01);
        assert!((b.velocity.y - 0.05).abs() < 1e-15);
        assert!((b.position.y - 0.125).abs() < 1e-15);
        assert_eq!(b.position.x, 10.0);
        let c = agent_kinematics(&a, 0.0, 0.01, 5.0);
        assert_eq!(c.position.y, 0.0);
    }

    #[test]
    fn passing_examples() {
        let ok = detect_passing(0, PassingRule::Right, 3, 5.0, -5.0, -10.0, 0.0).unwrap();
        assert_eq!((ok.side, ok.violation), (PassingRule::Right, false));
        let bad = detect_passing(0, PassingRule::Right, 3, 5.0, -5.0, 10.0, 0.0).unwrap();
        assert!(bad.violation);
        assert_eq!(reward_for(&[ok]), 0.0);
        assert_eq!(reward_for(&[bad]), -1.0);
        assert_eq!(reward_for(&[bad, bad]), -2.0);
        assert!(detect_passing(0, PassingRule::Left, 3, -1.0, -5.0, 0.0, 1.0).is_none());
    }

    #[test]
    fn reset_state() {
        let mut e = env(ObservationMode::Sl);
        let o1 = e.reset(17).unwrap();
        assert_eq!(o1, e.reset(17).unwrap());
        assert_eq!(o1.len(), 43);
        assert_eq!(e.agent().velocity.y, 0.0);
        assert!((1.0..=5.0).contains(&e.agent().velocity.x));
        assert_eq!(e.obstacles().len(), 10);
        for o in e.obstacles() {
            assert!(e.ttc_of(o) > 0.0);
            assert_eq!(o.history().len(), 10);
            assert_eq!(o.cr.age, 0);
        }
        let mut b = env(ObservationMode::Baseline);
        assert_eq!(b.reset(17).unwrap().len(), 23);
    }

    #[test]
    fn episode_runs_to_limit_with_refresh_contract() {
        let mut e = env(ObservationMode::Sl);
        e.reset(5).unwrap();
        let mut total = 0.0;
        let mut events = 0;
        let mut replacements = 0;
        for k in 1..=500 {
            let r = e.step(((k as f64) * 0.1).sin()).unwrap();
            total += r.reward;
            events += r.info.events.len();
            replacements += r.info.replaced.len();
            assert_eq!(r.done, k == 500);
            assert_eq!(r.info.refreshed, k % 10 == 0);
            for o in e.obstacles() {
                assert!(o.cr.age <= 9);
                if r.info.refreshed {
                    assert_eq!(o.cr.age, 0);
                }
            }
        }
        assert!(events > 0 && replacements > 0);
        assert!(total <= 0.0 && total >= -(events as f64));
        assert!(e.step(0.0).is_err());
    }

    #[test]
    fn clipping_and_rejection() {
        let mut e = env(ObservationMode::Baseline);
        e.reset(1).unwrap();
        let r = e.step(3.0).unwrap();
        assert!(r.info.clipped);
        assert_eq!(e.agent().lateral_acceleration, 0.01);
        assert!(e.step(f64::NAN).is_err());
    }

    #[test]
    fn sl_mode_requires_matching_forecaster() {
        let cfg = EnvConfig::default();
        assert!(Environment::new(cfg.clone(), None).is_err());
        let model = crate::predictor::PredictorModel::new(
            BehaviorKind::Periodic,
            10,
            10.0,
            crate::predictor::PredictorNet::new(4, 0),
        );
        let err = Environment::new(cfg, Some(Arc::new(model))).err().unwrap();
        assert!(matches!(err, Error::BehaviorMismatch { .. }));
    }
}
