//! Obstacle placement: the time-to-collision bookkeeping that decides which
//! passed obstacle is recycled, and the sampler for its new linear motion.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::reference::ReferenceTrajectory;
use super::EnvConfig;
use crate::dynamics::{sample_velocity, PassingRule};
use crate::geom::Vec2;
use crate::risk::AgentState;

/// Longitudinal time-to-collision from linear motion, s. Negative once the
/// obstacle is behind the agent.
pub fn ttc(obstacle_x: f64, agent_x: f64, agent_vx: f64, obstacle_vx: f64) -> f64 {
    (obstacle_x - agent_x) / (agent_vx - obstacle_vx)
}

/// Of a block's `(slot, ttc)` pairs, the slot to recycle: the most negative
/// TTC, provided at least two TTCs are negative.
pub fn select_for_replacement(block: &[(usize, f64)]) -> Option<usize> {
    let negatives = block.iter().filter(|(_, t)| *t < 0.0).count();
    if negatives < 2 {
        return None;
    }
    block
        .iter()
        .filter(|(_, t)| *t < 0.0)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(slot, _)| *slot)
}

pub fn sample_ttc<R: Rng>(block_max: f64, dttc_max: f64, rng: &mut R) -> f64 {
    rng.random_range(block_max..block_max + dttc_max)
}

/// Position whose linear motion reaches the agent's longitudinal position after `ttc`.
pub fn longitudinal_position(agent_vx: f64, obstacle_vx: f64, ttc: f64, agent_x: f64) -> f64 {
    (agent_vx - obstacle_vx) * ttc + agent_x
}

pub fn clamp_lateral_offset(dy: f64, dy_min: f64) -> f64 {
    dy.max(dy_min)
}

pub fn lateral_position(rule: PassingRule, y_ref: f64, dy: f64, obstacle_vy: f64, ttc: f64) -> f64 {
    match rule {
        PassingRule::Right => y_ref + dy - obstacle_vy * ttc,
        PassingRule::Left => y_ref - dy - obstacle_vy * ttc,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub ttc: f64,
    pub velocity: Vec2,
    /// Linear-part position at the current step.
    pub position: Vec2,
    pub lateral_offset: f64,
}

/// Draws velocity, longitudinal and lateral position for an obstacle that
/// must reach the agent's longitudinal position in `ttc` seconds.
pub fn sample_placement<R: Rng>(
    rule: PassingRule,
    ttc: f64,
    agent: &AgentState,
    step: usize,
    config: &EnvConfig,
    reference: &ReferenceTrajectory,
    rng: &mut R,
) -> Placement {
    let velocity = loop {
        let v = sample_velocity(rng, config.v_x_max, config.v_y_max);
        if (agent.velocity.x - v.x).abs() >= config.min_closing_speed {
            break v;
        }
    };
    let x = longitudinal_position(agent.velocity.x, velocity.x, ttc, agent.position.x);
    let normal = Normal::new(config.mu_dy, config.sigma2_dy.sqrt()).expect("non-negative variance");
    let dy = clamp_lateral_offset(normal.sample(rng), config.dy_min);
    let crossing_step = step as i64 + (ttc / config.dt).round() as i64;
    let y = lateral_position(rule, reference.at(crossing_step), dy, velocity.y, ttc);
    Placement {
        ttc,
        velocity,
        position: Vec2::new(x, y),
        lateral_offset: dy,
    }
}
