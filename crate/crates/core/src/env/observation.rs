//! Flat observation vector.
//!
//! Layout: `[ÿ/a_max, ẋ/v_max, ẏ/v_max]` followed by one block of features
//! per obstacle, right-rule obstacles first, then left-rule obstacles. Each
//! block is sorted ascending by its key: `t_cpa` with collision-risk
//! features, Euclidean distance without.

use serde::{Deserialize, Serialize};

use super::{EnvConfig, ObservationMode};
use crate::dynamics::PassingRule;
use crate::geom::Vec2;
use crate::risk::{AgentState, CRMetrics};

pub const AGENT_FEATURES: usize = 3;

/// What the observation builder needs to know about one obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleView {
    pub id: usize,
    pub rule: PassingRule,
    pub position: Vec2,
    pub cr: CRMetrics,
}

/// Order in which obstacles appear in an observation, with their sort keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub ids: Vec<usize>,
    pub rules: Vec<PassingRule>,
    pub keys: Vec<f64>,
}

pub fn features_per_obstacle(mode: ObservationMode) -> usize {
    match mode {
        ObservationMode::Sl => 4,
        ObservationMode::Baseline => 2,
    }
}

pub fn observation_len(n_obstacles: usize, mode: ObservationMode) -> usize {
    AGENT_FEATURES + n_obstacles * features_per_obstacle(mode)
}

fn sort_key(mode: ObservationMode, agent: &AgentState, o: &ObstacleView) -> f64 {
    match mode {
        ObservationMode::Sl => o.cr.t_cpa,
        ObservationMode::Baseline => agent.position.distance(o.position),
    }
}

pub fn build_observation(
    config: &EnvConfig,
    agent: &AgentState,
    obstacles: &[ObstacleView],
) -> (Vec<f64>, ObservationLayout) {
    let mode = config.mode;
    let mut obs = Vec::with_capacity(observation_len(obstacles.len(), mode));
    obs.push(agent.lateral_acceleration / config.a_y_max);
    obs.push(agent.velocity.x / config.v_max);
    obs.push(agent.velocity.y / config.v_max);

    let mut layout = ObservationLayout::default();
    for rule in [PassingRule::Right, PassingRule::Left] {
        let mut block: Vec<(f64, &ObstacleView)> = obstacles
            .iter()
            .filter(|o| o.rule == rule)
            .map(|o| (sort_key(mode, agent, o), o))
            .collect();
        block.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
        for (key, o) in block {
            let rel = (agent.position - o.position) / config.p_scale;
            obs.push(rel.x);
            obs.push(rel.y);
            if mode == ObservationMode::Sl {
                obs.push(o.cr.d_cpa / config.d_cpa_scale);
                obs.push(o.cr.t_cpa / config.t_cpa_scale);
            }
            layout.ids.push(o.id);
            layout.rules.push(rule);
            layout.keys.push(key);
        }
    }
    (obs, layout)
}
