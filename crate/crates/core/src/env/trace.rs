//! Per-step episode log, one CSV row per step.
//!
//! Columns: `step, agent_x, agent_y, agent_vx, agent_vy, agent_ay, action,
//! reward, violations`, then for every obstacle slot `i`:
//! `o{i}_rule, o{i}_gen, o{i}_x, o{i}_y, o{i}_d_cpa, o{i}_t_cpa`.

use std::path::Path;

use crate::dynamics::PassingRule;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::risk::{AgentState, CRMetrics};

use super::Environment;

const AGENT_COLUMNS: usize = 9;
const OBSTACLE_COLUMNS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSnapshot {
    pub rule: PassingRule,
    pub generation: u64,
    pub position: Vec2,
    pub cr: CRMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub agent: AgentState,
    /// Action that led into this step; zero on the reset row.
    pub action: f64,
    pub reward: f64,
    pub violations: usize,
    pub obstacles: Vec<ObstacleSnapshot>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    /// Appends the environment's current state.
    pub fn record(&mut self, env: &Environment, action: f64, reward: f64, violations: usize) {
        self.rows.push(TraceRow {
            step: env.step_index(),
            agent: *env.agent(),
            action,
            reward,
            violations,
            obstacles: env
                .obstacles()
                .iter()
                .map(|o| ObstacleSnapshot {
                    rule: o.rule,
                    generation: o.generation,
                    position: o.position(),
                    cr: o.cr,
                })
                .collect(),
        });
    }

    pub fn total_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.reward).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.rows.first().map_or(0, |r| r.obstacles.len());
        let mut header: Vec<String> = [
            "step",
            "agent_x",
            "agent_y",
            "agent_vx",
            "agent_vy",
            "agent_ay",
            "action",
            "reward",
            "violations",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for i in 0..n {
            for c in ["rule", "gen", "x", "y", "d_cpa", "t_cpa"] {
                header.push(format!("o{i}_{c}"));
            }
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.step.to_string(),
                r.agent.position.x.to_string(),
                r.agent.position.y.to_string(),
                r.agent.velocity.x.to_string(),
                r.agent.velocity.y.to_string(),
                r.agent.lateral_acceleration.to_string(),
                r.action.to_string(),
                r.reward.to_string(),
                r.violations.to_string(),
            ];
            for o in &r.obstacles {
                rec.push(o.rule.as_str().to_string());
                rec.push(o.generation.to_string());
                rec.push(o.position.x.to_string());
                rec.push(o.position.y.to_string());
                rec.push(o.cr.d_cpa.to_string());
                rec.push(o.cr.t_cpa.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let width = r.headers()?.len();
        if width < AGENT_COLUMNS || !(width - AGENT_COLUMNS).is_multiple_of(OBSTACLE_COLUMNS) {
            return Err(Error::Config(format!("{}: not an episode trace", path.display())));
        }
        let n = (width - AGENT_COLUMNS) / OBSTACLE_COLUMNS;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("{}: column {i}: {e}", path.display())))
            };
            let mut obstacles = Vec::with_capacity(n);
            for k in 0..n {
                let base = AGENT_COLUMNS + k * OBSTACLE_COLUMNS;
                let rule = match &rec[base] {
                    "right" => PassingRule::Right,
                    "left" => PassingRule::Left,
                    other => return Err(Error::Config(format!("unknown passing rule `{other}`"))),
                };
                obstacles.push(ObstacleSnapshot {
                    rule,
                    generation: num(base + 1)? as u64,
                    position: Vec2::new(num(base + 2)?, num(base + 3)?),
                    cr: CRMetrics {
                        d_cpa: num(base + 4)?,
                        t_cpa: num(base + 5)?,
                        age: 0,
                    },
                });
            }
            rows.push(TraceRow {
                step: num(0)? as usize,
                agent: AgentState {
                    position: Vec2::new(num(1)?, num(2)?),
                    velocity: Vec2::new(num(3)?, num(4)?),
                    lateral_acceleration: num(5)?,
                },
                action: num(6)?,
                reward: num(7)?,
                violations: num(8)? as usize,
                obstacles,
            });
        }
        Ok(EpisodeTrace { rows })
    }
}
