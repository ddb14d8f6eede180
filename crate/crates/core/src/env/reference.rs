//! Hidden lateral reference path that replaced obstacles are placed around.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EnvConfig;
use crate::rng::{rng_from, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    /// Raw AR(1) series `B_t`.
    pub raw: Vec<f64>,
    /// Smoothed lateral positions `y_traj`, m.
    pub y: Vec<f64>,
}

impl ReferenceTrajectory {
    /// Lateral reference at `step`, clamped to the episode.
    pub fn at(&self, step: i64) -> f64 {
        let last = self.y.len().saturating_sub(1) as i64;
        self.y[step.clamp(0, last) as usize]
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `B_{t+1} = φ B_t + u_t` from `B_0 = 0`, then `y_0 = B_0` and
/// `y_t = β B_t + (1 - β) y_{t-1}`.
pub fn reference_trajectory(seed: u64, config: &EnvConfig) -> ReferenceTrajectory {
    let mut rng = rng_from(seed, &[stream::REFERENCE]);
    let normal = Normal::new(0.0, config.sigma2_traj.sqrt()).expect("non-negative variance");
    let n = config.n_steps.max(1);
    let mut raw = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    raw.push(0.0);
    y.push(0.0);
    for t in 1..n {
        let b = config.phi_traj * raw[t - 1] + normal.sample(&mut rng);
        raw.push(b);
        y.push(config.beta_traj * b + (1.0 - config.beta_traj) * y[t - 1]);
    }
    ReferenceTrajectory { raw, y }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_is_flat() {
        let cfg = EnvConfig {
            sigma2_traj: 0.0,
            ..Default::default()
        };
        let r = reference_trajectory(4, &cfg);
        assert_eq!(r.len(), 500);
        assert!(r.y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_smoothing_returns_raw_series() {
        let cfg = EnvConfig {
            beta_traj: 1.0,
            ..Default::default()
        };
        let r = reference_trajectory(4, &cfg);
        assert_eq!(r.raw, r.y);
    }

    #[test]
    fn seeded_and_clamped() {
        let cfg = EnvConfig::default();
        let a = reference_trajectory(11, &cfg);
        assert_eq!(a, reference_trajectory(11, &cfg));
        assert_ne!(a, reference_trajectory(12, &cfg));
        assert_eq!(a.at(-5), a.y[0]);
        assert_eq!(a.at(10_000), a.y[499]);
    }
}
