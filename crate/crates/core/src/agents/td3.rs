//! Recurrent TD3: deterministic tanh actor, twin critics, clipped target
//! policy smoothing and delayed actor/target updates.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::history::History;
use super::nets::{critic_input, critic_loss_and_grad, RecurrentNet};
use super::replay::Batch;
use super::{ensure_finite, single_input, AlgoConfig, UpdateStats};
use crate::error::Result;
use crate::nn::{Adam, Float, Params};
use crate::rng::{rng_from, stream};

/// `y = r + γ (1 - done) min(q1, q2)`.
pub fn twin_min_target<F: Float>(reward: F, done: F, gamma: F, q1: F, q2: F) -> F {
    reward + gamma * (F::one() - done) * q1.min(q2)
}

pub fn clip_noise(noise: f64, clip: f64) -> f64 {
    noise.clamp(-clip, clip)
}

/// Exploration action: policy output plus noise, kept inside `[-1, 1]`.
pub fn noisy_action(action: f64, noise: f64) -> f64 {
    (action + noise).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Td3 {
    pub config: AlgoConfig,
    pub actor: RecurrentNet<f32>,
    pub actor_target: RecurrentNet<f32>,
    pub critics: [RecurrentNet<f32>; 2],
    pub critic_targets: [RecurrentNet<f32>; 2],
    actor_opt: Adam<f32>,
    critic_opts: [Adam<f32>; 2],
    updates: u64,
}

impl Td3 {
    pub fn new(obs_dim: usize, config: AlgoConfig, seed: u64) -> Self {
        let mut rng = rng_from(seed, &[stream::NETWORK_INIT]);
        let w = config.hidden_units;
        let actor = RecurrentNet::new(obs_dim, obs_dim, w, 1, &mut rng);
        let critics = [
            RecurrentNet::new(obs_dim, obs_dim + 1, w, 1, &mut rng),
            RecurrentNet::new(obs_dim, obs_dim + 1, w, 1, &mut rng),
        ];
        Td3 {
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor,
            critics,
            actor_opt: Adam::new(config.actor_lr),
            critic_opts: [Adam::new(config.critic_lr), Adam::new(config.critic_lr)],
            updates: 0,
            config,
        }
    }

    /// Update calls so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn all_finite(&self) -> bool {
        self.actor.all_finite() && self.critics.iter().all(|c| c.all_finite())
    }

    pub fn act<R: Rng>(&self, history: &History, obs: &[f32], explore: bool, rng: &mut R) -> f64 {
        let (hist, o) = single_input(history, obs);
        let a = (self.actor.predict(hist.view(), o.view())[(0, 0)] as f64).tanh();
        if explore && self.config.exploration_noise > 0.0 {
            let n = Normal::new(0.0, self.config.exploration_noise).expect("positive std");
            noisy_action(a, n.sample(rng))
        } else {
            a
        }
    }

    /// Critic regression targets for a batch, with the given raw target-noise draws.
    pub fn targets(&self, batch: &Batch<f32>, noise: &[f64]) -> Vec<f32> {
        let mut next_action = self.actor_target.predict(batch.next_hist.view(), batch.next_obs.view());
        for (a, n) in next_action.iter_mut().zip(noise) {
            let smoothed = (*a as f64).tanh() + clip_noise(*n, self.config.noise_clip);
            *a = smoothed.clamp(-1.0, 1.0) as f32;
        }
        let input = critic_input(batch.next_obs.view(), next_action.view());
        let q1 = self.critic_targets[0].predict(batch.next_hist.view(), input.view());
        let q2 = self.critic_targets[1].predict(batch.next_hist.view(), input.view());
        let gamma = self.config.gamma as f32;
        (0..batch.len())
            .map(|i| twin_min_target(batch.reward[i], batch.done[i], gamma, q1[(i, 0)], q2[(i, 0)]))
            .collect()
    }

    pub fn update<R: Rng>(&mut self, batch: &Batch<f32>, rng: &mut R) -> Result<UpdateStats> {
        let noise: Vec<f64> = if self.config.target_noise > 0.0 {
            let n = Normal::new(0.0, self.config.target_noise).expect("positive std");
            (0..batch.len()).map(|_| n.sample(rng)).collect()
        } else {
            vec![0.0; batch.len()]
        };
        let y = self.targets(batch, &noise);

        let mut critic_loss = 0.0;
        for k in 0..2 {
            let (loss, grad) = critic_loss_and_grad(
                &self.critics[k],
                batch.hist.view(),
                batch.obs.view(),
                batch.action.view(),
                &y,
            );
            ensure_finite("td3 critic", loss as f64)?;
            self.critic_opts[k].step(&mut self.critics[k], &grad);
            critic_loss += loss as f64 / 2.0;
        }

        self.updates += 1;
        let mut stats = UpdateStats {
            critic_loss,
            ..Default::default()
        };
        if self.updates.is_multiple_of(self.config.policy_delay) {
            let actor_loss = self.actor_step(batch);
            ensure_finite("td3 actor", actor_loss)?;
            stats.actor_loss = Some(actor_loss);
            let tau = self.config.tau as f32;
            self.actor_target.soft_update_from(&self.actor, tau);
            for k in 0..2 {
                self.critic_targets[k].soft_update_from(&self.critics[k], tau);
            }
        }
        Ok(stats)
    }

    /// One gradient step on `-mean Q1(h, o, μ(h, o))`; returns the loss.
    fn actor_step(&mut self, batch: &Batch<f32>) -> f64 {
        let b = batch.len();
        let (pre, cache) = self.actor.forward(batch.hist.view(), batch.obs.view());
        let action = pre.mapv(f32::tanh);
        let input = critic_input(batch.obs.view(), action.view());
        let critic = &self.critics[0];
        let (q, critic_cache) = critic.forward_frozen(batch.hist.view(), input.view());
        let dq = Array2::from_elem((b, 1), -1.0 / b as f32);
        let d_input = critic.input_gradient(&critic_cache, dq.view());
        let obs_dim = batch.obs.ncols();
        let mut d_pre = d_input.slice(ndarray::s![.., obs_dim..]).to_owned();
        d_pre.zip_mut_with(&action, |g, &a| *g *= 1.0 - a * a);
        let mut grad = self.actor.zeroed();
        self.actor.backward(&cache, d_pre.view(), &mut grad);
        self.actor_opt.step(&mut self.actor, &grad);
        -(q.sum_axis(Axis(0))[0] as f64) / b as f64
    }
}
