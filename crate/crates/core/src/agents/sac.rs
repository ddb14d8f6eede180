//! Recurrent SAC: tanh-squashed Gaussian actor, twin critics and automatic
//! temperature tuning on `log α`.

use std::f64::consts::{LN_2, PI};

use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::history::History;
use super::nets::{critic_input, critic_loss_and_grad, RecurrentNet};
use super::replay::Batch;
use super::{ensure_finite, single_input, AlgoConfig, UpdateStats};
use crate::error::Result;
use crate::nn::{Adam, Params};
use crate::rng::{rng_from, stream};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Log-density of `a = tanh(u)` where `u = μ + σ ε`.
pub fn squashed_log_prob(u: f64, eps: f64, log_std: f64) -> f64 {
    // log(1 - tanh(u)^2) in a form that stays finite for large |u|
    let log_det = 2.0 * (LN_2 - u - softplus(-2.0 * u));
    -0.5 * eps * eps - log_std - 0.5 * (2.0 * PI).ln() - log_det
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquashedSample {
    pub action: f64,
    pub log_prob: f64,
    pub std: f64,
    pub eps: f64,
    /// The raw log-std fell outside `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub clamped: bool,
}

pub fn squashed_sample(mu: f64, raw_log_std: f64, eps: f64) -> SquashedSample {
    let log_std = raw_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
    let std = log_std.exp();
    let u = mu + std * eps;
    SquashedSample {
        action: u.tanh(),
        log_prob: squashed_log_prob(u, eps, log_std),
        std,
        eps,
        clamped: log_std != raw_log_std,
    }
}

/// `y = r + γ (1 - done) (min(q1, q2) - α log π(a'|s'))`.
pub fn soft_target(reward: f64, done: f64, gamma: f64, q1: f64, q2: f64, alpha: f64, log_prob: f64) -> f64 {
    reward + gamma * (1.0 - done) * (q1.min(q2) - alpha * log_prob)
}

/// Gradient of `-mean(log α · (log π + H_target))` with respect to `log α`.
pub fn alpha_gradient(log_probs: &[f64], target_entropy: f64) -> f64 {
    -log_probs.iter().map(|lp| lp + target_entropy).sum::<f64>() / log_probs.len() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sac {
    pub config: AlgoConfig,
    /// Outputs `[μ, log σ]` of the pre-squash Gaussian.
    pub actor: RecurrentNet<f32>,
    pub critics: [RecurrentNet<f32>; 2],
    pub critic_targets: [RecurrentNet<f32>; 2],
    log_alpha: Array1<f32>,
    actor_opt: Adam<f32>,
    critic_opts: [Adam<f32>; 2],
    alpha_opt: Adam<f32>,
    updates: u64,
}

impl Sac {
    pub fn new(obs_dim: usize, config: AlgoConfig, seed: u64) -> Self {
        let mut rng = rng_from(seed, &[stream::NETWORK_INIT]);
        let w = config.hidden_units;
        let actor = RecurrentNet::new(obs_dim, obs_dim, w, 2, &mut rng);
        let critics = [
            RecurrentNet::new(obs_dim, obs_dim + 1, w, 1, &mut rng),
            RecurrentNet::new(obs_dim, obs_dim + 1, w, 1, &mut rng),
        ];
        Sac {
            critic_targets: critics.clone(),
            actor,
            critics,
            log_alpha: array![config.initial_alpha.ln() as f32],
            actor_opt: Adam::new(config.actor_lr),
            critic_opts: [Adam::new(config.critic_lr), Adam::new(config.critic_lr)],
            alpha_opt: Adam::new(config.alpha_lr),
            updates: 0,
            config,
        }
    }

    pub fn alpha(&self) -> f64 {
        (self.log_alpha[0] as f64).exp()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn all_finite(&self) -> bool {
        self.actor.all_finite() && self.critics.iter().all(|c| c.all_finite()) && self.log_alpha[0].is_finite()
    }

    /// Sampled action when exploring, `tanh(μ)` otherwise.
    pub fn act<R: Rng>(&self, history: &History, obs: &[f32], explore: bool, rng: &mut R) -> f64 {
        let (hist, o) = single_input(history, obs);
        let out = self.actor.predict(hist.view(), o.view());
        let mu = out[(0, 0)] as f64;
        if explore {
            squashed_sample(mu, out[(0, 1)] as f64, rng.sample(StandardNormal)).action
        } else {
            mu.tanh()
        }
    }

    fn sample_batch(out: &Array2<f32>, eps: &[f64]) -> Vec<SquashedSample> {
        eps.iter()
            .enumerate()
            .map(|(i, &e)| squashed_sample(out[(i, 0)] as f64, out[(i, 1)] as f64, e))
            .collect()
    }

    pub fn update<R: Rng>(&mut self, batch: &Batch<f32>, rng: &mut R) -> Result<UpdateStats> {
        let b = batch.len();
        let alpha = self.alpha();
        let gamma = self.config.gamma;

        let next_out = self.actor.predict(batch.next_hist.view(), batch.next_obs.view());
        let eps: Vec<f64> = (0..b).map(|_| StandardNormal.sample(rng)).collect();
        let next = Self::sample_batch(&next_out, &eps);
        let next_action = Array2::from_shape_fn((b, 1), |(i, _)| next[i].action as f32);
        let input = critic_input(batch.next_obs.view(), next_action.view());
        let q1 = self.critic_targets[0].predict(batch.next_hist.view(), input.view());
        let q2 = self.critic_targets[1].predict(batch.next_hist.view(), input.view());
        let y: Vec<f32> = (0..b)
            .map(|i| {
                soft_target(
                    batch.reward[i] as f64,
                    batch.done[i] as f64,
                    gamma,
                    q1[(i, 0)] as f64,
                    q2[(i, 0)] as f64,
                    alpha,
                    next[i].log_prob,
                ) as f32
            })
            .collect();

        let mut critic_loss = 0.0;
        for k in 0..2 {
            let (loss, grad) = critic_loss_and_grad(
                &self.critics[k],
                batch.hist.view(),
                batch.obs.view(),
                batch.action.view(),
                &y,
            );
            ensure_finite("sac critic", loss as f64)?;
            self.critic_opts[k].step(&mut self.critics[k], &grad);
            critic_loss += loss as f64 / 2.0;
        }

        let eps: Vec<f64> = (0..b).map(|_| StandardNormal.sample(rng)).collect();
        let (actor_loss, log_probs) = self.actor_step(batch, alpha, &eps);
        ensure_finite("sac actor", actor_loss)?;

        let g = alpha_gradient(&log_probs, self.config.target_entropy);
        self.alpha_opt.step(&mut self.log_alpha, &array![g as f32]);

        let tau = self.config.tau as f32;
        for k in 0..2 {
            self.critic_targets[k].soft_update_from(&self.critics[k], tau);
        }
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss,
            actor_loss: Some(actor_loss),
            alpha: Some(self.alpha()),
        })
    }

    /// One gradient step on `mean(α log π(a|s) - min(Q1, Q2)(s, a))` with
    /// reparameterized `a`; returns the loss and the sampled log-probabilities.
    fn actor_step(&mut self, batch: &Batch<f32>, alpha: f64, eps: &[f64]) -> (f64, Vec<f64>) {
        let b = batch.len();
        let (out, cache) = self.actor.forward(batch.hist.view(), batch.obs.view());
        let samples = Self::sample_batch(&out, eps);
        let action = Array2::from_shape_fn((b, 1), |(i, _)| samples[i].action as f32);
        let input = critic_input(batch.obs.view(), action.view());
        let (q1, c1) = self.critics[0].forward_frozen(batch.hist.view(), input.view());
        let (q2, c2) = self.critics[1].forward_frozen(batch.hist.view(), input.view());
        let first = Array2::from_shape_fn((b, 1), |(i, _)| if q1[(i, 0)] <= q2[(i, 0)] { 1.0f32 } else { 0.0 });
        let second = first.mapv(|m| 1.0 - m);
        let g1 = self.critics[0].input_gradient(&c1, first.view());
        let g2 = self.critics[1].input_gradient(&c2, second.view());
        let a_col = batch.obs.ncols();

        let n = b as f64;
        let mut loss = 0.0;
        let mut d_out = Array2::<f32>::zeros((b, 2));
        for (i, s) in samples.iter().enumerate() {
            let min_q = q1[(i, 0)].min(q2[(i, 0)]) as f64;
            loss += (alpha * s.log_prob - min_q) / n;
            let dq_da = (g1[(i, a_col)] + g2[(i, a_col)]) as f64;
            let a = s.action;
            let d_u = (alpha * 2.0 * a - dq_da * (1.0 - a * a)) / n;
            d_out[(i, 0)] = d_u as f32;
            if !s.clamped {
                d_out[(i, 1)] = (-alpha / n + d_u * s.std * s.eps) as f32;
            }
        }
        let mut grad = self.actor.zeroed();
        self.actor.backward(&cache, d_out.view(), &mut grad);
        self.actor_opt.step(&mut self.actor, &grad);
        (loss, samples.iter().map(|s| s.log_prob).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::td3::tests::batch;

    #[test]
    fn log_prob_matches_change_of_variables() {
        for &(u, eps, ls) in &[(0.3f64, 0.5f64, -0.2f64), (-2.0, -1.0, 0.4), (8.0, 1.5, -1.0)] {
            let a: f64 = u.tanh();
            let gauss = -0.5 * eps * eps - ls - 0.5 * (2.0 * PI).ln();
            let direct = gauss - (1.0 - a * a).ln();
            let lp = squashed_log_prob(u, eps, ls);
            if (1.0 - a * a) > 1e-12 {
                assert!((lp - direct).abs() < 1e-8, "{lp} vs {direct}");
            }
            assert!(lp.is_finite());
        }
        assert!(squashed_log_prob(40.0, 0.0, 0.0).is_finite());
    }

    #[test]
    fn log_prob_derivative_in_u_is_two_tanh() {
        let (u, eps, ls, h) = (0.7, 0.2, -0.3, 1e-6);
        // dlogπ/du at fixed ε is the change-of-variables term only
        let fd = (squashed_log_prob(u + h, eps, ls) - squashed_log_prob(u - h, eps, ls)) / (2.0 * h);
        assert!((fd - 2.0 * u.tanh()).abs() < 1e-6);
    }

    #[test]
    fn temperature_rules() {
        assert!((Sac::new(3, AlgoConfig::default(), 0).alpha() - 0.2).abs() < 1e-7);
        // entropy -mean(logπ) = -1.5 below target -1: gradient on log α negative, so α grows
        assert!(alpha_gradient(&[1.5, 1.5], -1.0) < 0.0);
        assert!(alpha_gradient(&[0.2, 0.4], -1.0) > 0.0);
        let y0 = soft_target(-1.0, 0.0, 0.99, 2.0, 1.0, 0.0, 5.0);
        assert!((y0 - (-0.01)).abs() < 1e-12);
        assert_eq!(soft_target(-1.0, 1.0, 0.99, 2.0, 1.0, 0.3, 5.0), -1.0);
    }

    #[test]
    fn updates_keep_alpha_positive_and_finite() {
        let cfg = AlgoConfig {
            hidden_units: 6,
            history_len: 3,
            alpha_lr: 0.05,
            ..Default::default()
        };
        let mut agent = Sac::new(3, cfg, 1);
        let b = batch(3, 4, 3);
        let mut rng = rng_from(3, &[]);
        let before = agent.actor.flatten();
        for _ in 0..200 {
            let stats = agent.update(&b, &mut rng).unwrap();
            assert!(stats.alpha.unwrap() > 0.0);
        }
        assert!(agent.all_finite());
        assert_ne!(before, agent.actor.flatten());
        let mut h = History::new(3, 3);
        h.push(&[1.0, 0.0, -1.0]);
        for _ in 0..50 {
            let a = agent.act(&h, &[0.5, 0.5, 0.5], true, &mut rng);
            assert!((-1.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        // the reparameterized actor objective as a function of (μ, log σ) for one sample
        let (alpha, eps) = (0.3, 0.7);
        let q = |a: f64| -((a - 0.2) * (a - 0.2)) * 3.0;
        let dq = |a: f64| -6.0 * (a - 0.2);
        let loss = |mu: f64, ls: f64| {
            let s = squashed_sample(mu, ls, eps);
            alpha * s.log_prob - q(s.action)
        };
        let (mu, ls) = (0.4, -0.5);
        let s = squashed_sample(mu, ls, eps);
        let d_u = alpha * 2.0 * s.action - dq(s.action) * (1.0 - s.action * s.action);
        let d_ls = -alpha + d_u * s.std * eps;
        let h = 1e-6;
        let fd_mu = (loss(mu + h, ls) - loss(mu - h, ls)) / (2.0 * h);
        let fd_ls = (loss(mu, ls + h) - loss(mu, ls - h)) / (2.0 * h);
        assert!((fd_mu - d_u).abs() < 1e-6);
        assert!((fd_ls - d_ls).abs() < 1e-6);
    }
}
