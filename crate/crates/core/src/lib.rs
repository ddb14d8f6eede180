//! Two-step dynamic obstacle avoidance.
//!
//! Step one learns a one-step obstacle position model and turns iterated
//! forecasts into closest-point-of-approach (CPA) collision-risk estimates.
//! Step two feeds those estimates into the observation of recurrent
//! actor-critic agents (recurrent TD3 and recurrent SAC) trained in a
//! passing-rule avoidance environment.
//!
//! Module map:
//!
//! - [`dynamics`]: linear, stochastic (smoothed AR(1)) and periodic obstacle motion.
//! - [`predictor`]: LSTM one-step predictor, iterative rollouts, RMSE-by-horizon.
//! - [`risk`]: distance curves, symmetric smoothing, d^CPA / t^CPA extraction.
//! - [`env`]: the avoidance environment with obstacle replacement and observations.
//! - [`agents`]: history handling, replay, recurrent TD3/SAC and the training loop.
//! - [`harness`]: seeded multi-run experiments, persistence and aggregation.
//! - [`nn`]: the small differentiable building blocks the learners are made of.

pub mod agents;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod geom;
pub mod harness;
pub mod nn;
pub mod predictor;
pub mod risk;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use geom::Vec2;
