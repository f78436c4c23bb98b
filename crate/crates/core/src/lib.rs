//! Dyna-style model-based reinforcement learning whose search-control states
//! come from noisy, covariance-preconditioned, projected hill climbing on the
//! agent's current value estimates.
//!
//! Modules, bottom up:
//! - [`nn`]: dense networks with parameter and input gradients, Adam.
//! - [`envs`]: GridWorld variants, MountainCar, CartPole, Acrobot and the
//!   20x20 tabular grid, with their projection operators.
//! - [`model`]: exact and learned `(s, a) -> (s', r, terminal)` models.
//! - [`search_control`]: covariance tracking, hill climbing, the admission
//!   threshold, and a Langevin reference chain.
//! - [`agent`]: DQN with replay and target network, HC-Dyna and its
//!   baselines, DDPG.
//! - [`tabular`]: the tabular study (value iteration, Gibbs samplers,
//!   finite-difference hill climbing).
//! - [`harness`]: configs, seeded runs, scenarios, CSV output.

pub mod agent;
pub mod envs;
pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod search_control;
pub mod tabular;

pub use error::{Error, Result};
