//! Search-control generation: noisy, covariance-preconditioned hill climbing
//! on a value estimate, and the queue its iterates are admitted to.

mod climb;
mod covariance;
mod langevin;
mod queue;

pub use climb::{climb_trajectory, hc_step, run_hill_climb, value_gradient, HcConfig, QValueSurface, StepRule, ValueSurface};
pub use covariance::{CovarianceTracker, Preconditioner};
pub use langevin::langevin_step;
pub use queue::{distance, SearchControlQueue, DEFAULT_QUEUE_CAPACITY, DEFAULT_THRESHOLD_RATE};
