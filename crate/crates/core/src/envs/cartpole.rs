use rand::Rng;

use super::{clip_to_bounds, discrete_action, Action, ActionSpace, Bound, EnvKind, EnvSpec, Outcome, Task};
use crate::error::Result;
use crate::rng::Rng64;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
pub const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const X_THRESHOLD: f64 = 2.4;

/// CartPole-v1 (Euler integration). State `(x, x_dot, theta, theta_dot)`,
/// +1 per step while alive, 500-step cap.
#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
}

impl CartPole {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                kind: EnvKind::CartPole,
                state_dim: 4,
                action_space: ActionSpace::Discrete(2),
                bounds: vec![
                    Bound::Interval(-2.0 * X_THRESHOLD, 2.0 * X_THRESHOLD),
                    Bound::Unbounded,
                    Bound::Interval(-2.0 * THETA_THRESHOLD, 2.0 * THETA_THRESHOLD),
                    Bound::Unbounded,
                ],
                gamma: 0.99,
                episode_cap: 500,
            },
        }
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Task for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self, rng: &mut Rng64) -> Vec<f64> {
        (0..4).map(|_| rng.random_range(-0.05..0.05)).collect()
    }

    fn step(&self, s: &[f64], a: &Action, _rng: &mut Rng64) -> Result<Outcome> {
        let a = discrete_action(a, 2)?;
        let (x, x_dot, theta, theta_dot) = (s[0], s[1], s[2], s[3]);
        let force = if a == 1 { FORCE_MAG } else { -FORCE_MAG };
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        let mut next = vec![
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ];
        // only reachable from already-failed states
        clip_to_bounds(&self.spec.bounds, &mut next);
        Ok(Outcome {
            reward: self.reward(s, &next),
            terminal: self.is_terminal(&next),
            next,
        })
    }

    fn reward(&self, _s: &[f64], _next: &[f64]) -> f64 {
        1.0
    }

    fn is_terminal(&self, s: &[f64]) -> bool {
        s[0].abs() > X_THRESHOLD || s[2].abs() > THETA_THRESHOLD
    }
}
