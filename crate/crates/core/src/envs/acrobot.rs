use std::f64::consts::PI;

use rand::Rng;

use super::{discrete_action, Action, ActionSpace, Bound, EnvKind, EnvSpec, Outcome, Projection, Task};
use crate::error::Result;
use crate::rng::Rng64;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const G: f64 = 9.8;
pub const MAX_VEL_1: f64 = 4.0 * PI;
pub const MAX_VEL_2: f64 = 9.0 * PI;
// pairs within rounding of the unit circle count as feasible, keeping projection idempotent
const PAIR_NORM_TOL: f64 = 1e-12;

/// Acrobot-v1 ("book" dynamics, one RK4 step of 0.2 s per action).
///
/// Observed state: `(cos θ1, sin θ1, cos θ2, sin θ2, θ1', θ2')`. Torques
/// `{-1, 0, +1}`. Reward -1 per step, 0 on the terminating step.
#[derive(Debug, Clone)]
pub struct Acrobot {
    spec: EnvSpec,
}

impl Acrobot {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                kind: EnvKind::Acrobot,
                state_dim: 6,
                action_space: ActionSpace::Discrete(3),
                bounds: vec![
                    Bound::Interval(-1.0, 1.0),
                    Bound::Interval(-1.0, 1.0),
                    Bound::Interval(-1.0, 1.0),
                    Bound::Interval(-1.0, 1.0),
                    Bound::Interval(-MAX_VEL_1, MAX_VEL_1),
                    Bound::Interval(-MAX_VEL_2, MAX_VEL_2),
                ],
                gamma: 0.99,
                episode_cap: 500,
            },
        }
    }

    pub fn observe(internal: [f64; 4]) -> Vec<f64> {
        let [t1, t2, d1, d2] = internal;
        vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), d1, d2]
    }
}

impl Default for Acrobot {
    fn default() -> Self {
        Self::new()
    }
}

fn derivs(y: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2, l1, lc1, lc2, i1, i2) = (
        LINK_MASS_1,
        LINK_MASS_2,
        LINK_LENGTH_1,
        LINK_COM_1,
        LINK_COM_2,
        LINK_MOI,
        LINK_MOI,
    );
    let [theta1, theta2, dtheta1, dtheta2] = y;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * G * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * G * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4(y: [f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], h: f64| -> [f64; 4] {
        [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]]
    };
    let k1 = derivs(y, torque);
    let k2 = derivs(add(y, k1, dt / 2.0), torque);
    let k3 = derivs(add(y, k2, dt / 2.0), torque);
    let k4 = derivs(add(y, k3, dt), torque);
    let mut out = y;
    for i in 0..4 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn wrap(mut x: f64) -> f64 {
    let diff = 2.0 * PI;
    while x > PI {
        x -= diff;
    }
    while x < -PI {
        x += diff;
    }
    x
}

impl Task for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self, rng: &mut Rng64) -> Vec<f64> {
        let internal = [(); 4].map(|_| rng.random_range(-0.1..0.1));
        Self::observe(internal)
    }

    fn step(&self, s: &[f64], a: &Action, _rng: &mut Rng64) -> Result<Outcome> {
        let torque = discrete_action(a, 3)? as f64 - 1.0;
        let internal = [s[1].atan2(s[0]), s[3].atan2(s[2]), s[4], s[5]];
        let y = rk4(internal, torque, DT);
        let y = [
            wrap(y[0]),
            wrap(y[1]),
            y[2].clamp(-MAX_VEL_1, MAX_VEL_1),
            y[3].clamp(-MAX_VEL_2, MAX_VEL_2),
        ];
        let next = Self::observe(y);
        Ok(Outcome {
            reward: self.reward(s, &next),
            terminal: self.is_terminal(&next),
            next,
        })
    }

    /// Normalize both `(cos, sin)` pairs onto the unit circle, clip velocities.
    fn project(&self, s: &mut [f64]) -> Projection {
        let mut report = Projection::default();
        for k in [0, 2] {
            let norm = s[k].hypot(s[k + 1]);
            if norm == 0.0 || !norm.is_finite() {
                s[k] = 1.0;
                s[k + 1] = 0.0;
                report.degenerate_pair = true;
                report.clipped = true;
            } else if (norm - 1.0).abs() > PAIR_NORM_TOL {
                s[k] /= norm;
                s[k + 1] /= norm;
                report.clipped = true;
            }
        }
        for (k, max) in [(4, MAX_VEL_1), (5, MAX_VEL_2)] {
            let c = s[k].clamp(-max, max);
            if c != s[k] {
                s[k] = c;
                report.clipped = true;
            }
        }
        report
    }

    fn reward(&self, _s: &[f64], next: &[f64]) -> f64 {
        if self.is_terminal(next) {
            0.0
        } else {
            -1.0
        }
    }

    fn is_terminal(&self, s: &[f64]) -> bool {
        // -cos θ1 - cos(θ1 + θ2) > 1
        let cos_sum = s[0] * s[2] - s[1] * s[3];
        -s[0] - cos_sum > 1.0
    }

    fn sample_uniform_state(&self, _empirical: &[(f64, f64)], rng: &mut Rng64) -> Vec<f64> {
        Self::observe([
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-MAX_VEL_1..MAX_VEL_1),
            rng.random_range(-MAX_VEL_2..MAX_VEL_2),
        ])
    }
}
