use rand::Rng;

use super::{discrete_action, Action, ActionSpace, Bound, EnvKind, EnvSpec, Outcome, Task};
use crate::error::Result;
use crate::rng::Rng64;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

/// MountainCar-v0 dynamics; state `(position, velocity)`, actions push left,
/// coast, push right. Terminal iff position >= 0.5.
#[derive(Debug, Clone)]
pub struct MountainCar {
    spec: EnvSpec,
}

impl MountainCar {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                kind: EnvKind::MountainCar,
                state_dim: 2,
                action_space: ActionSpace::Discrete(3),
                bounds: vec![
                    Bound::Interval(MIN_POSITION, MAX_POSITION),
                    Bound::Interval(-MAX_SPEED, MAX_SPEED),
                ],
                gamma: 0.99,
                episode_cap: 2000,
            },
        }
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Task for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self, rng: &mut Rng64) -> Vec<f64> {
        vec![rng.random_range(-0.6..-0.4), 0.0]
    }

    fn step(&self, s: &[f64], a: &Action, _rng: &mut Rng64) -> Result<Outcome> {
        let a = discrete_action(a, 3)?;
        let (mut position, mut velocity) = (s[0], s[1]);
        velocity += (a as f64 - 1.0) * FORCE + (3.0 * position).cos() * (-GRAVITY);
        velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
        position += velocity;
        position = position.clamp(MIN_POSITION, MAX_POSITION);
        if position == MIN_POSITION && velocity < 0.0 {
            velocity = 0.0;
        }
        let next = vec![position, velocity];
        Ok(Outcome {
            reward: self.reward(s, &next),
            terminal: self.is_terminal(&next),
            next,
        })
    }

    fn reward(&self, _s: &[f64], _next: &[f64]) -> f64 {
        -1.0
    }

    fn is_terminal(&self, s: &[f64]) -> bool {
        s[0] >= GOAL_POSITION
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn coasting_from_rest() {
        let mc = MountainCar::new();
        let mut rng = stream(0, Stream::Env);
        let out = mc.step(&[-0.5, 0.0], &Action::Discrete(1), &mut rng).unwrap();
        // independent evaluation of the closed form
        let v = -0.0025 * (3.0f64 * -0.5).cos();
        let p = (-0.5 + v).clamp(-1.2, 0.6);
        assert_eq!(out.next, vec![p, v]);
        assert_eq!(out.reward, -1.0);
        assert!(!out.terminal);
    }

    #[test]
    fn reaching_goal_terminates() {
        let mc = MountainCar::new();
        let mut rng = stream(0, Stream::Env);
        let out = mc.step(&[0.49, 0.06], &Action::Discrete(2), &mut rng).unwrap();
        assert!(out.next[0] >= 0.5);
        assert!(out.terminal);
        let out = mc.step(&[0.3, 0.01], &Action::Discrete(2), &mut rng).unwrap();
        assert!(!out.terminal);
    }

    #[test]
    fn left_wall_stops_the_car() {
        let mc = MountainCar::new();
        let mut rng = stream(0, Stream::Env);
        let out = mc.step(&[-1.19, -0.05], &Action::Discrete(0), &mut rng).unwrap();
        assert_eq!(out.next, vec![-1.2, 0.0]);
    }

    #[test]
    fn invalid_action() {
        let mc = MountainCar::new();
        let mut rng = stream(0, Stream::Env);
        assert!(mc.step(&[-0.5, 0.0], &Action::Discrete(3), &mut rng).is_err());
    }
}
