use rand::Rng;

use super::{clip_to_bounds, discrete_action, Action, ActionSpace, Bound, EnvKind, EnvSpec, Outcome, Task};
use crate::error::{Error, Result};
use crate::rng::Rng64;

pub const MOVE: f64 = 0.05;
pub const GOAL_LOW: f64 = 0.95;
const START_HIGH: f64 = 0.05;

/// Axis-aligned rectangular obstacle; a move whose endpoint lies inside is cancelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Wall {
    pub fn contains(&self, s: &[f64]) -> bool {
        s[0] >= self.x.0 && s[0] <= self.x.1 && s[1] >= self.y.0 && s[1] <= self.y.1
    }
}

impl Default for Wall {
    fn default() -> Self {
        Wall {
            x: (0.45, 0.55),
            y: (0.0, 0.8),
        }
    }
}

/// Continuous-state GridWorld on `[0, 1]^2`. Start region `[0, 0.05]^2`,
/// goal `[0.95, 1]^2`, reward -1 per step.
#[derive(Debug, Clone)]
pub struct GridWorld {
    spec: EnvSpec,
    wall: Option<Wall>,
}

impl GridWorld {
    /// Four discrete moves: up, down, left, right.
    pub fn new() -> Self {
        Self::build(EnvKind::GridWorld, ActionSpace::Discrete(4), Some(Wall::default()))
    }

    /// Actions in `[-1, 1]^2`, executed as `s + 0.05 a`.
    pub fn continuous_actions() -> Self {
        Self::build(EnvKind::GridWorldContAction, ActionSpace::Box(2), Some(Wall::default()))
    }

    pub fn with_wall(mut self, wall: Option<Wall>) -> Self {
        self.wall = wall;
        self
    }

    pub fn wall(&self) -> Option<Wall> {
        self.wall
    }

    fn build(kind: EnvKind, action_space: ActionSpace, wall: Option<Wall>) -> Self {
        Self {
            spec: EnvSpec {
                kind,
                state_dim: 2,
                action_space,
                bounds: vec![Bound::Interval(0.0, 1.0); 2],
                gamma: 0.99,
                episode_cap: 2000,
            },
            wall,
        }
    }

    fn displacement(&self, a: &Action) -> Result<[f64; 2]> {
        match self.spec.action_space {
            ActionSpace::Discrete(n) => Ok(match discrete_action(a, n)? {
                0 => [0.0, MOVE],
                1 => [0.0, -MOVE],
                2 => [-MOVE, 0.0],
                _ => [MOVE, 0.0],
            }),
            ActionSpace::Box(m) => match a {
                Action::Continuous(v) if v.len() == m && v.iter().all(|x| x.is_finite()) => {
                    Ok([MOVE * v[0].clamp(-1.0, 1.0), MOVE * v[1].clamp(-1.0, 1.0)])
                }
                other => Err(Error::InvalidAction(format!("{other:?} for a 2-dim box action space"))),
            },
        }
    }
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::new()
    }
}

pub fn in_goal(s: &[f64]) -> bool {
    s[0] >= GOAL_LOW && s[1] >= GOAL_LOW
}

impl Task for GridWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self, rng: &mut Rng64) -> Vec<f64> {
        vec![rng.random_range(0.0..=START_HIGH), rng.random_range(0.0..=START_HIGH)]
    }

    fn step(&self, s: &[f64], a: &Action, _rng: &mut Rng64) -> Result<Outcome> {
        let d = self.displacement(a)?;
        let mut next = vec![s[0] + d[0], s[1] + d[1]];
        clip_to_bounds(&self.spec.bounds, &mut next);
        if self.wall.is_some_and(|w| w.contains(&next)) {
            next = s.to_vec();
        }
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
        in_goal(s)
    }
}
