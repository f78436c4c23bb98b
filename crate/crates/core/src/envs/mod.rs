//! Simulators for the benchmark tasks.
//!
//! Dynamics are stateless: a task maps `(s, a)` to `(s', r, terminal)`, which
//! lets the exact planning model call exactly the same code as the real
//! environment. Episode bookkeeping (step counts, truncation) lives in
//! [`Episode`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Rng64;

mod acrobot;
mod cartpole;
mod gridworld;
mod mountain_car;
mod tabular_grid;

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use gridworld::{in_goal, GridWorld, Wall, GOAL_LOW, MOVE};
pub use mountain_car::MountainCar;
pub use tabular_grid::{Cell, GridMove, TabularGridWorld, TabularOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    GridWorld,
    GridWorldContAction,
    TabularGridWorld,
    MountainCar,
    CartPole,
    Acrobot,
}

impl EnvKind {
    pub const ALL: [EnvKind; 6] = [
        EnvKind::GridWorld,
        EnvKind::GridWorldContAction,
        EnvKind::TabularGridWorld,
        EnvKind::MountainCar,
        EnvKind::CartPole,
        EnvKind::Acrobot,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            EnvKind::GridWorld => "gridworld",
            EnvKind::GridWorldContAction => "gridworld-cont-action",
            EnvKind::TabularGridWorld => "tabular-gridworld",
            EnvKind::MountainCar => "mountaincar",
            EnvKind::CartPole => "cartpole",
            EnvKind::Acrobot => "acrobot",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown environment tag `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    /// `[-1, 1]^m`
    Box(usize),
}

impl ActionSpace {
    /// Width of the action encoding fed to networks (one-hot for discrete).
    pub fn encoding_dim(self) -> usize {
        match self {
            ActionSpace::Discrete(n) | ActionSpace::Box(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }

    /// One-hot for discrete actions, the raw vector for continuous ones.
    pub fn encode(&self, space: ActionSpace, out: &mut Vec<f64>) {
        match (self, space) {
            (Action::Discrete(a), ActionSpace::Discrete(n)) => {
                out.extend((0..n).map(|i| if i == *a { 1.0 } else { 0.0 }))
            }
            (Action::Continuous(v), _) => out.extend_from_slice(v),
            (Action::Discrete(a), ActionSpace::Box(m)) => {
                panic!("discrete action {a} encoded for a {m}-dim box space")
            }
        }
    }
}

/// Per-coordinate state bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Interval(f64, f64),
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub bounds: Vec<Bound>,
    pub gamma: f64,
    pub episode_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// What [`Task::project`] had to do to make a state feasible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Projection {
    pub clipped: bool,
    /// A trigonometric pair had zero norm and was replaced with (1, 0).
    pub degenerate_pair: bool,
}

pub trait Task: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    fn initial_state(&self, rng: &mut Rng64) -> Vec<f64>;

    /// One step of the dynamics. Deterministic tasks ignore `rng`.
    fn step(&self, s: &[f64], a: &Action, rng: &mut Rng64) -> Result<Outcome>;

    /// Map an arbitrary vector onto the feasible state set, in place.
    fn project(&self, s: &mut [f64]) -> Projection {
        clip_to_bounds(&self.spec().bounds, s)
    }

    /// The task's reward rule evaluated on a transition.
    fn reward(&self, s: &[f64], next: &[f64]) -> f64;

    /// True (non-truncation) termination predicate.
    fn is_terminal(&self, s: &[f64]) -> bool;

    /// Box used to draw states uniformly over the feasible set. Unbounded
    /// coordinates take the caller-supplied empirical range.
    fn sample_uniform_state(&self, empirical: &[(f64, f64)], rng: &mut Rng64) -> Vec<f64> {
        let mut s: Vec<f64> = self
            .spec()
            .bounds
            .iter()
            .zip(empirical)
            .map(|(b, &(lo_e, hi_e))| {
                let (lo, hi) = match *b {
                    Bound::Interval(lo, hi) => (lo, hi),
                    Bound::Unbounded => (lo_e, hi_e),
                };
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        self.project(&mut s);
        s
    }

    fn is_feasible(&self, s: &[f64]) -> bool {
        let mut p = s.to_vec();
        self.project(&mut p);
        p == s
    }
}

pub(crate) fn clip_to_bounds(bounds: &[Bound], s: &mut [f64]) -> Projection {
    let mut report = Projection::default();
    for (x, b) in s.iter_mut().zip(bounds) {
        if let Bound::Interval(lo, hi) = *b {
            let c = x.clamp(lo, hi);
            if c != *x {
                report.clipped = true;
                *x = c;
            }
        }
    }
    report
}

pub(crate) fn discrete_action(a: &Action, n: usize) -> Result<usize> {
    match a {
        Action::Discrete(i) if *i < n => Ok(*i),
        other => Err(Error::InvalidAction(format!(
            "{other:?} for a {n}-action discrete task"
        ))),
    }
}

/// Build the continuous-state task for a tag.
pub fn make_task(kind: EnvKind) -> Result<Box<dyn Task>> {
    Ok(match kind {
        EnvKind::GridWorld => Box::new(GridWorld::new()),
        EnvKind::GridWorldContAction => Box::new(GridWorld::continuous_actions()),
        EnvKind::MountainCar => Box::new(MountainCar::new()),
        EnvKind::CartPole => Box::new(CartPole::new()),
        EnvKind::Acrobot => Box::new(Acrobot::new()),
        EnvKind::TabularGridWorld => {
            return Err(Error::Config(
                "tabular-gridworld is driven by the tabular runner, not the function-approximation agents".into(),
            ))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeEnd {
    Running,
    Terminal,
    Truncated,
}

/// Episode bookkeeping around a stateless task.
#[derive(Debug, Clone)]
pub struct Episode {
    pub state: Vec<f64>,
    pub steps_elapsed: usize,
    pub total_reward: f64,
}

impl Episode {
    pub fn start(task: &dyn Task, rng: &mut Rng64) -> Self {
        Self {
            state: task.initial_state(rng),
            steps_elapsed: 0,
            total_reward: 0.0,
        }
    }

    /// Advance one step, returning the outcome and whether the episode ended.
    pub fn advance(&mut self, task: &dyn Task, a: &Action, rng: &mut Rng64) -> Result<(Outcome, EpisodeEnd)> {
        let out = task.step(&self.state, a, rng)?;
        self.steps_elapsed += 1;
        self.total_reward += out.reward;
        self.state.clone_from(&out.next);
        let end = if out.terminal {
            EpisodeEnd::Terminal
        } else if self.steps_elapsed >= task.spec().episode_cap {
            EpisodeEnd::Truncated
        } else {
            EpisodeEnd::Running
        };
        Ok((out, end))
    }
}
