//! The tabular study on the 20×20 stochastic grid: Q-learning Dyna with a
//! counting model, and search-control strategies that differ only in how
//! planning states are chosen.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::envs::{Cell, GridMove, TabularGridWorld, TabularOutcome};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng64, Stream};
use crate::search_control::SearchControlQueue;

mod sampling;
mod sweep;
mod value_iteration;

pub use sampling::{fd_hill_climb, gibbs_sample, softmax};
pub use sweep::{final_fraction_mean, run_sweep, SweepCell, SweepResult, LEARNING_RATES};
pub use value_iteration::{bellman_residual, value_iteration, VI_MAX_SWEEPS, VI_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Er,
    HcDyna,
    HcDynaVstar,
    Gibbs,
    GibbsVstar,
    UniformDyna,
    OnPolicyDyna,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Er,
        Strategy::HcDyna,
        Strategy::HcDynaVstar,
        Strategy::Gibbs,
        Strategy::GibbsVstar,
        Strategy::UniformDyna,
        Strategy::OnPolicyDyna,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::Er => "er",
            Strategy::HcDyna => "hc-dyna",
            Strategy::HcDynaVstar => "hc-dyna-vstar",
            Strategy::Gibbs => "gibbs",
            Strategy::GibbsVstar => "gibbs-vstar",
            Strategy::UniformDyna => "uniform-dyna",
            Strategy::OnPolicyDyna => "onpolicy-dyna",
        }
    }

    pub fn needs_vstar(self) -> bool {
        matches!(self, Strategy::HcDynaVstar | Strategy::GibbsVstar)
    }

    fn hill_climbs(self) -> bool {
        matches!(self, Strategy::HcDyna | Strategy::HcDynaVstar)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown tabular strategy `{s}`")))
    }
}

/// A table of action values.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    actions: usize,
    values: Vec<f64>,
}

impl TabularQ {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn value(&self, s: usize) -> f64 {
        self.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn state_values(&self) -> Vec<f64> {
        (0..self.values.len() / self.actions).map(|s| self.value(s)).collect()
    }

    /// Greedy action with ties broken uniformly.
    pub fn greedy(&self, s: usize, rng: &mut Rng64) -> usize {
        let row = self.row(s);
        let best = self.value(s);
        let ties = row.iter().filter(|&&q| q == best).count();
        if ties == 1 {
            return row.iter().position(|&q| q == best).expect("max is attained");
        }
        let k = rng.random_range(0..ties);
        row.iter()
            .enumerate()
            .filter(|(_, &q)| q == best)
            .nth(k)
            .map(|(i, _)| i)
            .expect("k < ties")
    }

    pub fn epsilon_greedy(&self, s: usize, epsilon: f64, rng: &mut Rng64) -> usize {
        if rng.random::<f64>() < epsilon {
            rng.random_range(0..self.actions)
        } else {
            self.greedy(s, rng)
        }
    }

    /// `Q(s,a) += lr·(r + γ·max Q(next) − Q(s,a))`, no bootstrap when terminal.
    pub fn update(&mut self, s: usize, a: usize, r: f64, next: usize, terminal: bool, lr: f64, gamma: f64) {
        let boot = if terminal { 0.0 } else { gamma * self.value(next) };
        let q = &mut self.values[s * self.actions + a];
        *q += lr * (r + boot - *q);
    }
}

/// Empirical outcome counts per `(cell, action)`.
#[derive(Debug, Clone)]
pub struct CountModel {
    outcomes: Vec<Vec<(TabularOutcome, u64)>>,
    totals: Vec<u64>,
}

impl CountModel {
    pub fn new(states: usize) -> Self {
        Self {
            outcomes: vec![Vec::new(); states * 4],
            totals: vec![0; states * 4],
        }
    }

    pub fn observe(&mut self, s: Cell, a: GridMove, out: TabularOutcome) {
        let k = s.0 * 4 + a as usize;
        self.totals[k] += 1;
        match self.outcomes[k].iter_mut().find(|(o, _)| *o == out) {
            Some((_, n)) => *n += 1,
            None => self.outcomes[k].push((out, 1)),
        }
    }

    pub fn visits(&self, s: Cell, a: GridMove) -> u64 {
        self.totals[s.0 * 4 + a as usize]
    }

    /// Observed outcomes with their empirical probabilities.
    pub fn probabilities(&self, s: Cell, a: GridMove) -> Vec<(TabularOutcome, f64)> {
        let k = s.0 * 4 + a as usize;
        let total = self.totals[k] as f64;
        self.outcomes[k].iter().map(|(o, n)| (*o, *n as f64 / total)).collect()
    }

    /// An outcome drawn with its empirical frequency; `None` if never tried.
    pub fn sample(&self, s: Cell, a: GridMove, rng: &mut Rng64) -> Option<TabularOutcome> {
        let k = s.0 * 4 + a as usize;
        if self.totals[k] == 0 {
            return None;
        }
        let mut u = rng.random_range(0..self.totals[k]);
        for (o, n) in &self.outcomes[k] {
            if u < *n {
                return Some(*o);
            }
            u -= n;
        }
        unreachable!("counts sum to the total")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularConfig {
    pub strategy: Strategy,
    pub lr: f64,
    pub epsilon: f64,
    pub planning_steps: usize,
    pub rho: f64,
    pub hc_steps: usize,
    pub hc_noise_std: f64,
    pub er_capacity: usize,
    pub queue_capacity: usize,
    pub threshold_rate: f64,
    pub eval_every: u64,
    pub eval_epsilon: f64,
    pub total_steps: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::HcDyna,
            lr: 0.5,
            epsilon: 0.2,
            planning_steps: 10,
            rho: 0.5,
            hc_steps: 80,
            hc_noise_std: 0.05,
            er_capacity: 100_000,
            queue_capacity: 100_000,
            threshold_rate: 0.001,
            eval_every: 100,
            eval_epsilon: 0.05,
            total_steps: 10_000,
        }
    }
}

impl TabularConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.lr > 0.0 && self.lr <= 1.0) {
            return Err(Error::Config(format!("tabular lr {} outside (0, 1]", self.lr)));
        }
        if !unit(self.epsilon) || !unit(self.eval_epsilon) || !unit(self.rho) || !unit(self.threshold_rate) {
            return Err(Error::Config("epsilon, rho and threshold rate must lie in [0, 1]".into()));
        }
        if self.eval_every == 0 || self.er_capacity == 0 || self.queue_capacity == 0 {
            return Err(Error::Config("eval cadence and capacities must be positive".into()));
        }
        if self.hc_noise_std < 0.0 {
            return Err(Error::Config("hill-climb noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Where a tabular planning update got its `(s, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanningOrigin {
    SearchControl,
    Replay,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TabularStats {
    pub planning_updates: u64,
    /// Planning draws whose `(s, a)` had no model data and were skipped.
    pub skipped: u64,
    pub from_search_control: u64,
    pub episodes: u64,
}

pub struct TabularAgent {
    env: TabularGridWorld,
    cfg: TabularConfig,
    q: TabularQ,
    model: CountModel,
    vstar: Option<Arc<Vec<f64>>>,
    er: VecDeque<(Cell, GridMove)>,
    queue: SearchControlQueue,
    state: Cell,
    episode_steps: usize,
    env_steps: u64,
    stats: TabularStats,
    env_rng: Rng64,
    explore_rng: Rng64,
    planning_rng: Rng64,
    hc_rng: Rng64,
    model_rng: Rng64,
    eval_rng: Rng64,
}

impl TabularAgent {
    /// `vstar` is required by the Vstar strategies and ignored otherwise.
    pub fn new(env: TabularGridWorld, cfg: TabularConfig, vstar: Option<Arc<Vec<f64>>>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.strategy.needs_vstar() && vstar.as_ref().is_none_or(|v| v.len() != env.num_cells()) {
            return Err(Error::Config(format!("strategy `{}` needs optimal values for every cell", cfg.strategy)));
        }
        let n = env.num_cells();
        Ok(Self {
            q: TabularQ::new(n, 4),
            model: CountModel::new(n),
            queue: SearchControlQueue::new(cfg.queue_capacity, cfg.threshold_rate),
            er: VecDeque::new(),
            state: env.start(),
            episode_steps: 0,
            env_steps: 0,
            stats: TabularStats::default(),
            env_rng: stream(seed, Stream::Env),
            explore_rng: stream(seed, Stream::Explore),
            planning_rng: stream(seed, Stream::SearchControl),
            hc_rng: stream(seed, Stream::HillClimb),
            model_rng: stream(seed, Stream::Model),
            eval_rng: stream(seed, Stream::Eval),
            vstar,
            env,
            cfg,
        })
    }

    pub fn q(&self) -> &TabularQ {
        &self.q
    }

    pub fn model(&self) -> &CountModel {
        &self.model
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn stats(&self) -> &TabularStats {
        &self.stats
    }

    pub fn replay(&self) -> impl Iterator<Item = &(Cell, GridMove)> {
        self.er.iter()
    }

    pub fn queue_cells(&self) -> Vec<Cell> {
        self.queue.iter().map(|p| self.env.nearest_cell(p[0], p[1])).collect()
    }

    fn climb_values(&self) -> Vec<f64> {
        match (&self.vstar, self.cfg.strategy) {
            (Some(v), Strategy::HcDynaVstar | Strategy::GibbsVstar) => v.as_ref().clone(),
            _ => self.q.state_values(),
        }
    }

    /// One real step, search-control generation, then the planning updates.
    pub fn step(&mut self) -> Result<()> {
        let s = self.state;
        let a = GridMove::from_index(self.q.epsilon_greedy(s.0, self.cfg.epsilon, &mut self.explore_rng))
            .expect("four actions");
        let out = self.env.step(s, a, &mut self.env_rng);
        self.q.update(s.0, a as usize, out.reward, out.next.0, out.terminal, self.cfg.lr, self.env.gamma);
        self.model.observe(s, a, out);
        if self.er.len() == self.cfg.er_capacity {
            self.er.pop_front();
        }
        self.er.push_back((s, a));
        self.queue.threshold_update(&self.env.center(s), &self.env.center(out.next));
        self.env_steps += 1;
        self.episode_steps += 1;
        if out.terminal || self.episode_steps >= self.env.episode_cap {
            self.state = self.env.start();
            self.episode_steps = 0;
            self.stats.episodes += 1;
        } else {
            self.state = out.next;
        }

        if self.cfg.strategy.hill_climbs() {
            let v = self.climb_values();
            let start = self.er[self.hc_rng.random_range(0..self.er.len())].0;
            let path = fd_hill_climb(&self.env, &v, start, self.cfg.hc_steps, self.cfg.hc_noise_std, &mut self.hc_rng);
            let mut last: Option<Vec<f64>> = None;
            for c in path {
                let p = self.env.center(c).to_vec();
                if self.queue.admits(last.as_deref(), &p) {
                    self.queue.push(p.clone());
                    last = Some(p);
                }
            }
        }

        for _ in 0..self.cfg.planning_steps {
            self.planning_update();
        }
        Ok(())
    }

    /// The `(s, a)` of one planning update and where it came from.
    pub fn planning_pair(&mut self) -> (Cell, GridMove, PlanningOrigin) {
        let rng = &mut self.planning_rng;
        let strategy = self.cfg.strategy;
        // drawn for every strategy so ρ = 0 consumes the stream like ER does
        let draw = rng.random::<f64>();
        let use_sc = strategy != Strategy::Er && draw < self.cfg.rho;
        let sc_cell = if !use_sc {
            None
        } else {
            match strategy {
                Strategy::HcDyna | Strategy::HcDynaVstar => (!self.queue.is_empty()).then(|| {
                    let p = self.queue.sample(rng);
                    self.env.nearest_cell(p[0], p[1])
                }),
                Strategy::Gibbs | Strategy::GibbsVstar => {
                    let v = match (&self.vstar, strategy) {
                        (Some(v), Strategy::GibbsVstar) => gibbs_sample(v, rng),
                        _ => gibbs_sample(&self.q.state_values(), rng),
                    };
                    Some(Cell(v))
                }
                Strategy::UniformDyna => Some(Cell(rng.random_range(0..self.env.num_cells()))),
                Strategy::OnPolicyDyna => Some(self.er[rng.random_range(0..self.er.len())].0),
                Strategy::Er => unreachable!("ER never draws search-control states"),
            }
        };
        match sc_cell {
            Some(c) => {
                let a = GridMove::from_index(self.q.epsilon_greedy(c.0, self.cfg.epsilon, rng)).expect("four actions");
                (c, a, PlanningOrigin::SearchControl)
            }
            None => {
                let (c, a) = self.er[rng.random_range(0..self.er.len())];
                (c, a, PlanningOrigin::Replay)
            }
        }
    }

    fn planning_update(&mut self) {
        let (s, a, origin) = self.planning_pair();
        self.stats.planning_updates += 1;
        if origin == PlanningOrigin::SearchControl {
            self.stats.from_search_control += 1;
        }
        match self.model.sample(s, a, &mut self.model_rng) {
            Some(o) => self.q.update(s.0, a as usize, o.reward, o.next.0, o.terminal, self.cfg.lr, self.env.gamma),
            None => self.stats.skipped += 1,
        }
    }

    /// Return of one ε-greedy evaluation episode capped at the episode limit.
    pub fn evaluate(&mut self) -> f64 {
        let mut s = self.env.start();
        let mut total = 0.0;
        for _ in 0..self.env.episode_cap {
            let a = GridMove::from_index(self.q.epsilon_greedy(s.0, self.cfg.eval_epsilon, &mut self.eval_rng))
                .expect("four actions");
            let out = self.env.step(s, a, &mut self.eval_rng);
            total += out.reward;
            if out.terminal {
                break;
            }
            s = out.next;
        }
        total
    }

    /// Cell histogram of `n` uniform draws from the search-control queue or
    /// the replay buffer (empty sources give an all-zero histogram).
    pub fn histogram(&self, origin: PlanningOrigin, n: usize, rng: &mut Rng64) -> Vec<u64> {
        let mut h = vec![0; self.env.num_cells()];
        match origin {
            PlanningOrigin::SearchControl if !self.queue.is_empty() => {
                for _ in 0..n {
                    let p = self.queue.sample(rng);
                    h[self.env.nearest_cell(p[0], p[1]).0] += 1;
                }
            }
            PlanningOrigin::Replay if !self.er.is_empty() => {
                for _ in 0..n {
                    h[self.er[rng.random_range(0..self.er.len())].0 .0] += 1;
                }
            }
            _ => {}
        }
        h
    }
}

/// Train for `cfg.total_steps`, evaluating every `cfg.eval_every` steps.
/// Returns `(env_step, eval_return)` pairs.
pub fn run_tabular(
    env: &TabularGridWorld,
    cfg: &TabularConfig,
    vstar: Option<Arc<Vec<f64>>>,
    seed: u64,
) -> Result<Vec<(u64, f64)>> {
    let mut agent = TabularAgent::new(env.clone(), cfg.clone(), vstar, seed)?;
    let mut evals = Vec::with_capacity((cfg.total_steps / cfg.eval_every) as usize);
    for _ in 0..cfg.total_steps {
        agent.step()?;
        if agent.env_steps() % cfg.eval_every == 0 {
            evals.push((agent.env_steps(), agent.evaluate()));
        }
    }
    Ok(evals)
}
