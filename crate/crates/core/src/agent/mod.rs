//! Learners and the Dyna loop that feeds them.
//!
//! [`Agent`] owns one run: the environment episode, replay buffer, search
//! control queue, covariance tracker, planning model and a learner (DQN or
//! DDPG). Each env step it acts, stores the transition and, after warmup,
//! optionally hill climbs and then performs `n` mini-batch updates whose
//! batches mix `⌊ρb⌋` model-generated transitions with replayed ones.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use log::{debug, warn};
use rand::Rng;

use crate::envs::{Action, ActionSpace, Episode, EpisodeEnd, Task};
use crate::error::{Error, Result};
use crate::model::{EnvModel, ExactModel, LearnedDiffModel, ModelKind};
use crate::nn::{Mlp, OutputActivation};
use crate::replay::{ErBuffer, Transition, DEFAULT_ER_CAPACITY};
use crate::rng::{stream, Rng64, RngStreams, Stream};
use crate::search_control::{
    run_hill_climb, CovarianceTracker, HcConfig, QValueSurface, SearchControlQueue, ValueSurface,
    DEFAULT_QUEUE_CAPACITY, DEFAULT_THRESHOLD_RATE,
};

mod ddpg;
mod dqn;

pub use ddpg::{
    actor_gradient, critic_gradient, ddpg_update, ddpg_value_gradient, q_value, DdpgLearner, DdpgSurface, ACTOR_LR,
    CRITIC_LR, EXPLORATION_STD,
};
pub use dqn::{act, q_learning_update, td_loss_gradient, td_target, QLearner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dqn,
    HcDyna,
    OnPolicyDyna,
    UniformDyna,
    Ddpg,
    DdpgHcDyna,
    DdpgOnPolicyDyna,
}

/// Where the model-generated part of a planning batch gets its states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSource {
    None,
    HillClimb,
    Replay,
    Uniform,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Dqn,
        Algorithm::HcDyna,
        Algorithm::OnPolicyDyna,
        Algorithm::UniformDyna,
        Algorithm::Ddpg,
        Algorithm::DdpgHcDyna,
        Algorithm::DdpgOnPolicyDyna,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::HcDyna => "hc-dyna",
            Algorithm::OnPolicyDyna => "onpolicy-dyna",
            Algorithm::UniformDyna => "uniform-dyna",
            Algorithm::Ddpg => "ddpg",
            Algorithm::DdpgHcDyna => "ddpg-hc-dyna",
            Algorithm::DdpgOnPolicyDyna => "ddpg-onpolicy-dyna",
        }
    }

    pub fn is_ddpg(self) -> bool {
        matches!(self, Algorithm::Ddpg | Algorithm::DdpgHcDyna | Algorithm::DdpgOnPolicyDyna)
    }

    pub fn source(self) -> StateSource {
        match self {
            Algorithm::Dqn | Algorithm::Ddpg => StateSource::None,
            Algorithm::HcDyna | Algorithm::DdpgHcDyna => StateSource::HillClimb,
            Algorithm::OnPolicyDyna | Algorithm::DdpgOnPolicyDyna => StateSource::Replay,
            Algorithm::UniformDyna => StateSource::Uniform,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm tag `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// Fraction of each planning batch drawn from search control.
    pub rho: f64,
    /// Mini-batch updates per env step.
    pub planning_steps: usize,
    pub batch_size: usize,
    pub target_sync: u64,
    pub learning_rate: f64,
    pub epsilon_train: f64,
    pub epsilon_eval: f64,
    pub warmup: u64,
    pub gamma: f64,
    pub er_capacity: usize,
    pub queue_capacity: usize,
    pub threshold_rate: f64,
    pub hidden: Vec<usize>,
    /// Half-width of the uniform init of the output layer.
    pub output_init: f64,
    pub hc: HcConfig,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub exploration_std: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            planning_steps: 10,
            batch_size: 32,
            target_sync: 1000,
            learning_rate: 1e-4,
            epsilon_train: 0.1,
            epsilon_eval: 0.05,
            warmup: 5000,
            gamma: 0.99,
            er_capacity: DEFAULT_ER_CAPACITY,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            threshold_rate: DEFAULT_THRESHOLD_RATE,
            hidden: vec![32, 32],
            output_init: 0.0003,
            hc: HcConfig::default(),
            actor_lr: ACTOR_LR,
            critic_lr: CRITIC_LR,
            exploration_std: EXPLORATION_STD,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.rho) {
            return bad(format!("rho = {} outside [0, 1]", self.rho));
        }
        if self.planning_steps == 0 || self.batch_size == 0 || self.target_sync == 0 {
            return bad("planning steps, batch size and target sync period must be positive".into());
        }
        if !unit(self.epsilon_train) || !unit(self.epsilon_eval) {
            return bad("exploration epsilons must lie in [0, 1]".into());
        }
        if !unit(self.gamma) {
            return bad(format!("gamma = {} outside [0, 1]", self.gamma));
        }
        if self.er_capacity == 0 || self.queue_capacity == 0 {
            return bad("buffer capacities must be positive".into());
        }
        if !unit(self.threshold_rate) {
            return bad("threshold rate must lie in [0, 1]".into());
        }
        for (name, v) in [
            ("learning rate", self.learning_rate),
            ("actor lr", self.actor_lr),
            ("critic lr", self.critic_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if !(self.hc.noise >= 0.0) || self.hc.jitter < 0.0 {
            return bad("hill-climb noise and jitter must be non-negative".into());
        }
        if self.exploration_std < 0.0 || self.output_init < 0.0 {
            return bad("exploration std and output init must be non-negative".into());
        }
        Ok(())
    }

    /// Model-generated samples in each planning batch.
    pub fn search_control_count(&self) -> usize {
        sc_count(self.rho, self.batch_size)
    }
}

/// `⌊ρb⌋`, robust to `ρb` landing a rounding error below an integer.
pub fn sc_count(rho: f64, batch: usize) -> usize {
    ((rho * batch as f64 + 1e-9).floor() as usize).min(batch)
}

#[derive(Debug, Clone)]
pub enum Learner {
    Q(QLearner),
    Ddpg(DdpgLearner),
}

impl Learner {
    pub fn updates(&self) -> u64 {
        match self {
            Learner::Q(l) => l.updates(),
            Learner::Ddpg(l) => l.updates(),
        }
    }

    pub fn surface(&self) -> Box<dyn ValueSurface + '_> {
        match self {
            Learner::Q(l) => Box::new(QValueSurface(&l.qnet)),
            Learner::Ddpg(l) => Box::new(l.surface()),
        }
    }

    /// Training behaviour: ε-greedy for Q, Gaussian noise for DDPG.
    pub fn act_train(&self, s: &[f64], epsilon: f64, rng: &mut Rng64) -> Result<Action> {
        match self {
            Learner::Q(l) => l.act(s, epsilon, rng),
            Learner::Ddpg(l) => l.act_explore(s, rng).map(Action::Continuous),
        }
    }

    /// Evaluation behaviour: uniform random with probability ε, else greedy.
    pub fn act_eval(&self, s: &[f64], epsilon: f64, rng: &mut Rng64) -> Result<Action> {
        match self {
            Learner::Q(l) => l.act(s, epsilon, rng),
            Learner::Ddpg(l) => {
                if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                    let m = l.actor.output_dim();
                    Ok(Action::Continuous((0..m).map(|_| rng.random_range(-1.0..=1.0)).collect()))
                } else {
                    l.actor.forward(s).map(Action::Continuous)
                }
            }
        }
    }

    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        match self {
            Learner::Q(l) => l.update(batch),
            Learner::Ddpg(l) => l.update(batch),
        }
    }
}

/// Counters reported alongside a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentStats {
    pub episodes: u64,
    pub admitted: u64,
    pub planning_updates: u64,
    pub model_samples: u64,
    /// Planning batches that fell back to pure replay for lack of queue states.
    pub empty_queue_batches: u64,
}

pub struct Agent {
    cfg: AgentConfig,
    algorithm: Algorithm,
    model_kind: ModelKind,
    task: Arc<dyn Task>,
    learner: Learner,
    buffer: ErBuffer,
    queue: SearchControlQueue,
    tracker: CovarianceTracker,
    model: Box<dyn EnvModel>,
    ranges: Vec<(f64, f64)>,
    episode: Episode,
    rng: RngStreams,
    seed: u64,
    env_steps: u64,
    stats: AgentStats,
}

fn build_model(kind: ModelKind, task: &Arc<dyn Task>, seed: u64) -> Result<Box<dyn EnvModel>> {
    let rng = stream(seed, Stream::Model);
    Ok(match kind {
        ModelKind::Exact => Box::new(ExactModel::new(task.clone(), rng)),
        ModelKind::Learned => Box::new(LearnedDiffModel::new(task.clone(), rng)?),
    })
}

impl Agent {
    pub fn new(task: Arc<dyn Task>, algorithm: Algorithm, model_kind: ModelKind, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let spec = task.spec().clone();
        let mut rng = RngStreams::new(seed);
        let d = spec.state_dim;
        let learner = match (algorithm.is_ddpg(), spec.action_space) {
            (false, ActionSpace::Discrete(n)) => {
                let sizes: Vec<usize> = std::iter::once(d).chain(cfg.hidden.iter().copied()).chain([n]).collect();
                let net = Mlp::xavier(&sizes, cfg.output_init, OutputActivation::Linear, &mut rng.init)?;
                Learner::Q(QLearner::new(net, cfg.learning_rate, cfg.gamma, cfg.target_sync))
            }
            (true, ActionSpace::Box(m)) => {
                let actor_sizes: Vec<usize> = std::iter::once(d).chain(cfg.hidden.iter().copied()).chain([m]).collect();
                let critic_sizes: Vec<usize> =
                    std::iter::once(d + m).chain(cfg.hidden.iter().copied()).chain([1]).collect();
                let actor = Mlp::xavier(&actor_sizes, cfg.output_init, OutputActivation::Tanh, &mut rng.init)?;
                let critic = Mlp::xavier(&critic_sizes, cfg.output_init, OutputActivation::Linear, &mut rng.init)?;
                let mut l = DdpgLearner::new(actor, critic, cfg.gamma, cfg.target_sync)?;
                l.actor_opt.lr = cfg.actor_lr;
                l.critic_opt.lr = cfg.critic_lr;
                l.exploration_std = cfg.exploration_std;
                Learner::Ddpg(l)
            }
            (ddpg, space) => {
                return Err(Error::Config(format!(
                    "algorithm `{algorithm}` (ddpg: {ddpg}) does not fit action space {space:?} of {}",
                    spec.kind
                )))
            }
        };
        let model = build_model(model_kind, &task, seed)?;
        let episode = Episode::start(task.as_ref(), &mut rng.env);
        Ok(Self {
            buffer: ErBuffer::new(cfg.er_capacity),
            queue: SearchControlQueue::new(cfg.queue_capacity, cfg.threshold_rate),
            tracker: CovarianceTracker::new(d),
            ranges: vec![(f64::INFINITY, f64::NEG_INFINITY); d],
            cfg,
            algorithm,
            model_kind,
            task,
            learner,
            model,
            episode,
            rng,
            seed,
            env_steps: 0,
            stats: AgentStats::default(),
        })
    }

    /// Continue from this agent's exact state under another algorithm. The
    /// search-control queue is carried over only when the new algorithm
    /// hill climbs; the planning model is rebuilt.
    pub fn fork(&self, algorithm: Algorithm) -> Result<Agent> {
        if algorithm.is_ddpg() != self.algorithm.is_ddpg() {
            return Err(Error::Config(format!("cannot fork `{}` into `{algorithm}`", self.algorithm)));
        }
        let mut queue = self.queue.clone();
        if algorithm.source() != StateSource::HillClimb {
            queue = SearchControlQueue::new(self.cfg.queue_capacity, self.cfg.threshold_rate);
            queue.set_threshold(self.queue.threshold());
        }
        Ok(Agent {
            cfg: self.cfg.clone(),
            algorithm,
            model_kind: self.model_kind,
            task: self.task.clone(),
            learner: self.learner.clone(),
            buffer: self.buffer.clone(),
            queue,
            tracker: self.tracker.clone(),
            model: build_model(self.model_kind, &self.task, self.seed)?,
            ranges: self.ranges.clone(),
            episode: self.episode.clone(),
            rng: self.rng.clone(),
            seed: self.seed,
            env_steps: self.env_steps,
            stats: self.stats.clone(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn task(&self) -> &dyn Task {
        self.task.as_ref()
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.learner.updates()
    }

    pub fn stats(&self) -> &AgentStats {
        &self.stats
    }

    pub fn buffer(&self) -> &ErBuffer {
        &self.buffer
    }

    pub fn queue(&self) -> &SearchControlQueue {
        &self.queue
    }

    pub fn tracker(&self) -> &CovarianceTracker {
        &self.tracker
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn surface(&self) -> Box<dyn ValueSurface + '_> {
        self.learner.surface()
    }

    pub fn q_network(&self) -> Option<&Mlp> {
        match &self.learner {
            Learner::Q(l) => Some(&l.qnet),
            Learner::Ddpg(_) => None,
        }
    }

    /// Overwrite the online and target Q networks.
    pub fn set_q_network(&mut self, net: Mlp) -> Result<()> {
        match &mut self.learner {
            Learner::Q(l) => {
                if net.layer_sizes() != l.qnet.layer_sizes() {
                    return Err(Error::Checkpoint(format!(
                        "network shape {:?} does not match {:?}",
                        net.layer_sizes(),
                        l.qnet.layer_sizes()
                    )));
                }
                l.reset_networks(net);
                Ok(())
            }
            Learner::Ddpg(_) => Err(Error::Config("DDPG agents have no Q network".into())),
        }
    }

    fn random_action(&mut self) -> Action {
        let rng = &mut self.rng.explore;
        match self.task.spec().action_space {
            ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..n)),
            ActionSpace::Box(m) => Action::Continuous((0..m).map(|_| rng.random_range(-1.0..=1.0)).collect()),
        }
    }

    fn widen_ranges(&mut self, s: &[f64]) {
        for ((lo, hi), &x) in self.ranges.iter_mut().zip(s) {
            *lo = lo.min(x);
            *hi = hi.max(x);
        }
    }

    /// One real environment step followed by any learning it triggers.
    pub fn step(&mut self) -> Result<()> {
        let warm = self.env_steps < self.cfg.warmup;
        let s = self.episode.state.clone();
        let a = if warm {
            self.random_action()
        } else {
            self.learner.act_train(&s, self.cfg.epsilon_train, &mut self.rng.explore)?
        };
        let (out, end) = self.episode.advance(self.task.as_ref(), &a, &mut self.rng.env)?;
        self.tracker.observe(&s)?;
        self.queue.threshold_update(&s, &out.next);
        self.widen_ranges(&s);
        self.widen_ranges(&out.next);
        self.buffer.push(Transition {
            s,
            a,
            r: out.reward,
            next: out.next,
            terminal: out.terminal,
        });
        self.env_steps += 1;
        if end != EpisodeEnd::Running {
            self.stats.episodes += 1;
            self.episode = Episode::start(self.task.as_ref(), &mut self.rng.env);
        }
        if warm {
            return Ok(());
        }
        let source = self.algorithm.source();
        if source != StateSource::None {
            self.model.train_step(&self.buffer)?;
        }
        if source == StateSource::HillClimb {
            let surface = self.learner.surface();
            self.stats.admitted += run_hill_climb(
                surface.as_ref(),
                &self.buffer,
                &self.tracker,
                &mut self.queue,
                &self.cfg.hc,
                self.task.as_ref(),
                &mut self.rng.hill_climb,
            )? as u64;
        }
        for _ in 0..self.cfg.planning_steps {
            self.plan_step()?;
        }
        Ok(())
    }

    fn planning_state(&mut self, source: StateSource) -> Vec<f64> {
        let rng = &mut self.rng.search_control;
        match source {
            StateSource::HillClimb => self.queue.sample(rng).to_vec(),
            StateSource::Replay => self.buffer.sample(rng).s.clone(),
            StateSource::Uniform => self.task.sample_uniform_state(&self.ranges, rng),
            StateSource::None => unreachable!("no planning state source"),
        }
    }

    /// One mixed mini-batch update: `⌊ρb⌋` model transitions from the
    /// algorithm's state source, the rest replayed.
    pub fn plan_step(&mut self) -> Result<f64> {
        if self.buffer.is_empty() {
            return Err(Error::Config("planning requested before any experience".into()));
        }
        let source = self.algorithm.source();
        let mut n_sc = match source {
            StateSource::None => 0,
            _ => self.cfg.search_control_count(),
        };
        if source == StateSource::HillClimb && n_sc > 0 && self.queue.is_empty() {
            if self.stats.empty_queue_batches == 0 {
                warn!("search-control queue empty at env step {}; using replay only", self.env_steps);
            } else {
                debug!("search-control queue empty at env step {}", self.env_steps);
            }
            self.stats.empty_queue_batches += 1;
            n_sc = 0;
        }
        let mut simulated = Vec::with_capacity(n_sc);
        for _ in 0..n_sc {
            let s = self.planning_state(source);
            let a = self.learner.act_train(&s, self.cfg.epsilon_train, &mut self.rng.search_control)?;
            let out = self.model.query(&s, &a)?;
            simulated.push(Transition {
                s,
                a,
                r: out.reward,
                next: out.next,
                terminal: out.terminal,
            });
        }
        let mut batch: Vec<&Transition> = simulated.iter().collect();
        for _ in n_sc..self.cfg.batch_size {
            batch.push(self.buffer.sample(&mut self.rng.replay));
        }
        let loss = self.learner.update(&batch)?;
        self.stats.planning_updates += 1;
        self.stats.model_samples += n_sc as u64;
        Ok(loss)
    }

    /// Return of one evaluation episode under the ε-greedy evaluation
    /// policy, on the dedicated evaluation stream.
    pub fn evaluate(&mut self) -> Result<f64> {
        let task = self.task.as_ref();
        let rng = &mut self.rng.eval;
        let mut ep = Episode::start(task, rng);
        loop {
            let a = self.learner.act_eval(&ep.state, self.cfg.epsilon_eval, rng)?;
            if ep.advance(task, &a, rng)?.1 != EpisodeEnd::Running {
                return Ok(ep.total_reward);
            }
        }
    }
}
