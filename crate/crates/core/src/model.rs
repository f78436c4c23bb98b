//! Planning models `(s, a) -> (s', r, terminal)`.
//!
//! [`ExactModel`] calls the task's own dynamics. [`LearnedDiffModel`] is a
//! network trained online from replay to predict `s' - s`; its reward and
//! termination come from the task's known reward rule and termination
//! predicate. Model queries never report truncation.

use std::sync::Arc;

use log::debug;

use crate::envs::{Action, Outcome, Task};
use crate::error::Result;
use crate::nn::{Adam, Gradients, Mlp, OutputActivation};
use crate::replay::ErBuffer;
use crate::rng::Rng64;

pub const MODEL_HIDDEN: usize = 64;
pub const MODEL_LR: f64 = 1e-4;
pub const MODEL_BATCH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Exact,
    Learned,
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ModelKind::Exact),
            "learned" => Ok(ModelKind::Learned),
            other => Err(crate::Error::Config(format!("unknown model `{other}` (exact | learned)"))),
        }
    }
}

pub trait EnvModel: Send {
    fn query(&mut self, s: &[f64], a: &Action) -> Result<Outcome>;

    /// One online training step; exact models ignore it.
    fn train_step(&mut self, _buffer: &ErBuffer) -> Result<()> {
        Ok(())
    }
}

pub struct ExactModel {
    task: Arc<dyn Task>,
    rng: Rng64,
}

impl ExactModel {
    pub fn new(task: Arc<dyn Task>, rng: Rng64) -> Self {
        Self { task, rng }
    }
}

impl EnvModel for ExactModel {
    fn query(&mut self, s: &[f64], a: &Action) -> Result<Outcome> {
        if self.task.is_feasible(s) {
            return self.task.step(s, a, &mut self.rng);
        }
        let mut p = s.to_vec();
        self.task.project(&mut p);
        debug!("exact model queried at infeasible state {s:?}; projected to {p:?}");
        self.task.step(&p, a, &mut self.rng)
    }
}

pub struct LearnedDiffModel {
    task: Arc<dyn Task>,
    net: Mlp,
    adam: Adam,
    batch: usize,
    rng: Rng64,
    input: Vec<f64>,
}

impl LearnedDiffModel {
    /// Two 64-unit rectifier layers; input is `s` concatenated with the action encoding.
    pub fn new(task: Arc<dyn Task>, mut rng: Rng64) -> Result<Self> {
        let spec = task.spec();
        let in_dim = spec.state_dim + spec.action_space.encoding_dim();
        let net = Mlp::xavier(
            &[in_dim, MODEL_HIDDEN, MODEL_HIDDEN, spec.state_dim],
            0.0003,
            OutputActivation::Linear,
            &mut rng,
        )?;
        let adam = Adam::new(&net, MODEL_LR);
        Ok(Self {
            task,
            net,
            adam,
            batch: MODEL_BATCH,
            rng,
            input: Vec::new(),
        })
    }

    pub fn with_net(mut self, net: Mlp) -> Self {
        self.adam = Adam::new(&net, self.adam.lr);
        self.net = net;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.adam.lr = lr;
        self
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    fn encode(&mut self, s: &[f64], a: &Action) {
        self.input.clear();
        self.input.extend_from_slice(s);
        a.encode(self.task.spec().action_space, &mut self.input);
    }

    /// Raw network output: the predicted `s' - s`.
    pub fn predict_delta(&mut self, s: &[f64], a: &Action) -> Result<Vec<f64>> {
        self.encode(s, a);
        self.net.forward(&self.input)
    }

    /// Mean over batch and coordinates of the squared `s' - s` error.
    pub fn loss_on(&mut self, batch: &[&crate::replay::Transition]) -> Result<f64> {
        let d = self.task.spec().state_dim;
        let mut total = 0.0;
        for t in batch {
            let pred = self.predict_delta(&t.s, &t.a)?;
            for j in 0..d {
                let e = pred[j] - (t.next[j] - t.s[j]);
                total += e * e;
            }
        }
        Ok(total / (batch.len() * d) as f64)
    }

    /// One Adam step on a uniformly drawn mini-batch; a no-op until the buffer
    /// holds a full batch. Returns the pre-step batch loss when a step was taken.
    pub fn fit_batch(&mut self, buffer: &ErBuffer) -> Result<Option<f64>> {
        if buffer.len() < self.batch {
            return Ok(None);
        }
        let d = self.task.spec().state_dim;
        let scale = 2.0 / (self.batch * d) as f64;
        let mut grads = Gradients::zeros_like(&self.net);
        let mut loss = 0.0;
        let mut out_grad = vec![0.0; d];
        for _ in 0..self.batch {
            let t = buffer.sample(&mut self.rng);
            self.input.clear();
            self.input.extend_from_slice(&t.s);
            t.a.encode(self.task.spec().action_space, &mut self.input);
            let trace = self.net.trace(&self.input)?;
            for j in 0..d {
                let e = trace.output()[j] - (t.next[j] - t.s[j]);
                loss += e * e;
                out_grad[j] = scale * e;
            }
            self.net.backward(&trace, &out_grad, Some(&mut grads))?;
        }
        self.adam.step(&mut self.net, &grads)?;
        Ok(Some(loss / (self.batch * d) as f64))
    }
}

impl EnvModel for LearnedDiffModel {
    fn query(&mut self, s: &[f64], a: &Action) -> Result<Outcome> {
        let delta = self.predict_delta(s, a)?;
        let mut next: Vec<f64> = s.iter().zip(&delta).map(|(x, d)| x + d).collect();
        self.task.project(&mut next);
        Ok(Outcome {
            reward: self.task.reward(s, &next),
            terminal: self.task.is_terminal(&next),
            next,
        })
    }

    fn train_step(&mut self, buffer: &ErBuffer) -> Result<()> {
        self.fit_batch(buffer).map(|_| ())
    }
}
