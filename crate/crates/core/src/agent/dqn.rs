use rand::Rng;

use crate::envs::Action;
use crate::error::{Error, Result};
use crate::nn::{argmax, Adam, Gradients, Mlp};
use crate::replay::Transition;
use crate::rng::Rng64;

/// ε-greedy over `Q(s, ·)`: uniform with probability `ε`, else the
/// lowest-index argmax.
pub fn act(qnet: &Mlp, s: &[f64], epsilon: f64, rng: &mut Rng64) -> Result<usize> {
    let n = qnet.output_dim();
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..n));
    }
    Ok(argmax(&qnet.forward(s)?))
}

/// `r + γ·max_a' Q_target(s', a')`, or just `r` for a terminal transition.
pub fn td_target(target: &Mlp, t: &Transition, gamma: f64) -> Result<f64> {
    if t.terminal {
        return Ok(t.r);
    }
    let q = target.forward(&t.next)?;
    Ok(t.r + gamma * q[argmax(&q)])
}

/// Gradient of the mean squared TD error over `batch`, accumulated into
/// `grads` (cleared first). Returns the loss.
pub fn td_loss_gradient(
    qnet: &Mlp,
    target: &Mlp,
    batch: &[&Transition],
    gamma: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("q-learning update on an empty batch".into()));
    }
    grads.clear();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut seed = vec![0.0; qnet.output_dim()];
    for t in batch {
        let a = t
            .a
            .discrete()
            .filter(|&a| a < qnet.output_dim())
            .ok_or_else(|| Error::InvalidAction(format!("{:?} in a Q-learning batch", t.a)))?;
        let y = td_target(target, t, gamma)?;
        let trace = qnet.trace(&t.s)?;
        let delta = trace.output()[a] - y;
        loss += delta * delta * scale;
        seed.iter_mut().for_each(|v| *v = 0.0);
        seed[a] = 2.0 * delta * scale;
        qnet.backward(&trace, &seed, Some(grads))?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("TD loss {loss}")));
    }
    Ok(loss)
}

/// One Adam step on the mean squared TD error. Returns the pre-update loss.
pub fn q_learning_update(
    qnet: &mut Mlp,
    target: &Mlp,
    batch: &[&Transition],
    gamma: f64,
    opt: &mut Adam,
    grads: &mut Gradients,
) -> Result<f64> {
    let loss = td_loss_gradient(qnet, target, batch, gamma, grads)?;
    opt.step(qnet, grads)?;
    Ok(loss)
}

/// Q network, its target copy, and the optimizer.
#[derive(Debug, Clone)]
pub struct QLearner {
    pub qnet: Mlp,
    pub target: Mlp,
    pub opt: Adam,
    grads: Gradients,
    pub gamma: f64,
    pub sync_every: u64,
    updates: u64,
}

impl QLearner {
    pub fn new(qnet: Mlp, lr: f64, gamma: f64, sync_every: u64) -> Self {
        Self {
            target: qnet.clone(),
            opt: Adam::new(&qnet, lr),
            grads: Gradients::zeros_like(&qnet),
            qnet,
            gamma,
            sync_every,
            updates: 0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Replace the online network and its target with `net`, keeping the
    /// optimizer state's shape.
    pub fn reset_networks(&mut self, net: Mlp) {
        self.target = net.clone();
        self.qnet = net;
    }

    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let loss = q_learning_update(&mut self.qnet, &self.target, batch, self.gamma, &mut self.opt, &mut self.grads)?;
        self.updates += 1;
        if self.updates % self.sync_every == 0 {
            self.target.clone_from(&self.qnet);
        }
        Ok(loss)
    }

    pub fn act(&self, s: &[f64], epsilon: f64, rng: &mut Rng64) -> Result<Action> {
        act(&self.qnet, s, epsilon, rng).map(Action::Discrete)
    }
}
