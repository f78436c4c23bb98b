use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::nn::{Adam, Gradients, Mlp};
use crate::replay::Transition;
use crate::rng::Rng64;
use crate::search_control::ValueSurface;

pub const ACTOR_LR: f64 = 1e-4;
pub const CRITIC_LR: f64 = 1e-3;
pub const EXPLORATION_STD: f64 = 0.1;

fn critic_input(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend_from_slice(a);
    x
}

fn continuous(t: &Transition) -> Result<&[f64]> {
    match &t.a {
        crate::envs::Action::Continuous(a) => Ok(a),
        other => Err(Error::InvalidAction(format!("{other:?} in a DDPG batch"))),
    }
}

pub fn q_value(actor: &Mlp, critic: &Mlp, s: &[f64]) -> Result<f64> {
    let a = actor.forward(s)?;
    Ok(critic.forward(&critic_input(s, &a))?[0])
}

/// `∂Q(s, a*)/∂s` with `a* = π(s)` held fixed: the gradient does not flow
/// through the actor.
pub fn ddpg_value_gradient(actor: &Mlp, critic: &Mlp, s: &[f64]) -> Result<Vec<f64>> {
    let a = actor.forward(s)?;
    let mut g = critic.input_gradient(&critic_input(s, &a), 0)?;
    g.truncate(s.len());
    Ok(g)
}

/// `V(s) = Q(s, π(s))` climbed with [`ddpg_value_gradient`].
#[derive(Debug, Clone, Copy)]
pub struct DdpgSurface<'a> {
    pub actor: &'a Mlp,
    pub critic: &'a Mlp,
}

impl ValueSurface for DdpgSurface<'_> {
    fn value(&self, s: &[f64]) -> Result<f64> {
        q_value(self.actor, self.critic, s)
    }

    fn gradient(&self, s: &[f64]) -> Result<Vec<f64>> {
        ddpg_value_gradient(self.actor, self.critic, s)
    }
}

/// Gradient of `-mean_s Q(s, π(s))` with respect to the actor's parameters,
/// accumulated into `grads` (cleared first).
pub fn actor_gradient(actor: &Mlp, critic: &Mlp, states: &[&[f64]], grads: &mut Gradients) -> Result<()> {
    grads.clear();
    let scale = 1.0 / states.len() as f64;
    for s in states {
        let trace = actor.trace(s)?;
        let x = critic_input(s, trace.output());
        let dq = critic.input_gradient(&x, 0)?;
        let seed: Vec<f64> = dq[s.len()..].iter().map(|g| -g * scale).collect();
        actor.backward(&trace, &seed, Some(grads))?;
    }
    Ok(())
}

/// Gradient of the critic's mean squared error against
/// `r + γ(1−terminal)·Q_target(s', π_target(s'))`. Returns the loss.
pub fn critic_gradient(
    critic: &Mlp,
    actor_target: &Mlp,
    critic_target: &Mlp,
    batch: &[&Transition],
    gamma: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    grads.clear();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let a = continuous(t)?;
        let y = if t.terminal {
            t.r
        } else {
            t.r + gamma * q_value(actor_target, critic_target, &t.next)?
        };
        let trace = critic.trace(&critic_input(&t.s, a))?;
        let delta = trace.output()[0] - y;
        loss += delta * delta * scale;
        critic.backward(&trace, &[2.0 * delta * scale], Some(grads))?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("critic loss {loss}")));
    }
    Ok(loss)
}

/// Actor, critic, their targets, and optimizers.
#[derive(Debug, Clone)]
pub struct DdpgLearner {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    actor_grads: Gradients,
    critic_grads: Gradients,
    pub gamma: f64,
    pub sync_every: u64,
    pub exploration_std: f64,
    updates: u64,
}

impl DdpgLearner {
    pub fn new(actor: Mlp, critic: Mlp, gamma: f64, sync_every: u64) -> Result<Self> {
        check_dim(critic.input_dim(), actor.input_dim() + actor.output_dim())?;
        check_dim(1, critic.output_dim())?;
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: Adam::new(&actor, ACTOR_LR),
            critic_opt: Adam::new(&critic, CRITIC_LR),
            actor_grads: Gradients::zeros_like(&actor),
            critic_grads: Gradients::zeros_like(&critic),
            actor,
            critic,
            gamma,
            sync_every,
            exploration_std: EXPLORATION_STD,
            updates: 0,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn surface(&self) -> DdpgSurface<'_> {
        DdpgSurface {
            actor: &self.actor,
            critic: &self.critic,
        }
    }

    /// Gaussian-perturbed policy action clipped to `[-1, 1]`.
    pub fn act_explore(&self, s: &[f64], rng: &mut Rng64) -> Result<Vec<f64>> {
        let mut a = self.actor.forward(s)?;
        for x in &mut a {
            let z: f64 = rng.sample(StandardNormal);
            *x = (*x + self.exploration_std * z).clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let loss = ddpg_update(self, batch)?;
        self.updates += 1;
        if self.updates % self.sync_every == 0 {
            self.actor_target.clone_from(&self.actor);
            self.critic_target.clone_from(&self.critic);
        }
        Ok(loss)
    }
}

/// Critic regression step followed by a deterministic policy gradient step
/// on the actor. Target networks are left to the caller. Returns the critic loss.
pub fn ddpg_update(l: &mut DdpgLearner, batch: &[&Transition]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("DDPG update on an empty batch".into()));
    }
    let loss = critic_gradient(&l.critic, &l.actor_target, &l.critic_target, batch, l.gamma, &mut l.critic_grads)?;
    l.critic_opt.step(&mut l.critic, &l.critic_grads)?;
    let states: Vec<&[f64]> = batch.iter().map(|t| t.s.as_slice()).collect();
    actor_gradient(&l.actor, &l.critic, &states, &mut l.actor_grads)?;
    l.actor_opt.step(&mut l.actor, &l.actor_grads)?;
    Ok(loss)
}
