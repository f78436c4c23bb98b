use std::path::Path;

use serde::Deserialize;
use toml::{Table, Value};

use crate::agent::{AgentConfig, Algorithm};
use crate::envs::{make_task, EnvKind};
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::search_control::StepRule;
use crate::tabular::{Strategy, TabularConfig};

/// What a config runs: a function-approximation agent or the tabular study.
#[derive(Debug, Clone, PartialEq)]
pub enum Setup {
    Agent {
        algorithm: Algorithm,
        model: ModelKind,
        agent: AgentConfig,
    },
    Tabular(TabularConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvKind,
    pub setup: Setup,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    pub eval_every: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    env: String,
    algorithm: String,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    seeds: Option<u64>,
    #[serde(default)]
    first_seed: Option<u64>,
    #[serde(default)]
    total_steps: Option<u64>,
    #[serde(default)]
    eval_every: Option<u64>,
    #[serde(default, rename = "override")]
    overrides: Table,
}

/// Default env-step budget per task.
pub fn default_budget(env: EnvKind) -> u64 {
    match env {
        EnvKind::GridWorld | EnvKind::GridWorldContAction | EnvKind::MountainCar => 100_000,
        EnvKind::CartPole | EnvKind::Acrobot => 50_000,
        EnvKind::TabularGridWorld => 10_000,
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(Error::Config(format!("`{key}` expects a number, got {other}"))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        other => Err(Error::Config(format!("`{key}` expects a non-negative integer, got {other}"))),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    as_u64(key, v).map(|x| x as usize)
}

/// Apply one `[override]` entry to an agent config.
pub fn apply_agent_override(cfg: &mut AgentConfig, key: &str, v: &Value) -> Result<()> {
    match key {
        "rho" => cfg.rho = as_f64(key, v)?,
        "planning_steps" => cfg.planning_steps = as_usize(key, v)?,
        "batch_size" => cfg.batch_size = as_usize(key, v)?,
        "target_sync" => cfg.target_sync = as_u64(key, v)?,
        "learning_rate" => cfg.learning_rate = as_f64(key, v)?,
        "epsilon_train" => cfg.epsilon_train = as_f64(key, v)?,
        "epsilon_eval" => cfg.epsilon_eval = as_f64(key, v)?,
        "warmup" => cfg.warmup = as_u64(key, v)?,
        "gamma" => cfg.gamma = as_f64(key, v)?,
        "er_capacity" => cfg.er_capacity = as_usize(key, v)?,
        "queue_capacity" => cfg.queue_capacity = as_usize(key, v)?,
        "threshold_rate" => cfg.threshold_rate = as_f64(key, v)?,
        "output_init" => cfg.output_init = as_f64(key, v)?,
        "hidden" => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::Config("`hidden` expects an array of widths".into()))?;
            cfg.hidden = arr.iter().map(|w| as_usize(key, w)).collect::<Result<_>>()?;
        }
        "hc_steps" => cfg.hc.steps = as_usize(key, v)?,
        "hc_noise" => cfg.hc.noise = as_f64(key, v)?,
        "hc_step_size" => cfg.hc.step_rule = StepRule::Normalized(as_f64(key, v)?),
        "hc_jitter" => cfg.hc.jitter = as_f64(key, v)?,
        "actor_lr" => cfg.actor_lr = as_f64(key, v)?,
        "critic_lr" => cfg.critic_lr = as_f64(key, v)?,
        "exploration_std" => cfg.exploration_std = as_f64(key, v)?,
        other => return Err(Error::Config(format!("unknown override `{other}`"))),
    }
    Ok(())
}

/// Apply one `[override]` entry to a tabular config.
pub fn apply_tabular_override(cfg: &mut TabularConfig, key: &str, v: &Value) -> Result<()> {
    match key {
        "lr" | "learning_rate" => cfg.lr = as_f64(key, v)?,
        "epsilon" => cfg.epsilon = as_f64(key, v)?,
        "planning_steps" => cfg.planning_steps = as_usize(key, v)?,
        "rho" => cfg.rho = as_f64(key, v)?,
        "hc_steps" => cfg.hc_steps = as_usize(key, v)?,
        "hc_noise_std" => cfg.hc_noise_std = as_f64(key, v)?,
        "er_capacity" => cfg.er_capacity = as_usize(key, v)?,
        "queue_capacity" => cfg.queue_capacity = as_usize(key, v)?,
        "threshold_rate" => cfg.threshold_rate = as_f64(key, v)?,
        "eval_epsilon" => cfg.eval_epsilon = as_f64(key, v)?,
        other => return Err(Error::Config(format!("unknown tabular override `{other}`"))),
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::from_raw(raw)
    }

    pub fn from_table(table: Table) -> Result<Self> {
        Self::from_raw(table.try_into()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let env: EnvKind = raw.env.parse()?;
        let n_seeds = raw.seeds.unwrap_or(1);
        if n_seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        let first = raw.first_seed.unwrap_or(0);
        let total_steps = raw.total_steps.unwrap_or_else(|| default_budget(env));
        let setup = if env == EnvKind::TabularGridWorld {
            if raw.model.as_deref().is_some_and(|m| m != "counted") {
                return Err(Error::Config("the tabular study only supports the counted model".into()));
            }
            let mut cfg = TabularConfig {
                strategy: raw.algorithm.parse::<Strategy>()?,
                total_steps,
                ..TabularConfig::default()
            };
            if let Some(e) = raw.eval_every {
                cfg.eval_every = e;
            }
            for (k, v) in &raw.overrides {
                apply_tabular_override(&mut cfg, k, v)?;
            }
            cfg.validate()?;
            Setup::Tabular(cfg)
        } else {
            let algorithm: Algorithm = raw.algorithm.parse()?;
            let model: ModelKind = raw.model.as_deref().unwrap_or("exact").parse()?;
            let task = make_task(env)?;
            let mut agent = AgentConfig {
                gamma: task.spec().gamma,
                ..AgentConfig::default()
            };
            for (k, v) in &raw.overrides {
                apply_agent_override(&mut agent, k, v)?;
            }
            agent.validate()?;
            Setup::Agent { algorithm, model, agent }
        };
        let eval_every = match &setup {
            Setup::Tabular(c) => c.eval_every,
            Setup::Agent { .. } => raw.eval_every.unwrap_or(1000),
        };
        if eval_every == 0 || total_steps == 0 {
            return Err(Error::Config("total_steps and eval_every must be positive".into()));
        }
        let name = raw.name.unwrap_or_else(|| format!("{}-{}", env, raw.algorithm));
        Ok(Self {
            name,
            env,
            setup,
            seeds: (first..first + n_seeds).collect(),
            total_steps,
            eval_every,
        })
    }

    pub fn algorithm_tag(&self) -> &'static str {
        match &self.setup {
            Setup::Agent { algorithm, .. } => algorithm.tag(),
            Setup::Tabular(c) => c.strategy.tag(),
        }
    }

    pub fn with_seed_count(mut self, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        let first = self.seeds[0];
        self.seeds = (first..first + n).collect();
        Ok(self)
    }

    /// Apply an override after loading (used by sweeps).
    pub fn apply_override(&mut self, key: &str, v: &Value) -> Result<()> {
        match (&mut self.setup, key) {
            (Setup::Agent { algorithm, .. }, "algorithm") => {
                *algorithm = v
                    .as_str()
                    .ok_or_else(|| Error::Config("`algorithm` expects a tag".into()))?
                    .parse()?
            }
            (Setup::Tabular(c), "algorithm") => {
                c.strategy = v
                    .as_str()
                    .ok_or_else(|| Error::Config("`algorithm` expects a tag".into()))?
                    .parse()?
            }
            (Setup::Agent { model, .. }, "model") => {
                *model = v
                    .as_str()
                    .ok_or_else(|| Error::Config("`model` expects exact or learned".into()))?
                    .parse()?
            }
            (Setup::Agent { agent, .. }, k) => {
                apply_agent_override(agent, k, v)?;
                agent.validate()?;
            }
            (Setup::Tabular(c), k) => {
                apply_tabular_override(c, k, v)?;
                c.validate()?;
            }
        }
        Ok(())
    }
}
