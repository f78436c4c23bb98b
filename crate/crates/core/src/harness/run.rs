use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Setup};
use crate::agent::{Agent, AgentStats};
use crate::envs::{make_task, EnvKind, TabularGridWorld, Task};
use crate::error::{Error, Result};
use crate::tabular::{value_iteration, TabularAgent};

/// Environment variable holding the worker count for parallel runs.
pub const WORKERS_ENV: &str = "HCDYNA_WORKERS";

pub const EVAL_COLUMNS: [&str; 5] = ["algorithm", "env", "seed", "env_step", "eval_return"];
pub const SUMMARY_COLUMNS: [&str; 6] = ["algorithm", "env", "env_step", "mean", "stderr", "n"];

/// One evaluation point; the column order is the per-seed CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub algorithm: String,
    pub env: String,
    pub seed: u64,
    pub env_step: u64,
    pub eval_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub env: String,
    pub env_step: u64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    pub wall_ms: u128,
    pub status: RunStatus,
    pub stats: Option<AgentStats>,
}

impl RunLog {
    pub fn returns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eval_return).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub runs: Vec<RunLog>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn completed(&self) -> impl Iterator<Item = &RunLog> {
        self.runs.iter().filter(|r| r.status == RunStatus::Completed)
    }
}

/// Mean and standard error across seeds at every `(algorithm, env, env_step)`.
/// The standard error uses the sample standard deviation and is 0 for one seed.
pub fn summarize(rows: &[EvalRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, u64)> = Vec::new();
    for r in rows {
        let k = (r.algorithm.clone(), r.env.clone(), r.env_step);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort_by(|a, b| (&a.0, &a.1, a.2).cmp(&(&b.0, &b.1, b.2)));
    keys.into_iter()
        .map(|(algorithm, env, env_step)| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.algorithm == algorithm && r.env == env && r.env_step == env_step)
                .map(|r| r.eval_return)
                .collect();
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                algorithm,
                env,
                env_step,
                mean,
                stderr,
                n,
            }
        })
        .collect()
}

/// Area under the evaluation curve: the mean evaluation return.
pub fn area_under_curve(returns: &[f64]) -> f64 {
    returns.iter().sum::<f64>() / returns.len().max(1) as f64
}

struct SeedSink {
    writer: Option<csv::Writer<File>>,
}

impl SeedSink {
    fn new(dir: Option<&Path>, seed: u64) -> Result<Self> {
        let writer = match dir {
            Some(d) => {
                let mut w = csv::WriterBuilder::new()
                    .has_headers(false)
                    .from_path(d.join(format!("{seed}.csv")))?;
                w.write_record(EVAL_COLUMNS)?;
                w.flush()?;
                Some(w)
            }
            None => None,
        };
        Ok(Self { writer })
    }

    fn push(&mut self, row: &EvalRow) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.serialize(row)?;
            w.flush()?;
        }
        Ok(())
    }
}

pub fn build_agent(cfg: &ExperimentConfig, seed: u64) -> Result<Agent> {
    match &cfg.setup {
        Setup::Agent { algorithm, model, agent } => {
            let task: Arc<dyn Task> = Arc::from(make_task(cfg.env)?);
            Agent::new(task, *algorithm, *model, agent.clone(), seed)
        }
        Setup::Tabular(_) => Err(Error::Config("tabular configs have no function-approximation agent".into())),
    }
}

/// Drive `agent` to `total_steps`, calling `on_eval` at every evaluation
/// point. Evaluation rows are also handed to `sink`.
fn drive_agent(
    cfg: &ExperimentConfig,
    agent: &mut Agent,
    seed: u64,
    rows: &mut Vec<EvalRow>,
    sink: &mut SeedSink,
) -> Result<()> {
    while agent.env_steps() < cfg.total_steps {
        agent.step()?;
        if agent.env_steps() % cfg.eval_every == 0 {
            let row = EvalRow {
                algorithm: cfg.algorithm_tag().to_string(),
                env: cfg.env.tag().to_string(),
                seed,
                env_step: agent.env_steps(),
                eval_return: agent.evaluate()?,
            };
            sink.push(&row)?;
            rows.push(row);
        }
    }
    Ok(())
}

fn drive_tabular(
    cfg: &ExperimentConfig,
    agent: &mut TabularAgent,
    seed: u64,
    rows: &mut Vec<EvalRow>,
    sink: &mut SeedSink,
) -> Result<()> {
    while agent.env_steps() < cfg.total_steps {
        agent.step()?;
        if agent.env_steps() % cfg.eval_every == 0 {
            let row = EvalRow {
                algorithm: cfg.algorithm_tag().to_string(),
                env: cfg.env.tag().to_string(),
                seed,
                env_step: agent.env_steps(),
                eval_return: agent.evaluate(),
            };
            sink.push(&row)?;
            rows.push(row);
        }
    }
    Ok(())
}

/// One seed of an experiment. Errors inside the run are recorded in the
/// returned log rather than propagated; only output failures are errors.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: Option<&Path>, vstar: Option<Arc<Vec<f64>>>) -> Result<RunLog> {
    let start = Instant::now();
    let mut sink = SeedSink::new(dir, seed)?;
    let mut rows = Vec::new();
    let (outcome, stats) = match &cfg.setup {
        Setup::Agent { .. } => match build_agent(cfg, seed) {
            Ok(mut agent) => {
                let r = drive_agent(cfg, &mut agent, seed, &mut rows, &mut sink);
                (r, Some(agent.stats().clone()))
            }
            Err(e) => (Err(e), None),
        },
        Setup::Tabular(tc) => {
            let tc = crate::tabular::TabularConfig {
                total_steps: cfg.total_steps,
                eval_every: cfg.eval_every,
                ..tc.clone()
            };
            match TabularAgent::new(TabularGridWorld::default(), tc, vstar, seed) {
                Ok(mut agent) => (drive_tabular(cfg, &mut agent, seed, &mut rows, &mut sink), None),
                Err(e) => (Err(e), None),
            }
        }
    };
    let status = match outcome {
        Ok(()) => RunStatus::Completed,
        Err(e @ (Error::Io(_) | Error::Csv(_))) => return Err(e),
        Err(e) => {
            warn!("{} seed {seed} failed: {e}", cfg.name);
            RunStatus::Failed(e.to_string())
        }
    };
    let wall_ms = start.elapsed().as_millis();
    if let Some(d) = dir {
        let mut t = File::create(d.join(format!("{seed}.timing.csv")))?;
        writeln!(t, "seed,wall_ms")?;
        writeln!(t, "{seed},{wall_ms}")?;
    }
    Ok(RunLog {
        seed,
        rows,
        wall_ms,
        status,
        stats,
    })
}

/// Run `f` on a rayon pool sized by [`WORKERS_ENV`] (default: all cores).
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn experiment_dir(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

/// All seeds of `cfg` in parallel. With `out`, writes
/// `<out>/<name>/<seed>.csv`, `<seed>.timing.csv`, `merged.csv`,
/// `summary.csv` and, if any seed failed, `failures.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    let dir = match out {
        Some(o) => {
            let d = experiment_dir(o, &cfg.name);
            fs::create_dir_all(&d)?;
            Some(d)
        }
        None => None,
    };
    let vstar = match &cfg.setup {
        Setup::Tabular(tc) if tc.strategy.needs_vstar() => Some(Arc::new(value_iteration(&TabularGridWorld::default())?)),
        _ => None,
    };
    info!("running {} over {} seeds", cfg.name, cfg.seeds.len());
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed, dir.as_deref(), vstar.clone()))
        .collect::<Result<Vec<_>>>()?;
    let completed: Vec<EvalRow> = runs
        .iter()
        .filter(|r| r.status == RunStatus::Completed)
        .flat_map(|r| r.rows.iter().cloned())
        .collect();
    let summary = summarize(&completed);
    if let Some(d) = &dir {
        write_table(&d.join("merged.csv"), &EVAL_COLUMNS, runs.iter().flat_map(|r| r.rows.iter()))?;
        write_table(&d.join("summary.csv"), &SUMMARY_COLUMNS, summary.iter())?;
        let failed: Vec<&RunLog> = runs.iter().filter(|r| r.status != RunStatus::Completed).collect();
        if !failed.is_empty() {
            let mut w = csv::Writer::from_path(d.join("failures.csv"))?;
            w.write_record(["seed", "error"])?;
            for r in failed {
                if let RunStatus::Failed(msg) = &r.status {
                    w.write_record([r.seed.to_string(), msg.clone()])?;
                }
            }
            w.flush()?;
        }
    }
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        runs,
        summary,
    })
}

pub fn write_rows<'a, T: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Like [`write_rows`] but with an explicit header, so an empty table still
/// carries its schema.
pub fn write_table<'a, T: Serialize + 'a>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a per-seed or merged CSV back, checking the header.
pub fn read_eval_rows(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let expected = EVAL_COLUMNS;
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Config(format!("{} has header {:?}, expected {:?}", path.display(), header, expected)));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn env_is_tabular(env: EnvKind) -> bool {
    env == EnvKind::TabularGridWorld
}
