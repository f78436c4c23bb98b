use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, Setup};
use super::run::{build_agent, write_rows, write_table, EvalRow, RunLog, RunStatus, EVAL_COLUMNS};
use crate::agent::{Agent, Algorithm};
use crate::envs::{Cell, TabularGridWorld, GOAL_LOW};
use crate::error::{check_dim, Error, Result};
use crate::rng::{stream, Stream};
use crate::search_control::{climb_trajectory, HcConfig};
use crate::tabular::{value_iteration, PlanningOrigin, TabularAgent};

pub const SURFACE_STARTS: [[f64; 2]; 5] = [[0.1, 0.1], [0.9, 0.9], [0.1, 0.9], [0.9, 0.1], [0.3, 0.4]];
pub const SURFACE_CHECKPOINTS: [u64; 3] = [0, 14_000, 20_000];
pub const SURFACE_GRID: usize = 50;
pub const ASCENT_STEPS: usize = 100;
pub const SNAPSHOT_SAMPLES: usize = 2000;
/// Lower corner of the goal rectangle dilated by 0.1.
pub const DILATED_GOAL_LOW: f64 = GOAL_LOW - 0.1;

/// Step the agent until it has made at least `updates` learning updates.
pub fn train_until_updates(agent: &mut Agent, updates: u64) -> Result<()> {
    while agent.updates() < updates {
        agent.step()?;
    }
    Ok(())
}

pub fn train_until_step(agent: &mut Agent, env_step: u64) -> Result<()> {
    while agent.env_steps() < env_step {
        agent.step()?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub start: usize,
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSnapshot {
    pub updates: u64,
    pub grid: Vec<GridPoint>,
    /// Per start: the start itself followed by the ascent iterates.
    pub trajectories: Vec<Vec<TrajectoryPoint>>,
}

impl SurfaceSnapshot {
    pub fn start_value(&self, i: usize) -> f64 {
        self.trajectories[i][0].value
    }

    pub fn end(&self, i: usize) -> &TrajectoryPoint {
        self.trajectories[i].last().expect("trajectory includes its start")
    }
}

/// `V̂` on an `n × n` lattice covering `[0, 1]²` including the edges.
pub fn value_grid(agent: &Agent, n: usize) -> Result<Vec<GridPoint>> {
    check_dim(2, agent.task().spec().state_dim)?;
    let surface = agent.surface();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64);
            out.push(GridPoint {
                x,
                y,
                value: surface.value(&[x, y])?,
            });
        }
    }
    Ok(out)
}

/// Noise-free preconditioned ascent on the agent's current `V̂` from each
/// start, using the agent's state covariance.
pub fn ascent_trajectories(agent: &Agent, starts: &[[f64; 2]], steps: usize) -> Result<Vec<Vec<TrajectoryPoint>>> {
    let cfg = HcConfig {
        steps,
        noise: 0.0,
        ..agent.config().hc
    };
    let metric = agent.tracker().preconditioner(cfg.jitter);
    let surface = agent.surface();
    let task = agent.task();
    let project = |x: &mut [f64]| {
        task.project(x);
    };
    let mut rng = stream(0, Stream::HillClimb);
    starts
        .iter()
        .enumerate()
        .map(|(k, s0)| {
            let path = climb_trajectory(surface.as_ref(), s0, &metric, &cfg, &project, &mut rng)?;
            std::iter::once(s0.to_vec())
                .chain(path)
                .enumerate()
                .map(|(step, s)| {
                    Ok(TrajectoryPoint {
                        start: k,
                        step,
                        x: s[0],
                        y: s[1],
                        value: surface.value(&s)?,
                    })
                })
                .collect()
        })
        .collect()
}

/// Train a 2-D agent and capture the value surface and five ascent
/// trajectories at each checkpoint (in learning updates). With `out`, writes
/// `surface_<u>.csv`, `trajectories_<u>.csv` and `qnet_<u>.hcnn`.
pub fn scenario_value_surface(
    cfg: &ExperimentConfig,
    seed: u64,
    checkpoints: &[u64],
    out: Option<&Path>,
) -> Result<Vec<SurfaceSnapshot>> {
    let mut agent = build_agent(cfg, seed)?;
    if let Some(d) = out {
        fs::create_dir_all(d)?;
    }
    let mut snaps = Vec::with_capacity(checkpoints.len());
    for &u in checkpoints {
        train_until_updates(&mut agent, u)?;
        let snap = SurfaceSnapshot {
            updates: agent.updates(),
            grid: value_grid(&agent, SURFACE_GRID)?,
            trajectories: ascent_trajectories(&agent, &SURFACE_STARTS, ASCENT_STEPS)?,
        };
        if let Some(d) = out {
            write_rows(&d.join(format!("surface_{u}.csv")), snap.grid.iter())?;
            write_rows(&d.join(format!("trajectories_{u}.csv")), snap.trajectories.iter().flatten())?;
            if let Some(q) = agent.q_network() {
                q.save(d.join(format!("qnet_{u}.hcnn")))?;
            }
        }
        snaps.push(snap);
    }
    Ok(snaps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegationReport {
    /// Largest `|Q_after + Q_before|` over the probe lattice and all actions.
    pub max_flip_error: f64,
    pub logs: Vec<(Algorithm, RunLog)>,
}

/// Train to `negate_at` updates, negate the Q network's output layer, then
/// continue each of `algorithms` from that identical state for
/// `continue_steps` env steps. With `out`, writes `negated.csv` and the
/// corrupted checkpoint.
pub fn scenario_negated_recovery(
    cfg: &ExperimentConfig,
    seed: u64,
    negate_at: u64,
    continue_steps: u64,
    algorithms: &[Algorithm],
    out: Option<&Path>,
) -> Result<NegationReport> {
    let mut base = build_agent(cfg, seed)?;
    train_until_updates(&mut base, negate_at)?;
    let before = base
        .q_network()
        .ok_or_else(|| Error::Config("negated recovery needs a Q-network agent".into()))?
        .clone();
    let mut flipped = before.clone();
    flipped.negate_output_layer();
    let d = base.task().spec().state_dim;
    let mut max_flip_error: f64 = 0.0;
    let mut rng = stream(seed, Stream::Eval);
    for _ in 0..500 {
        let probe = base.task().sample_uniform_state(&vec![(-1.0, 1.0); d], &mut rng);
        for (a, b) in before.forward(&probe)?.iter().zip(flipped.forward(&probe)?) {
            max_flip_error = max_flip_error.max((a + b).abs());
        }
    }
    base.set_q_network(flipped.clone())?;
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        flipped.save(o.join("negated_qnet.hcnn"))?;
    }
    let mut logs = Vec::new();
    for &alg in algorithms {
        let mut agent = base.fork(alg)?;
        let mut rows = Vec::new();
        let start = std::time::Instant::now();
        let target = agent.env_steps() + continue_steps;
        let mut status = RunStatus::Completed;
        while agent.env_steps() < target {
            if let Err(e) = agent.step() {
                status = RunStatus::Failed(e.to_string());
                break;
            }
            if agent.env_steps() % cfg.eval_every == 0 {
                rows.push(EvalRow {
                    algorithm: alg.tag().to_string(),
                    env: cfg.env.tag().to_string(),
                    seed,
                    env_step: agent.env_steps(),
                    eval_return: agent.evaluate()?,
                });
            }
        }
        logs.push((
            alg,
            RunLog {
                seed,
                rows,
                wall_ms: start.elapsed().as_millis(),
                status,
                stats: Some(agent.stats().clone()),
            },
        ));
    }
    if let Some(o) = out {
        write_table(&o.join("negated.csv"), &EVAL_COLUMNS, logs.iter().flat_map(|(_, l)| l.rows.iter()))?;
    }
    Ok(NegationReport { max_flip_error, logs })
}

/// Fraction of 2-D states with both coordinates at least `low`.
pub fn fraction_in_region(states: &[Vec<f64>], low: f64) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    states.iter().filter(|s| s.iter().all(|&x| x >= low)).count() as f64 / states.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotReport {
    pub env_step: u64,
    pub er_states: Vec<Vec<f64>>,
    pub sc_states: Vec<Vec<f64>>,
    pub er_fraction: f64,
    pub sc_fraction: f64,
}

#[derive(Serialize)]
struct SnapshotSummary<'a> {
    source: &'a str,
    n: usize,
    fraction_in_region: f64,
}

/// Uniform samples from the replay buffer and the search-control queue of
/// a trained agent, and the share of each inside the dilated GridWorld goal
/// region (meaningless for other tasks).
pub fn queue_snapshot(agent: &Agent, n: usize, seed: u64) -> SnapshotReport {
    let mut rng = stream(seed, Stream::Eval);
    let er_states: Vec<Vec<f64>> = (0..n).map(|_| agent.buffer().sample(&mut rng).s.clone()).collect();
    let sc_states: Vec<Vec<f64>> = if agent.queue().is_empty() {
        Vec::new()
    } else {
        (0..n).map(|_| agent.queue().sample(&mut rng).to_vec()).collect()
    };
    SnapshotReport {
        env_step: agent.env_steps(),
        er_fraction: fraction_in_region(&er_states, DILATED_GOAL_LOW),
        sc_fraction: fraction_in_region(&sc_states, DILATED_GOAL_LOW),
        er_states,
        sc_states,
    }
}

/// Train to `at_step` env steps and take a [`queue_snapshot`]. With `out`,
/// writes `snapshot_er.csv`, `snapshot_sc.csv` and `snapshot.csv`.
pub fn scenario_queue_snapshot(cfg: &ExperimentConfig, seed: u64, at_step: u64, out: Option<&Path>) -> Result<SnapshotReport> {
    let mut agent = build_agent(cfg, seed)?;
    train_until_step(&mut agent, at_step)?;
    let report = queue_snapshot(&agent, SNAPSHOT_SAMPLES, seed);
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        let d = agent.task().spec().state_dim;
        write_states(&o.join("snapshot_er.csv"), d, &report.er_states)?;
        write_states(&o.join("snapshot_sc.csv"), d, &report.sc_states)?;
        write_rows(
            &o.join("snapshot.csv"),
            [
                SnapshotSummary {
                    source: "er",
                    n: report.er_states.len(),
                    fraction_in_region: report.er_fraction,
                },
                SnapshotSummary {
                    source: "sc",
                    n: report.sc_states.len(),
                    fraction_in_region: report.sc_fraction,
                },
            ]
            .iter(),
        )?;
    }
    Ok(report)
}

/// States as CSV with columns `s0, s1, ...`; an empty set still gets the header.
pub fn write_states(path: &Path, d: usize, states: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..d).map(|i| format!("s{i}")))?;
    for s in states {
        w.write_record(s.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub cell: usize,
    pub row: usize,
    pub col: usize,
    pub count: u64,
    pub vstar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularHistograms {
    pub search_control: Vec<HistogramRow>,
    pub replay: Vec<HistogramRow>,
}

impl TabularHistograms {
    /// Count-weighted mean of the optimal values.
    pub fn mean_vstar(rows: &[HistogramRow]) -> f64 {
        let n: u64 = rows.iter().map(|r| r.count).sum();
        rows.iter().map(|r| r.count as f64 * r.vstar).sum::<f64>() / n.max(1) as f64
    }
}

/// Train a tabular agent for the configured budget and histogram `n` draws
/// from its search-control queue and from its replay buffer. With `out`,
/// writes `histogram_sc.csv` and `histogram_er.csv`.
pub fn scenario_tabular_histograms(cfg: &ExperimentConfig, seed: u64, n: usize, out: Option<&Path>) -> Result<TabularHistograms> {
    let Setup::Tabular(tc) = &cfg.setup else {
        return Err(Error::Config("histograms need a tabular config".into()));
    };
    let env = TabularGridWorld::default();
    let vstar = std::sync::Arc::new(value_iteration(&env)?);
    let tc = crate::tabular::TabularConfig {
        total_steps: cfg.total_steps,
        ..tc.clone()
    };
    let mut agent = TabularAgent::new(env.clone(), tc, Some(vstar.clone()), seed)?;
    while agent.env_steps() < cfg.total_steps {
        agent.step()?;
    }
    let mut rng = stream(seed, Stream::Eval);
    let rows = |h: Vec<u64>| -> Vec<HistogramRow> {
        h.into_iter()
            .enumerate()
            .map(|(cell, count)| {
                let (col, row) = env.col_row(Cell(cell));
                HistogramRow {
                    cell,
                    row,
                    col,
                    count,
                    vstar: vstar[cell],
                }
            })
            .collect()
    };
    let report = TabularHistograms {
        search_control: rows(agent.histogram(PlanningOrigin::SearchControl, n, &mut rng)),
        replay: rows(agent.histogram(PlanningOrigin::Replay, n, &mut rng)),
    };
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        write_rows(&o.join("histogram_sc.csv"), report.search_control.iter())?;
        write_rows(&o.join("histogram_er.csv"), report.replay.iter())?;
    }
    Ok(report)
}
