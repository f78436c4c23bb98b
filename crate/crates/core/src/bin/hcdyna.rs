use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use hcdyna::agent::Algorithm;
use hcdyna::envs::EnvKind;
use hcdyna::harness::scenarios::{
    scenario_negated_recovery, scenario_queue_snapshot, scenario_tabular_histograms, scenario_value_surface,
    SNAPSHOT_SAMPLES, SURFACE_CHECKPOINTS,
};
use hcdyna::harness::{run_experiment, run_grid, with_workers, ExperimentConfig, GridSpec, Setup};
use hcdyna::Result;

#[derive(Parser)]
#[command(name = "hcdyna", version, about = "Dyna with hill-climbing search-control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config over its seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of seeds.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run every point of a grid file.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Sample the replay buffer and the search-control queue of a trained
    /// agent (cell histograms for the tabular study).
    Snapshot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Env step at which to sample (defaults to the config budget).
        #[arg(long)]
        at_step: Option<u64>,
        #[arg(long, default_value = "results/snapshot")]
        out: PathBuf,
    },
    /// Dump the value surface and noise-free ascent paths at checkpoints.
    Surface {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Learning-update counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<u64>>,
        #[arg(long, default_value = "results/surface")]
        out: PathBuf,
    },
    /// Negate the output layer mid-training and compare recovery.
    NegateRecovery {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20_000)]
        negate_at: u64,
        #[arg(long, default_value_t = 20_000)]
        continue_steps: u64,
        #[arg(long, value_delimiter = ',', default_value = "hc-dyna,dqn,onpolicy-dyna")]
        algorithms: Vec<Algorithm>,
        #[arg(long, default_value = "results/negated")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seeds, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(n) = seeds {
                cfg = cfg.with_seed_count(n)?;
            }
            let report = with_workers(|| run_experiment(&cfg, Some(&out)))??;
            let failed = report.runs.len() - report.completed().count();
            info!("{}: {} seeds completed, {failed} failed", report.name, report.completed().count());
            if let Some(last) = report.summary.last() {
                println!(
                    "{} {} step {}: mean {:.3} +- {:.3} (n={})",
                    last.algorithm, last.env, last.env_step, last.mean, last.stderr, last.n
                );
            }
        }
        Command::Sweep { grid, out } => {
            let spec = GridSpec::load(&grid)?;
            let rows = with_workers(|| run_grid(&spec, Some(&out)))??;
            for r in rows {
                println!("{:<40} {:>12.3} {:>12.3}", r.label, r.final_mean, r.auc);
            }
        }
        Command::Snapshot { config, seed, at_step, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            if let Setup::Tabular(_) = cfg.setup {
                let cfg = ExperimentConfig {
                    total_steps: at_step.unwrap_or(cfg.total_steps),
                    ..cfg
                };
                let h = scenario_tabular_histograms(&cfg, seed, SNAPSHOT_SAMPLES, Some(&out))?;
                println!(
                    "mean V* of sampled cells: search-control {:.3}, replay {:.3}",
                    hcdyna::harness::scenarios::TabularHistograms::mean_vstar(&h.search_control),
                    hcdyna::harness::scenarios::TabularHistograms::mean_vstar(&h.replay)
                );
            } else {
                let r = scenario_queue_snapshot(&cfg, seed, at_step.unwrap_or(cfg.total_steps), Some(&out))?;
                if matches!(cfg.env, EnvKind::GridWorld | EnvKind::GridWorldContAction) {
                    println!(
                        "step {}: fraction near goal, replay {:.4}, search-control {:.4}",
                        r.env_step, r.er_fraction, r.sc_fraction
                    );
                } else {
                    println!("step {}: wrote {} replay and {} queue states", r.env_step, r.er_states.len(), r.sc_states.len());
                }
            }
        }
        Command::Surface { config, seed, checkpoints, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let cps = checkpoints.unwrap_or_else(|| SURFACE_CHECKPOINTS.to_vec());
            for snap in scenario_value_surface(&cfg, seed, &cps, Some(&out))? {
                let ends: Vec<String> = (0..snap.trajectories.len())
                    .map(|i| {
                        let e = snap.end(i);
                        format!("({:.2}, {:.2})", e.x, e.y)
                    })
                    .collect();
                println!("updates {}: ascent end points {}", snap.updates, ends.join(" "));
            }
        }
        Command::NegateRecovery {
            config,
            seed,
            negate_at,
            continue_steps,
            algorithms,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = scenario_negated_recovery(&cfg, seed, negate_at, continue_steps, &algorithms, Some(&out))?;
            println!("max |Q_after + Q_before| = {:e}", report.max_flip_error);
            for (alg, log) in &report.logs {
                let r = log.returns();
                println!("{alg}: final eval {:?}", r.last());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
