//! Acceptance suite. Runs every criterion, prints one `PASS`/`FAIL` line
//! each, and exits non-zero if any failed. Pass criterion ids (e.g. `AC-4`)
//! as arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use proptest::prelude::prop_assert;
use proptest::strategy::Strategy as _;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use hcdyna::agent::{Agent, AgentConfig, Algorithm};
use hcdyna::envs::{make_task, EnvKind, TabularGridWorld, Task, GOAL_LOW};
use hcdyna::harness::scenarios::{
    ascent_trajectories, queue_snapshot, train_until_updates, ASCENT_STEPS, DILATED_GOAL_LOW, SNAPSHOT_SAMPLES,
    SURFACE_STARTS,
};
use hcdyna::harness::{area_under_curve, run_experiment, ExperimentConfig, RunStatus};
use hcdyna::model::ModelKind;
use hcdyna::nn::{Mlp, OutputActivation};
use hcdyna::rng::{stream, Stream};
use hcdyna::search_control::{langevin_step, CovarianceTracker};
use hcdyna::tabular::{final_fraction_mean, gibbs_sample, run_sweep, softmax, Strategy, TabularConfig, LEARNING_RATES};

/// Env-step budget for the mixing-rate comparison on GridWorld.
const RHO_BUDGET: u64 = 30_000;
const RHO_SEEDS: u64 = 10;
/// Env-step budget for the MountainCar comparison.
const MOUNTAINCAR_BUDGET: u64 = 100_000;
const MOUNTAINCAR_SEEDS: u64 = 10;

type Check = std::result::Result<String, String>;

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- AC-1

fn pre_activations_clear_of_kinks(net: &Mlp, x: &[f64], margin: f64) -> bool {
    let mut cur = x.to_vec();
    let last = net.layers().len() - 1;
    for (i, layer) in net.layers().iter().enumerate() {
        let (w, b) = (layer.weights(), layer.biases());
        let mut next = vec![0.0; layer.out_dim()];
        for (o, z) in next.iter_mut().enumerate() {
            *z = b[o] + (0..layer.in_dim()).map(|j| w[o * layer.in_dim() + j] * cur[j]).sum::<f64>();
        }
        if i < last {
            if next.iter().any(|z| z.abs() < margin) {
                return false;
            }
            next.iter_mut().for_each(|z| *z = z.max(0.0));
        }
        cur = next;
    }
    true
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn ac1() -> Check {
    let mut rng = stream(2024, Stream::Init);
    let mut worst_param: f64 = 0.0;
    let mut worst_input: f64 = 0.0;
    let mut nets = 0;
    while nets < 100 {
        let d = rng.random_range(1..=6);
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![d];
        sizes.extend((0..depth).map(|_| rng.random_range(2..=12)));
        let out_dim = rng.random_range(1..=4);
        sizes.push(out_dim);
        let act = if rng.random_bool(0.3) {
            OutputActivation::Tanh
        } else {
            OutputActivation::Linear
        };
        let mut net = Mlp::xavier(&sizes, 0.5, act, &mut rng).unwrap();
        for l in net.layers_mut() {
            l.biases_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        // stay 1e-3 away from rectifier kinks so the h = 1e-5 stencil never crosses one
        if !pre_activations_clear_of_kinks(&net, &x, 1e-3) {
            continue;
        }
        let a = rng.random_range(0..out_dim);
        nets += 1;

        let analytic = net.input_gradient(&x, a).unwrap();
        let h = 1e-5;
        let fd_input: Vec<f64> = (0..d)
            .map(|i| {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[i] += h;
                m[i] -= h;
                (net.forward(&p).unwrap()[a] - net.forward(&m).unwrap()[a]) / (2.0 * h)
            })
            .collect();
        worst_input = worst_input.max(rel_err(&analytic, &fd_input));

        let mut seed = vec![0.0; out_dim];
        seed[a] = 1.0;
        let g = net.param_gradient(&x, &seed).unwrap();
        let analytic: Vec<f64> = g.iter().collect();
        let n = net.num_params();
        let h = 1e-6;
        let mut fd = Vec::with_capacity(n);
        for k in 0..n {
            let orig = net.params().nth(k).unwrap();
            *net.params_mut().nth(k).unwrap() = orig + h;
            let up = net.forward(&x).unwrap()[a];
            *net.params_mut().nth(k).unwrap() = orig - h;
            let down = net.forward(&x).unwrap()[a];
            *net.params_mut().nth(k).unwrap() = orig;
            fd.push((up - down) / (2.0 * h));
        }
        worst_param = worst_param.max(rel_err(&analytic, &fd));
    }
    verdict(
        worst_param < 1e-5 && worst_input < 1e-5,
        format!("100 nets, worst relative error: parameters {worst_param:.2e}, inputs {worst_input:.2e} (< 1e-5)"),
    )
}

// ---------------------------------------------------------------- AC-2

fn batch_covariance(xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mean: Vec<f64> = (0..d).map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| xs.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / n)
                .collect()
        })
        .collect()
}

fn ac2() -> Check {
    let mut runner = TestRunner::new_with_rng(
        PtConfig {
            cases: 1000,
            failure_persistence: None,
            ..PtConfig::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let worst = std::cell::Cell::new(0.0f64);
    let strategy = (1usize..7)
        .prop_flat_map(|d| proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, d), 1..150));
    let result = runner.run(&strategy, |xs| {
        let mut t = CovarianceTracker::new(xs[0].len());
        for x in &xs {
            t.observe(x).unwrap();
        }
        let batch = batch_covariance(&xs);
        let c = t.covariance();
        for (i, row) in batch.iter().enumerate() {
            for (j, &b) in row.iter().enumerate() {
                let e = (c[(i, j)] - b).abs();
                worst.set(worst.get().max(e));
                prop_assert!(e <= 1e-10, "entry ({i},{j}) off by {e:e}");
            }
        }
        Ok(())
    });
    verdict(
        result.is_ok(),
        format!("1000 random streams, worst entry error {:.2e} (<= 1e-10){}", worst.get(), match result {
            Ok(()) => String::new(),
            Err(e) => format!(": {e}"),
        }),
    )
}

// ---------------------------------------------------------------- AC-3

fn ac3() -> Check {
    let alpha = 0.01;
    let d = 2;
    let mut rng = stream(0, Stream::HillClimb);
    let grad = |y: &[f64]| y.iter().map(|v| -v).collect::<Vec<f64>>();
    let mut y = vec![0.0; d];
    for _ in 0..10_000 {
        y = langevin_step(&y, &grad, alpha, &mut rng);
    }
    let n = 100_000;
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for _ in 0..n {
        y = langevin_step(&y, &grad, alpha, &mut rng);
        for i in 0..d {
            sum[i] += y[i];
            sq[i] += y[i] * y[i];
        }
    }
    // the discretized chain y' = (1 - a) y + sqrt(2a) z has stationary variance 2 / (2 - a)
    let target_var = 2.0 / (2.0 - alpha);
    let means: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let vars: Vec<f64> = (0..d).map(|i| sq[i] / n as f64 - means[i] * means[i]).collect();
    let chain_ok = means.iter().all(|m| m.abs() <= 0.05) && vars.iter().all(|v| (v / target_var - 1.0).abs() <= 0.10);

    let mut grng = stream(1, Stream::SearchControl);
    let v: Vec<f64> = (0..12).map(|_| grng.random_range(-3.0..1.0)).collect();
    let p = softmax(&v);
    let draws = 200_000;
    let mut counts = vec![0u64; v.len()];
    for _ in 0..draws {
        counts[gibbs_sample(&v, &mut grng)] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&p)
        .map(|(&c, &pi)| {
            let e = pi * draws as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let pval = 1.0 - ChiSquared::new((v.len() - 1) as f64).unwrap().cdf(stat);
    let gibbs_ok = pval > 0.001;
    verdict(
        chain_ok && gibbs_ok,
        format!(
            "Langevin mean {:?} (|.| <= 0.05), variance {:?} vs {:.4} (+-10%); Gibbs chi-square p = {pval:.3} (> 0.001)",
            means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(),
            vars.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            target_var
        ),
    )
}

// ---------------------------------------------------------------- AC-4

fn ac4() -> Check {
    let env = TabularGridWorld::default();
    let base = TabularConfig {
        planning_steps: 10,
        rho: 0.5,
        ..TabularConfig::default()
    };
    let seeds: Vec<u64> = (0..30).collect();
    let strategies = [Strategy::HcDyna, Strategy::Er, Strategy::Gibbs];
    let res = run_sweep(&env, &base, &strategies, &LEARNING_RATES, &seeds).map_err(|e| e.to_string())?;
    let best = |s| res.best(s).expect("swept");
    let (hc, er, gibbs) = (best(Strategy::HcDyna), best(Strategy::Er), best(Strategy::Gibbs));
    verdict(
        hc.1 >= er.1 && hc.1 >= gibbs.1,
        format!(
            "final-20% mean over 30 seeds at best lr: hc-dyna {:.1} (lr {:.3}), er {:.1} (lr {:.3}), gibbs {:.1} (lr {:.3})",
            hc.1, hc.0, er.1, er.0, gibbs.1, gibbs.0
        ),
    )
}

// ---------------------------------------------------------------- AC-5, AC-6

fn gridworld_agent(algorithm: Algorithm, cfg: AgentConfig, seed: u64) -> Agent {
    let task: Arc<dyn Task> = Arc::from(make_task(EnvKind::GridWorld).unwrap());
    Agent::new(task, algorithm, ModelKind::Exact, cfg, seed).unwrap()
}

fn linf_to_goal(x: f64, y: f64) -> f64 {
    (GOAL_LOW - x).max(GOAL_LOW - y).max(0.0)
}

fn ac5_ac6() -> (Check, Check) {
    let mut agent = gridworld_agent(Algorithm::HcDyna, AgentConfig::default(), 0);
    if let Err(e) = train_until_updates(&mut agent, 20_000) {
        return (Err(e.to_string()), Err(e.to_string()));
    }
    let ac5 = (|| {
        let paths = ascent_trajectories(&agent, &SURFACE_STARTS, ASCENT_STEPS).map_err(|e| e.to_string())?;
        let rising = paths.iter().filter(|p| p.last().unwrap().value > p[0].value).count();
        let ends: Vec<String> = paths
            .iter()
            .map(|p| {
                let e = p.last().unwrap();
                format!("({:.2},{:.2})", e.x, e.y)
            })
            .collect();
        let reached = paths
            .iter()
            .filter(|p| {
                let e = p.last().unwrap();
                linf_to_goal(e.x, e.y) <= 0.2
            })
            .count();
        verdict(
            rising == 5 && reached >= 3,
            format!(
                "after {} updates: {rising}/5 end higher than they start, {reached}/5 end within 0.2 of the goal; ends {}",
                agent.updates(),
                ends.join(" ")
            ),
        )
    })();
    let snap = queue_snapshot(&agent, SNAPSHOT_SAMPLES, 0);
    let ac6 = verdict(
        snap.sc_fraction > 0.0 && snap.sc_fraction >= 10.0 * snap.er_fraction,
        format!(
            "env step {}: share in [{DILATED_GOAL_LOW:.2}, 1]^2 is {:.2}% search-control vs {:.2}% replay (>= 10x)",
            snap.env_step,
            100.0 * snap.sc_fraction,
            100.0 * snap.er_fraction
        ),
    );
    (ac5, ac6)
}

// ---------------------------------------------------------------- AC-7

fn experiment(env: &str, algorithm: &str, rho: f64, steps: u64, seeds: u64) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        "env = \"{env}\"\nalgorithm = \"{algorithm}\"\nmodel = \"exact\"\nseeds = {seeds}\ntotal_steps = {steps}\neval_every = 1000\n[override]\nrho = {rho:?}\nplanning_steps = 10\n"
    ))
    .unwrap()
}

/// Per-seed curves of completed runs; any failed seed is an error.
fn curves(cfg: &ExperimentConfig) -> std::result::Result<Vec<Vec<f64>>, String> {
    let report = run_experiment(cfg, None).map_err(|e| e.to_string())?;
    for r in &report.runs {
        if let RunStatus::Failed(e) = &r.status {
            return Err(format!("{} seed {} failed: {e}", cfg.name, r.seed));
        }
    }
    Ok(report.runs.iter().map(|r| r.returns()).collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn ac7() -> Check {
    let mut finals = Vec::new();
    for rho in [0.0, 0.5, 1.0] {
        let c = curves(&experiment("gridworld", "hc-dyna", rho, RHO_BUDGET, RHO_SEEDS))?;
        finals.push(mean(&c.iter().map(|r| final_fraction_mean(r, 0.2)).collect::<Vec<_>>()));
    }
    verdict(
        finals[1] >= finals[2] && finals[1] >= finals[0],
        format!(
            "GridWorld, {RHO_SEEDS} seeds, {RHO_BUDGET} steps, final-20% mean: rho=0 {:.1}, rho=0.5 {:.1}, rho=1 {:.1}",
            finals[0], finals[1], finals[2]
        ),
    )
}

// ---------------------------------------------------------------- AC-8

fn ac8() -> Check {
    let mut auc = Vec::new();
    for alg in ["hc-dyna", "dqn", "onpolicy-dyna"] {
        let c = curves(&experiment("mountaincar", alg, 0.5, MOUNTAINCAR_BUDGET, MOUNTAINCAR_SEEDS))?;
        auc.push(mean(&c.iter().map(|r| area_under_curve(r)).collect::<Vec<_>>()));
    }
    verdict(
        auc[0] >= auc[1] && auc[0] >= auc[2],
        format!(
            "MountainCar exact model, {MOUNTAINCAR_SEEDS} seeds, {MOUNTAINCAR_BUDGET} steps, mean AUC: hc-dyna {:.1}, dqn {:.1}, onpolicy-dyna {:.1}",
            auc[0], auc[1], auc[2]
        ),
    )
}

// ---------------------------------------------------------------- AC-9

fn ac9() -> Check {
    let cfg = AgentConfig {
        rho: 0.0,
        warmup: 1000,
        ..AgentConfig::default()
    };
    let mut hc = gridworld_agent(Algorithm::HcDyna, cfg.clone(), 9);
    let mut dqn = gridworld_agent(Algorithm::Dqn, cfg, 9);
    let mut same = true;
    for step in 1..=3000u64 {
        hc.step().map_err(|e| e.to_string())?;
        dqn.step().map_err(|e| e.to_string())?;
        if step % 500 == 0 {
            let (a, b) = (hc.q_network().unwrap(), dqn.q_network().unwrap());
            same &= a.params().map(f64::to_bits).eq(b.params().map(f64::to_bits));
            same &= hc.evaluate().map_err(|e| e.to_string())?.to_bits() == dqn.evaluate().map_err(|e| e.to_string())?.to_bits();
        }
    }
    let hc_ran = hc.stats().admitted > 0;

    let dir_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let small = ExperimentConfig::from_toml_str(
        "name = \"det\"\nenv = \"mountaincar\"\nalgorithm = \"hc-dyna\"\nmodel = \"learned\"\nseeds = 2\ntotal_steps = 1500\neval_every = 500\n[override]\nwarmup = 500\n",
    )
    .unwrap();
    run_experiment(&small, Some(dir_a.path())).map_err(|e| e.to_string())?;
    run_experiment(&small, Some(dir_b.path())).map_err(|e| e.to_string())?;
    let mut identical = true;
    for f in ["0.csv", "1.csv", "merged.csv", "summary.csv"] {
        let a = std::fs::read(dir_a.path().join("det").join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir_b.path().join("det").join(f)).map_err(|e| e.to_string())?;
        identical &= !a.is_empty() && a == b;
    }
    verdict(
        same && hc_ran && identical,
        format!(
            "rho=0 hc-dyna vs dqn bitwise equal over 3000 steps: {same} (hill climbing active: {hc_ran}); repeated runs byte-identical: {identical}"
        ),
    )
}

// ----------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Check) -> Check {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    })
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC-")).collect();
    let wanted = |id: &str| args.is_empty() || args.iter().any(|a| a == id);
    let mut results: Vec<(&str, Check, f64)> = Vec::new();
    let run = |id: &'static str, f: &dyn Fn() -> Check, results: &mut Vec<(&str, Check, f64)>| {
        if wanted(id) {
            let t = Instant::now();
            let r = guarded(f);
            report(id, &r, t.elapsed().as_secs_f64());
            results.push((id, r, t.elapsed().as_secs_f64()));
        }
    };
    run("AC-1", &ac1, &mut results);
    run("AC-2", &ac2, &mut results);
    run("AC-3", &ac3, &mut results);
    run("AC-4", &ac4, &mut results);
    if wanted("AC-5") || wanted("AC-6") {
        let t = Instant::now();
        let (a5, a6) = catch_unwind(ac5_ac6).unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
        let secs = t.elapsed().as_secs_f64();
        for (id, r) in [("AC-5", a5), ("AC-6", a6)] {
            if wanted(id) {
                report(id, &r, secs);
                results.push((id, r, secs));
            }
        }
    }
    run("AC-7", &ac7, &mut results);
    run("AC-8", &ac8, &mut results);
    run("AC-9", &ac9, &mut results);
    let failed = results.iter().filter(|r| r.1.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn report(id: &str, r: &Check, secs: f64) {
    match r {
        Ok(d) => println!("{id} PASS ({secs:.1}s): {d}"),
        Err(d) => println!("{id} FAIL ({secs:.1}s): {d}"),
    }
}
