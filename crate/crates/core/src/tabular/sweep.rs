use std::sync::Arc;

use rayon::prelude::*;

use super::{run_tabular, value_iteration, Strategy, TabularConfig};
use crate::envs::TabularGridWorld;
use crate::error::Result;

/// `2^0, 2^-0.25, 2^-0.5, 2^-0.75, 2^-1, 2^-1.5, 2^-2, 2^-2.5`.
pub const LEARNING_RATES: [f64; 8] = [
    1.0,
    0.840_896_415_253_714_5,
    0.707_106_781_186_547_6,
    0.594_603_557_501_360_5,
    0.5,
    0.353_553_390_593_273_8,
    0.25,
    0.176_776_695_296_636_9,
];

/// Mean of the last `fraction` of `values` (at least one element).
pub fn final_fraction_mean(values: &[f64], fraction: f64) -> f64 {
    assert!(!values.is_empty(), "no evaluations to summarize");
    let k = ((values.len() as f64 * fraction).round() as usize).clamp(1, values.len());
    values[values.len() - k..].iter().sum::<f64>() / k as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub strategy: Strategy,
    pub lr: f64,
    pub seed: u64,
    pub evals: Vec<(u64, f64)>,
}

impl SweepCell {
    pub fn final_score(&self) -> f64 {
        let returns: Vec<f64> = self.evals.iter().map(|e| e.1).collect();
        final_fraction_mean(&returns, 0.2)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Seed-mean of the final-20% score for one `(strategy, lr)`.
    pub fn score(&self, strategy: Strategy, lr: f64) -> Option<f64> {
        let scores: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.strategy == strategy && c.lr == lr)
            .map(SweepCell::final_score)
            .collect();
        (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
    }

    /// Best learning rate and its score; earlier rates win ties.
    pub fn best(&self, strategy: Strategy) -> Option<(f64, f64)> {
        let mut lrs: Vec<f64> = Vec::new();
        for c in self.cells.iter().filter(|c| c.strategy == strategy) {
            if !lrs.contains(&c.lr) {
                lrs.push(c.lr);
            }
        }
        let mut best: Option<(f64, f64)> = None;
        for lr in lrs {
            let s = self.score(strategy, lr)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((lr, s));
            }
        }
        best
    }

    pub fn curves(&self, strategy: Strategy, lr: f64) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(move |c| c.strategy == strategy && c.lr == lr)
    }
}

/// Every `(strategy, lr, seed)` combination, in parallel on the current
/// rayon pool. Optimal values are computed once if any strategy needs them.
pub fn run_sweep(
    env: &TabularGridWorld,
    base: &TabularConfig,
    strategies: &[Strategy],
    lrs: &[f64],
    seeds: &[u64],
) -> Result<SweepResult> {
    let vstar = if strategies.iter().any(|s| s.needs_vstar()) {
        Some(Arc::new(value_iteration(env)?))
    } else {
        None
    };
    let jobs: Vec<(Strategy, f64, u64)> = strategies
        .iter()
        .flat_map(|&s| lrs.iter().flat_map(move |&lr| seeds.iter().map(move |&seed| (s, lr, seed))))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(strategy, lr, seed)| {
            let cfg = TabularConfig {
                strategy,
                lr,
                ..base.clone()
            };
            let evals = run_tabular(env, &cfg, vstar.clone(), seed)?;
            Ok(SweepCell {
                strategy,
                lr,
                seed,
                evals,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { cells })
}
