use crate::envs::{Cell, GridMove, TabularGridWorld};
use crate::error::{Error, Result};

pub const VI_TOLERANCE: f64 = 1e-10;
pub const VI_MAX_SWEEPS: usize = 1_000_000;

fn backup(env: &TabularGridWorld, v: &[f64], c: Cell) -> f64 {
    if env.is_goal(c) {
        return 0.0;
    }
    GridMove::ALL
        .iter()
        .map(|&m| {
            env.transition_probs(c, m)
                .into_iter()
                .map(|(next, p)| {
                    let cont = if env.is_goal(next) { 0.0 } else { env.gamma * v[next.0] };
                    p * (-1.0 + cont)
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest `|T V − V|` over all cells.
pub fn bellman_residual(env: &TabularGridWorld, v: &[f64]) -> f64 {
    (0..env.num_cells())
        .map(|i| (backup(env, v, Cell(i)) - v[i]).abs())
        .fold(0.0, f64::max)
}

/// Optimal state values of the grid (goal absorbing with value 0).
pub fn value_iteration(env: &TabularGridWorld) -> Result<Vec<f64>> {
    let n = env.num_cells();
    let mut v = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..VI_MAX_SWEEPS {
        // in-place sweeps; convergence is confirmed on a full synchronous residual
        for i in 0..n {
            v[i] = backup(env, &v, Cell(i));
        }
        residual = bellman_residual(env, &v);
        if residual < VI_TOLERANCE {
            return Ok(v);
        }
    }
    Err(Error::NoConvergence {
        sweeps: VI_MAX_SWEEPS,
        residual,
    })
}
