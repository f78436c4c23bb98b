use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::envs::{Cell, TabularGridWorld};
use crate::rng::Rng64;

/// `softmax(v)` computed with the maximum subtracted.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// Exact draw of an index with probability `softmax(v)`.
pub fn gibbs_sample(v: &[f64], rng: &mut Rng64) -> usize {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // u landed in the rounding slack at the top end
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Finite-difference hill climbing over cells. Each step jitters the current
/// cell's center with `N(0, noise_std²)` per coordinate, snaps to the
/// enclosing cell, then moves to the 8-neighbor with the largest
/// `(V(n) − V(c)) / ‖center(n) − center(c)‖`, ties broken uniformly.
pub fn fd_hill_climb(
    env: &TabularGridWorld,
    v: &[f64],
    start: Cell,
    steps: usize,
    noise_std: f64,
    rng: &mut Rng64,
) -> Vec<Cell> {
    let noise = (noise_std > 0.0).then(|| Normal::new(0.0, noise_std).expect("finite std"));
    let mut cur = start;
    let mut path = Vec::with_capacity(steps);
    let mut best: Vec<Cell> = Vec::with_capacity(8);
    for _ in 0..steps {
        if let Some(n) = &noise {
            let [x, y] = env.center(cur);
            cur = env.nearest_cell(x + n.sample(rng), y + n.sample(rng));
        }
        let [cx, cy] = env.center(cur);
        let mut best_rate = f64::NEG_INFINITY;
        best.clear();
        for nb in env.neighbors8(cur) {
            let [nx, ny] = env.center(nb);
            let rate = (v[nb.0] - v[cur.0]) / (nx - cx).hypot(ny - cy);
            if rate > best_rate {
                best_rate = rate;
                best.clear();
                best.push(nb);
            } else if rate == best_rate {
                best.push(nb);
            }
        }
        cur = if best.len() == 1 {
            best[0]
        } else {
            best[rng.random_range(0..best.len())]
        };
        path.push(cur);
    }
    path
}
