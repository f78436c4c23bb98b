use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::Rng64;

/// Unadjusted Langevin step `y' = y + α∇U(y) + √(2α)·z` targeting a density
/// proportional to `exp(U)`.
pub fn langevin_step(y: &[f64], grad_u: &dyn Fn(&[f64]) -> Vec<f64>, alpha: f64, rng: &mut Rng64) -> Vec<f64> {
    let g = grad_u(y);
    let scale = (2.0 * alpha).sqrt();
    y.iter()
        .zip(&g)
        .map(|(x, gi)| {
            let z: f64 = rng.sample(StandardNormal);
            x + alpha * gi + scale * z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn zero_step_is_identity() {
        let mut rng = stream(0, Stream::HillClimb);
        let y = langevin_step(&[0.4, -2.0], &|y| y.iter().map(|x| -x).collect(), 0.0, &mut rng);
        assert_eq!(y, vec![0.4, -2.0]);
    }

    #[test]
    fn gaussian_chain_variance_matches_discretized_stationary_value() {
        let alpha = 0.1;
        let mut rng = stream(4, Stream::HillClimb);
        let mut y = vec![0.0];
        let mut sq = 0.0;
        let n = 100_000;
        for _ in 0..1000 {
            y = langevin_step(&y, &|v| vec![-v[0]], alpha, &mut rng);
        }
        for _ in 0..n {
            y = langevin_step(&y, &|v| vec![-v[0]], alpha, &mut rng);
            sq += y[0] * y[0];
        }
        let var = sq / n as f64;
        let target = 2.0 / (2.0 - alpha);
        assert!((var - target).abs() / target < 0.05, "{var}");
    }
}
