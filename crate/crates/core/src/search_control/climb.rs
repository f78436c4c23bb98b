use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::Task;
use crate::error::{check_dim, Error, Result};
use crate::nn::{argmax, Mlp};
use crate::replay::ErBuffer;
use crate::rng::Rng64;

use super::covariance::{CovarianceTracker, Preconditioner};
use super::queue::SearchControlQueue;

/// A differentiable state-value estimate to climb.
pub trait ValueSurface {
    fn value(&self, s: &[f64]) -> Result<f64>;
    fn gradient(&self, s: &[f64]) -> Result<Vec<f64>>;
}

/// `V(s) = max_a Q(s, a)` for a discrete-action Q network.
#[derive(Debug, Clone, Copy)]
pub struct QValueSurface<'a>(pub &'a Mlp);

impl ValueSurface for QValueSurface<'_> {
    fn value(&self, s: &[f64]) -> Result<f64> {
        let q = self.0.forward(s)?;
        Ok(q[argmax(&q)])
    }

    fn gradient(&self, s: &[f64]) -> Result<Vec<f64>> {
        value_gradient(self.0, s)
    }
}

/// `∂Q(s, a*)/∂s` with `a* = argmax_a Q(s, a)`, lowest index on ties.
pub fn value_gradient(qnet: &Mlp, s: &[f64]) -> Result<Vec<f64>> {
    let q = qnet.forward(s)?;
    qnet.input_gradient(s, argmax(&q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `α = c / ‖Σg‖`: every deterministic move has length `c`.
    Normalized(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcConfig {
    /// Gradient steps per climb.
    pub steps: usize,
    /// Scale `η` of the injected noise `N(0, η Σ)`.
    pub noise: f64,
    pub step_rule: StepRule,
    pub jitter: f64,
}

impl Default for HcConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            noise: 0.1,
            step_rule: StepRule::Normalized(0.1),
            jitter: 1e-8,
        }
    }
}

const DEGENERATE_NORM: f64 = 1e-12;

/// One projected, preconditioned, noisy ascent step from `s` with value
/// gradient `g`: `Π(s + αΣg + X)`, `X ~ N(0, η(Σ + jitter·I))`. When `‖Σg‖`
/// vanishes only the noise is applied.
pub fn hc_step(
    s: &[f64],
    g: &[f64],
    metric: &Preconditioner,
    cfg: &HcConfig,
    project: &dyn Fn(&mut [f64]),
    rng: &mut Rng64,
) -> Result<Vec<f64>> {
    check_dim(s.len(), g.len())?;
    check_dim(s.len(), metric.covariance().nrows())?;
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("value gradient {g:?} at {s:?}")));
    }
    let d = s.len();
    let dir = metric.apply(g);
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut next = s.to_vec();
    if norm >= DEGENERATE_NORM {
        let alpha = match cfg.step_rule {
            StepRule::Normalized(c) => c / norm,
            StepRule::Fixed(a) => a,
        };
        for (x, v) in next.iter_mut().zip(&dir) {
            *x += alpha * v;
        }
    }
    if cfg.noise > 0.0 {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let l = metric.noise_factor();
        let scale = cfg.noise.sqrt();
        for i in 0..d {
            let lz: f64 = (0..d).map(|j| l[(i, j)] * z[j]).sum();
            next[i] += scale * lz;
        }
    }
    project(&mut next);
    Ok(next)
}

/// The `cfg.steps` iterates after `start` (the start itself is excluded).
pub fn climb_trajectory(
    surface: &dyn ValueSurface,
    start: &[f64],
    metric: &Preconditioner,
    cfg: &HcConfig,
    project: &dyn Fn(&mut [f64]),
    rng: &mut Rng64,
) -> Result<Vec<Vec<f64>>> {
    let mut s = start.to_vec();
    let mut path = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let g = surface.gradient(&s)?;
        s = hc_step(&s, &g, metric, cfg, project, rng)?;
        path.push(s.clone());
    }
    Ok(path)
}

/// Climb from a state drawn from replay and offer each iterate to the queue.
/// Returns how many states were admitted.
pub fn run_hill_climb(
    surface: &dyn ValueSurface,
    buffer: &ErBuffer,
    tracker: &CovarianceTracker,
    queue: &mut SearchControlQueue,
    cfg: &HcConfig,
    task: &dyn Task,
    rng: &mut Rng64,
) -> Result<usize> {
    if buffer.is_empty() {
        return Ok(0);
    }
    let start = buffer.sample(rng).s.clone();
    let metric = tracker.preconditioner(cfg.jitter);
    let project = |x: &mut [f64]| {
        task.project(x);
    };
    let mut s = start;
    let mut last: Option<Vec<f64>> = None;
    let mut admitted = 0;
    for _ in 0..cfg.steps {
        let g = surface.gradient(&s)?;
        s = hc_step(&s, &g, &metric, cfg, &project, rng)?;
        if queue.admits(last.as_deref(), &s) {
            queue.push(s.clone());
            last = Some(s.clone());
            admitted += 1;
        }
    }
    Ok(admitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Action, GridWorld};
    use crate::nn::OutputActivation;
    use crate::replay::Transition;
    use crate::rng::{stream, Stream};
    use nalgebra::DMatrix;

    /// `V(s) = -½ (s - c)ᵀ A (s - c)` with diagonal `A`.
    struct Quadratic {
        center: Vec<f64>,
        curvature: Vec<f64>,
    }

    impl ValueSurface for Quadratic {
        fn value(&self, s: &[f64]) -> Result<f64> {
            Ok(-0.5
                * s.iter()
                    .zip(&self.center)
                    .zip(&self.curvature)
                    .map(|((x, c), a)| a * (x - c) * (x - c))
                    .sum::<f64>())
        }

        fn gradient(&self, s: &[f64]) -> Result<Vec<f64>> {
            Ok(s.iter()
                .zip(&self.center)
                .zip(&self.curvature)
                .map(|((x, c), a)| -a * (x - c))
                .collect())
        }
    }

    fn no_projection(_: &mut [f64]) {}

    fn quiet(rule: StepRule, steps: usize) -> HcConfig {
        HcConfig {
            steps,
            noise: 0.0,
            step_rule: rule,
            jitter: 0.0,
        }
    }

    fn diag(v: &[f64]) -> Preconditioner {
        Preconditioner::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v)), 0.0)
    }

    #[test]
    fn normalized_step_has_fixed_length() {
        let mut rng = stream(0, Stream::HillClimb);
        let cfg = quiet(StepRule::Normalized(0.1), 1);
        let next = hc_step(&[0.2, 0.3], &[3.0, -4.0], &Preconditioner::identity(2), &cfg, &no_projection, &mut rng).unwrap();
        assert!((next[0] - 0.26).abs() < 1e-15);
        assert!((next[1] - 0.22).abs() < 1e-15);
    }

    #[test]
    fn degenerate_gradient_moves_only_by_noise() {
        let mut rng = stream(0, Stream::HillClimb);
        let cfg = quiet(StepRule::Normalized(0.1), 1);
        let s = [0.4, 0.6];
        let next = hc_step(&s, &[0.0, 1e-14], &Preconditioner::identity(2), &cfg, &no_projection, &mut rng).unwrap();
        assert_eq!(next, s);
        let noisy = HcConfig { noise: 0.1, ..cfg };
        let next = hc_step(&s, &[0.0, 0.0], &Preconditioner::identity(2), &noisy, &no_projection, &mut rng).unwrap();
        assert!(next.iter().all(|x| x.is_finite()));
        assert_ne!(next, s);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut rng = stream(0, Stream::HillClimb);
        let r = hc_step(&[0.0], &[f64::NAN], &Preconditioner::identity(1), &HcConfig::default(), &no_projection, &mut rng);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn diagonal_metric_scales_displacement_per_coordinate() {
        let mut rng = stream(0, Stream::HillClimb);
        let (s1, s2) = (1.0, 0.01);
        let g = [0.7, -0.3];
        let cfg = quiet(StepRule::Normalized(0.1), 1);
        let next = hc_step(&[0.0, 0.0], &g, &diag(&[s1 * s1, s2 * s2]), &cfg, &no_projection, &mut rng).unwrap();
        let ratio = next[0].abs() / next[1].abs();
        let expected = (s1 * s1 * g[0].abs()) / (s2 * s2 * g[1].abs());
        assert!((ratio / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_is_equivariant_under_diagonal_rescaling() {
        let scale = [10.0, 0.1];
        let surface = Quadratic {
            center: vec![1.0, -2.0],
            curvature: vec![0.5, 3.0],
        };
        // the same surface seen in rescaled coordinates u = D s
        let rescaled = Quadratic {
            center: vec![10.0, -0.2],
            curvature: vec![0.5 / 100.0, 3.0 / 0.01],
        };
        let cov = [0.2, 0.05];
        let cov_u = [cov[0] * 100.0, cov[1] * 0.01];
        let start = [0.3, 0.4];
        let start_u = [3.0, 0.04];
        let mut rng = stream(0, Stream::HillClimb);

        let cfg = quiet(StepRule::Fixed(0.5), 30);
        let a = climb_trajectory(&surface, &start, &diag(&cov), &cfg, &no_projection, &mut rng).unwrap();
        let b = climb_trajectory(&rescaled, &start_u, &diag(&cov_u), &cfg, &no_projection, &mut rng).unwrap();
        for (x, u) in a.iter().zip(&b) {
            for i in 0..2 {
                assert!((x[i] * scale[i] - u[i]).abs() < 1e-9 * (1.0 + u[i].abs()));
            }
        }

        // with a normalized step the direction is still mapped through D
        let cfg = quiet(StepRule::Normalized(0.1), 1);
        let x = hc_step(&start, &surface.gradient(&start).unwrap(), &diag(&cov), &cfg, &no_projection, &mut rng).unwrap();
        let u = hc_step(&start_u, &rescaled.gradient(&start_u).unwrap(), &diag(&cov_u), &cfg, &no_projection, &mut rng).unwrap();
        let dx = [(x[0] - start[0]) * scale[0], (x[1] - start[1]) * scale[1]];
        let du = [u[0] - start_u[0], u[1] - start_u[1]];
        let cross = dx[0] * du[1] - dx[1] * du[0];
        assert!(cross.abs() < 1e-12 * (dx[0].hypot(dx[1]) * du[0].hypot(du[1])));
        assert!(dx[0] * du[0] + dx[1] * du[1] > 0.0);
    }

    #[test]
    fn noise_covariance_matches_eta_sigma() {
        let mut rng = stream(5, Stream::HillClimb);
        let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.018, 0.018, 0.01]);
        let metric = Preconditioner::new(cov.clone(), 1e-8);
        let cfg = HcConfig {
            noise: 0.5,
            ..HcConfig::default()
        };
        let n = 40_000;
        let mut m = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = hc_step(&[0.0, 0.0], &[0.0, 0.0], &metric, &cfg, &no_projection, &mut rng).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] += x[i] * x[j] / n as f64;
                }
            }
        }
        let target = cov * 0.5;
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(i, j)] - target[(i, j)]).abs() < 0.05 * target[(i, i)].max(target[(j, j)]));
            }
        }
    }

    #[test]
    fn ascent_increases_value_away_from_the_peak() {
        let surface = Quadratic {
            center: vec![0.9, 0.9],
            curvature: vec![1.0, 4.0],
        };
        let mut rng = stream(0, Stream::HillClimb);
        let path = climb_trajectory(
            &surface,
            &[0.0, 0.0],
            &Preconditioner::identity(2),
            &quiet(StepRule::Normalized(0.01), 60),
            &no_projection,
            &mut rng,
        )
        .unwrap();
        let mut prev = surface.value(&[0.0, 0.0]).unwrap();
        for s in &path {
            let v = surface.value(s).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn iterates_stay_feasible() {
        let task = GridWorld::new();
        let surface = Quadratic {
            center: vec![5.0, 5.0],
            curvature: vec![1.0, 1.0],
        };
        let project = |x: &mut [f64]| {
            task.project(x);
        };
        let mut rng = stream(1, Stream::HillClimb);
        let cfg = HcConfig {
            noise: 1.0,
            ..HcConfig::default()
        };
        let path = climb_trajectory(&surface, &[0.1, 0.1], &Preconditioner::identity(2), &cfg, &project, &mut rng).unwrap();
        assert_eq!(path.len(), 100);
        assert!(path.iter().all(|s| task.is_feasible(s)));
    }

    fn buffer_with(s: Vec<f64>) -> ErBuffer {
        let mut b = ErBuffer::new(4);
        b.push(Transition {
            s: s.clone(),
            a: Action::Discrete(0),
            r: -1.0,
            next: s,
            terminal: false,
        });
        b
    }

    #[test]
    fn admission_counts_follow_threshold() {
        let task = GridWorld::new();
        let mut rng = stream(2, Stream::Init);
        let net = Mlp::xavier(&[2, 32, 32, 4], 0.0003, OutputActivation::Linear, &mut rng).unwrap();
        let surface = QValueSurface(&net);
        let buffer = buffer_with(vec![0.2, 0.3]);
        let tracker = CovarianceTracker::new(2);
        let cfg = HcConfig::default();

        let mut q = SearchControlQueue::new(1000, 0.001);
        let n = run_hill_climb(&surface, &buffer, &tracker, &mut q, &cfg, &task, &mut rng).unwrap();
        assert_eq!(n, 100);
        assert_eq!(q.len(), 100);

        let mut q = SearchControlQueue::new(1000, 0.001);
        q.set_threshold(f64::INFINITY);
        let n = run_hill_climb(&surface, &buffer, &tracker, &mut q, &cfg, &task, &mut rng).unwrap();
        assert_eq!(n, 0);

        let mut q = SearchControlQueue::new(1000, 0.001);
        q.set_threshold(0.05);
        let n = run_hill_climb(&surface, &buffer, &tracker, &mut q, &cfg, &task, &mut rng).unwrap();
        assert!(n > 0 && n <= 100);
        let states: Vec<_> = q.iter().cloned().collect();
        for w in states.windows(2) {
            assert!(crate::search_control::distance(&w[0], &w[1]) >= 0.05);
        }
    }

    #[test]
    fn empty_buffer_climbs_nothing() {
        let task = GridWorld::new();
        let mut rng = stream(2, Stream::Init);
        let net = Mlp::zeros(&[2, 4, 4], OutputActivation::Linear).unwrap();
        let mut q = SearchControlQueue::new(10, 0.001);
        let n = run_hill_climb(
            &QValueSurface(&net),
            &ErBuffer::new(4),
            &CovarianceTracker::new(2),
            &mut q,
            &HcConfig::default(),
            &task,
            &mut rng,
        )
        .unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn value_gradient_follows_greedy_action() {
        let mut rng = stream(9, Stream::Init);
        let net = Mlp::xavier(&[2, 8, 3], 0.5, OutputActivation::Linear, &mut rng).unwrap();
        let s = [0.3, 0.7];
        let g = value_gradient(&net, &s).unwrap();
        let v = |x: &[f64]| QValueSurface(&net).value(x).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut p = s;
            let mut m = s;
            p[i] += h;
            m[i] -= h;
            let fd = (v(&p) - v(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} vs {}", g[i]);
        }
    }
}
