use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

/// Online state covariance `Σ = μ_ss − μ_s μ_sᵀ` from running means of `s sᵀ`
/// and `s`. Before the first observation the covariance is the identity.
#[derive(Debug, Clone)]
pub struct CovarianceTracker {
    count: u64,
    mean: DVector<f64>,
    mean_outer: DMatrix<f64>,
    cov: DMatrix<f64>,
}

impl CovarianceTracker {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            mean_outer: DMatrix::zeros(dim, dim),
            cov: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn observe(&mut self, s: &[f64]) -> Result<()> {
        check_dim(self.dim(), s.len())?;
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("state {s:?} given to the covariance tracker")));
        }
        self.count += 1;
        let t = self.count as f64;
        let d = self.dim();
        for i in 0..d {
            self.mean[i] = (self.mean[i] * (t - 1.0) + s[i]) / t;
            for j in 0..d {
                self.mean_outer[(i, j)] = (self.mean_outer[(i, j)] * (t - 1.0) + s[i] * s[j]) / t;
            }
        }
        for i in 0..d {
            for j in 0..d {
                self.cov[(i, j)] = self.mean_outer[(i, j)] - self.mean[i] * self.mean[j];
            }
        }
        Ok(())
    }

    /// Snapshot of the metric used by hill climbing, with the noise factor
    /// `L Lᵀ = Σ + jitter·I` precomputed.
    pub fn preconditioner(&self, jitter: f64) -> Preconditioner {
        Preconditioner::new(self.cov.clone(), jitter)
    }
}

#[derive(Debug, Clone)]
pub struct Preconditioner {
    cov: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
}

impl Preconditioner {
    pub fn new(cov: DMatrix<f64>, jitter: f64) -> Self {
        let d = cov.nrows();
        let regularized = &cov + DMatrix::identity(d, d) * jitter;
        let noise_factor = match regularized.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                // rounding can leave tiny negative eigenvalues; clamp them
                let eig = SymmetricEigen::new(regularized);
                let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
            }
        };
        Self { cov, noise_factor }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim), 0.0)
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn noise_factor(&self) -> &DMatrix<f64> {
        &self.noise_factor
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let d = self.cov.nrows();
        (0..d)
            .map(|i| (0..d).map(|j| self.cov[(i, j)] * g[j]).sum())
            .collect()
    }
}
