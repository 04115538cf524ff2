//! Linear-Gaussian surrogate of the Darcy problem: the same GRF prior observed
//! through bilinear point evaluation at the sensors plus Gaussian noise. Every
//! posterior is Gaussian and available in closed form, at full resolution and
//! after truncation to the leading `N` Karhunen–Loève modes.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::ExperimentError;
use crate::darcy::{interpolate, uniform_sensors};
use crate::grf::{cov_matrix, Grid2D, MaternKernel};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone)]
pub struct LinearGaussianSurrogate {
    pub grid: Grid2D,
    pub cov: DMatrix<f64>,
    /// Observation operator, sensors × nodes.
    pub obs: DMatrix<f64>,
    pub noise_sigma: f64,
    /// Prior eigenvalues, non-increasing, and matching eigenvectors as columns.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl LinearGaussianSurrogate {
    pub fn new(
        grid_n: usize,
        lengthscale: f64,
        sensors_per_side: usize,
        noise_sigma: f64,
    ) -> Result<Self, ExperimentError> {
        let grid = Grid2D::square(grid_n)?;
        let cov = cov_matrix(&grid, &MaternKernel::new(lengthscale)?);
        let sensors = uniform_sensors(sensors_per_side, grid.hx());
        let d = grid.len();
        let mut obs = DMatrix::zeros(sensors.len(), d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            for (i, s) in sensors.iter().enumerate() {
                obs[(i, j)] = interpolate(&grid, &e, s[0], s[1]);
            }
            e[j] = 0.0;
        }
        let eig = SymmetricEigen::new(cov.clone());
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
        let eigenvectors = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(Self {
            grid,
            cov,
            obs,
            noise_sigma,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.obs.nrows()
    }

    /// `A u + noise`.
    pub fn observe(&self, u: &[f64], seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let clean = &self.obs * DVector::from_column_slice(u);
        clean
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                c + self.noise_sigma * z
            })
            .collect()
    }

    /// Full-resolution posterior mean and covariance, in the data-space form
    /// `m = C Aᵀ (A C Aᵀ + σ² I)⁻¹ y`, `Σ = C − C Aᵀ (A C Aᵀ + σ² I)⁻¹ A C`.
    pub fn posterior(&self, y: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let ca = &self.cov * self.obs.transpose();
        let mut s = &self.obs * &ca;
        for i in 0..s.nrows() {
            s[(i, i)] += self.noise_sigma * self.noise_sigma;
        }
        let chol = Cholesky::new(s).expect("data covariance is positive definite");
        let mean = &ca * chol.solve(&DVector::from_column_slice(y));
        let cov = &self.cov - &ca * chol.solve(&ca.transpose());
        (mean.iter().copied().collect(), cov)
    }

    /// Posterior under the prior truncated to `n_modes` KL modes:
    /// `u = Φ_N Λ_N^{1/2} ξ`, `ξ | y ~ N(P⁻¹ Bᵀ y / σ², P⁻¹)` with
    /// `B = A Φ_N Λ_N^{1/2}` and `P = I + Bᵀ B / σ²`.
    /// Returns the field-space factor `F` and mean `m` with `u = m + F w`, `w ~ N(0, I_N)`.
    pub fn truncated_posterior(&self, n_modes: usize, y: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.grid.len();
        let n = n_modes.min(d);
        let basis = DMatrix::from_fn(d, n, |i, k| {
            self.eigenvectors[(i, k)] * self.eigenvalues[k].sqrt()
        });
        let b = &self.obs * &basis;
        let s2 = self.noise_sigma * self.noise_sigma;
        let mut p = b.transpose() * &b / s2;
        for k in 0..n {
            p[(k, k)] += 1.0;
        }
        let chol = Cholesky::new(p).expect("posterior precision is positive definite");
        let xi_mean = chol.solve(&(b.transpose() * DVector::from_column_slice(y) / s2));
        // P = L Lᵀ, so ξ = mean + L⁻ᵀ w
        let linv_t = chol
            .l()
            .transpose()
            .try_inverse()
            .expect("triangular factor is invertible");
        let mean = &basis * xi_mean;
        let factor = &basis * linv_t;
        (mean.iter().copied().collect(), factor)
    }

    /// `n` posterior fields at `n_modes` modes. The standard normal draws come
    /// from `seed`, so different `n_modes` share their leading coordinates.
    pub fn sample_truncated(
        &self,
        n_modes: usize,
        y: &[f64],
        n: usize,
        seed: u64,
    ) -> Vec<Vec<f64>> {
        let (mean, factor) = self.truncated_posterior(n_modes, y);
        let width = self.grid.len();
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..width)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                let w = DVector::from_column_slice(&w[..factor.ncols()]);
                let u = &factor * w;
                u.iter().zip(&mean).map(|(a, b)| a + b).collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_truncation_matches_full_posterior() {
        let s = LinearGaussianSurrogate::new(6, 0.5, 3, 0.2).unwrap();
        let u: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = s.observe(&u, 1);
        let (m_full, c_full) = s.posterior(&y);
        let (m_trunc, f) = s.truncated_posterior(36, &y);
        for (a, b) in m_full.iter().zip(&m_trunc) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let c_trunc = &f * f.transpose();
        assert!((c_full - c_trunc).abs().max() < 1e-6);
    }

    #[test]
    fn observation_rows_interpolate() {
        let s = LinearGaussianSurrogate::new(5, 0.5, 2, 0.1).unwrap();
        // each row is a set of bilinear weights summing to one
        for i in 0..s.n_sensors() {
            let row_sum: f64 = s.obs.row(i).iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
            assert!(s.obs.row(i).iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn prior_samples_have_prior_variance() {
        // with huge noise the posterior is the truncated prior
        let s = LinearGaussianSurrogate::new(5, 0.5, 2, 1e6).unwrap();
        let y = vec![0.0; s.n_sensors()];
        let draws = s.sample_truncated(25, &y, 20_000, 4);
        let var0: f64 = draws.iter().map(|u| u[12] * u[12]).sum::<f64>() / draws.len() as f64;
        assert!((var0 - s.cov[(12, 12)]).abs() < 0.05);
    }
}
