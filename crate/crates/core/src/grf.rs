//! Gaussian random fields with Matérn-3/2 covariance on a uniform grid over the
//! unit square, and a PCA (empirical Karhunen–Loève) basis for truncation.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{Point, ReferenceSampler};
use crate::rng::rng_from_seed;

pub const DEFAULT_JITTER: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GrfError {
    #[error("grid must have at least 2 nodes per side, got {nx}x{ny}")]
    Grid { nx: usize, ny: usize },
    #[error("lengthscale must be positive, got {0}")]
    Lengthscale(f64),
    #[error(
        "Cholesky factorization failed with jitter {jitter:e}; try a jitter of about {suggested:e}"
    )]
    Factorization { jitter: f64, suggested: f64 },
    #[error("number of modes {n} must lie in 1..={max}")]
    Modes { n: usize, max: usize },
    #[error("field has {got} values, expected {expected}")]
    FieldSize { expected: usize, got: usize },
}

/// `nx × ny` nodes on `[0, 1]²`, node `(ix, iy)` at `(ix/(nx−1), iy/(ny−1))`,
/// stored row-major with index `iy·nx + ix`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self, GrfError> {
        if nx < 2 || ny < 2 {
            return Err(GrfError::Grid { nx, ny });
        }
        Ok(Self { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self, GrfError> {
        Self::new(n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hx(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / (self.ny - 1) as f64
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        [
            (i % self.nx) as f64 * self.hx(),
            (i / self.nx) as f64 * self.hy(),
        ]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        let (ix, iy) = (i % self.nx, i / self.nx);
        ix == 0 || iy == 0 || ix == self.nx - 1 || iy == self.ny - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternKernel {
    pub lengthscale: f64,
}

impl MaternKernel {
    pub fn new(lengthscale: f64) -> Result<Self, GrfError> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(GrfError::Lengthscale(lengthscale));
        }
        Ok(Self { lengthscale })
    }

    #[inline]
    pub fn at_distance(&self, r: f64) -> f64 {
        let s = 3f64.sqrt() * r / self.lengthscale;
        (1.0 + s) * (-s).exp()
    }
}

/// `(1 + √3 r/ℓ) exp(−√3 r/ℓ)` with `r = ‖x − y‖`.
pub fn matern32(x: &[f64], y: &[f64], lengthscale: f64) -> Result<f64, GrfError> {
    let k = MaternKernel::new(lengthscale)?;
    Ok(k.at_distance(crate::numeric::sq_dist(x, y).sqrt()))
}

pub fn cov_matrix(grid: &Grid2D, kernel: &MaternKernel) -> DMatrix<f64> {
    let n = grid.len();
    let nodes: Vec<[f64; 2]> = (0..n).map(|i| grid.node(i)).collect();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = 1.0;
        for j in 0..i {
            let v = kernel.at_distance(
                ((nodes[i][0] - nodes[j][0]).powi(2) + (nodes[i][1] - nodes[j][1]).powi(2)).sqrt(),
            );
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Prior `N(0, C)` on grid fields, sampled as `L ξ` with `C + jitter·I = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct GrfModel {
    pub grid: Grid2D,
    pub kernel: MaternKernel,
    pub jitter: f64,
    chol: DMatrix<f64>,
}

impl GrfModel {
    pub fn new(grid: Grid2D, kernel: MaternKernel) -> Result<Self, GrfError> {
        Self::with_jitter(grid, kernel, DEFAULT_JITTER)
    }

    pub fn with_jitter(grid: Grid2D, kernel: MaternKernel, jitter: f64) -> Result<Self, GrfError> {
        let mut c = cov_matrix(&grid, &kernel);
        for i in 0..grid.len() {
            c[(i, i)] += jitter;
        }
        let chol = c
            .cholesky()
            .ok_or(GrfError::Factorization {
                jitter,
                suggested: (jitter * 100.0).max(1e-8),
            })?
            .unpack();
        Ok(Self {
            grid,
            kernel,
            jitter,
            chol,
        })
    }

    /// Lower-triangular factor.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn sample_with(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let n = self.grid.len();
        let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
        self.apply_factor(&xi)
    }

    /// `L ξ`.
    pub fn apply_factor(&self, xi: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, x) in xi.iter().enumerate().take(i + 1) {
                s += self.chol[(i, j)] * x;
            }
            *o = s;
        }
        out
    }
}

impl ReferenceSampler for GrfModel {
    fn dim(&self) -> usize {
        self.grid.len()
    }
    fn draw(&self, rng: &mut dyn RngCore) -> Point {
        Point::new(self.sample_with(rng)).expect("finite field")
    }
}

/// `n` prior fields from one seeded stream.
pub fn sample_grf(model: &GrfModel, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| model.sample_with(&mut rng)).collect()
}

/// Leading principal directions of a set of fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlBasis {
    pub mean: Vec<f64>,
    /// `N` orthonormal field vectors.
    pub modes: Vec<Vec<f64>>,
    /// Singular values of the centered data matrix, non-increasing.
    pub singular_values: Vec<f64>,
    pub n_samples: usize,
    /// Sum of all squared singular values, kept and discarded.
    pub total_energy: f64,
}

pub fn pca_fit(samples: &[Vec<f64>], n_modes: usize) -> Result<KlBasis, GrfError> {
    let n = samples.len();
    let d = samples.first().map_or(0, |s| s.len());
    if n_modes == 0 || n_modes > n.min(d) {
        return Err(GrfError::Modes {
            n: n_modes,
            max: n.min(d),
        });
    }
    if let Some(s) = samples.iter().find(|s| s.len() != d) {
        return Err(GrfError::FieldSize {
            expected: d,
            got: s.len(),
        });
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| samples[i][j] - mean[j]);
    let total_energy: f64 = x.iter().map(|v| v * v).sum();
    let (modes, singular_values) = if d <= n {
        let eig = SymmetricEigen::new(x.transpose() * &x);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .into_iter()
            .take(n_modes)
            .map(|k| {
                (
                    eig.eigenvectors
                        .column(k)
                        .iter()
                        .copied()
                        .collect::<Vec<f64>>(),
                    eig.eigenvalues[k].max(0.0).sqrt(),
                )
            })
            .unzip()
    } else {
        let eig = SymmetricEigen::new(&x * x.transpose());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut modes = Vec::with_capacity(n_modes);
        let mut svals = Vec::with_capacity(n_modes);
        for &k in order.iter().take(n_modes) {
            let s = eig.eigenvalues[k].max(0.0).sqrt();
            if s <= 1e-12 * total_energy.sqrt().max(1.0) {
                return Err(GrfError::Modes {
                    n: n_modes,
                    max: modes.len(),
                });
            }
            let v = x.transpose() * eig.eigenvectors.column(k);
            modes.push(v.iter().map(|c| c / s).collect());
            svals.push(s);
        }
        (modes, svals)
    };
    Ok(KlBasis {
        mean,
        modes,
        singular_values,
        n_samples: n,
        total_energy,
    })
}

impl KlBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn field_dim(&self) -> usize {
        self.mean.len()
    }

    /// Coefficients `⟨u − mean, mode_k⟩`.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| {
                m.iter()
                    .zip(u)
                    .zip(&self.mean)
                    .map(|((a, x), mu)| a * (x - mu))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, c: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (m, ck) in self.modes.iter().zip(c) {
            for (o, a) in out.iter_mut().zip(m) {
                *o += ck * a;
            }
        }
        out
    }

    /// Sample standard deviation of each coefficient over the fitting set.
    pub fn coefficient_sd(&self) -> Vec<f64> {
        let denom = ((self.n_samples.max(2) - 1) as f64).sqrt();
        self.singular_values
            .iter()
            .map(|s| (s / denom).max(f64::MIN_POSITIVE))
            .collect()
    }

    /// Coefficients divided by their standard deviations.
    pub fn project_whitened(&self, u: &[f64]) -> Vec<f64> {
        self.project(u)
            .iter()
            .zip(self.coefficient_sd())
            .map(|(c, s)| c / s)
            .collect()
    }

    pub fn reconstruct_whitened(&self, z: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = z
            .iter()
            .zip(self.coefficient_sd())
            .map(|(a, s)| a * s)
            .collect();
        self.reconstruct(&c)
    }

    /// Sum of squared singular values beyond the kept modes.
    pub fn discarded_energy(&self) -> f64 {
        (self.total_energy - self.singular_values.iter().map(|s| s * s).sum::<f64>()).max(0.0)
    }
}
