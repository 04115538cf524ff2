//! Darcy flow forward model `−div(exp(u) ∇p) = f` on the unit square with
//! `p = 0` on the boundary, discretized by the five-point finite-difference
//! stencil with harmonic averaging of `exp(u)` between neighbouring nodes.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grf::Grid2D;
use crate::rng::rng_from_seed;

pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;
pub const DEFAULT_SENSORS_PER_SIDE: usize = 8;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DarcyError {
    #[error("field has {got} values, grid has {expected} nodes")]
    FieldSize { expected: usize, got: usize },
    #[error("sensor {index} at ({x}, {y}) is not strictly inside the unit square")]
    SensorOutside { index: usize, x: f64, y: f64 },
    #[error("noise standard deviation must be positive, got {0}")]
    Sigma(f64),
    #[error("field value at node {0} is not finite")]
    NonFinite(usize),
    #[error("system matrix is not positive definite (pivot {0})")]
    Singular(usize),
    #[error("linear solve left relative residual {0:e}")]
    Residual(f64),
    #[error("observation vector has {got} entries, problem has {expected} sensors")]
    ObservationSize { expected: usize, got: usize },
    #[error("grid needs interior nodes, got {nx}x{ny}")]
    NoInterior { nx: usize, ny: usize },
}

type Result<T> = std::result::Result<T, DarcyError>;

/// Noisy pressure readings at the sensors.
pub type ObservationVector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarcyProblem {
    pub grid: Grid2D,
    /// Source term at every node (boundary entries are ignored).
    pub source: Vec<f64>,
    pub sensors: Vec<[f64; 2]>,
    pub noise_sigma: f64,
}

/// `k × k` lattice over `[inset, 1 − inset]²`, row-major in `y`.
pub fn uniform_sensors(per_side: usize, inset: f64) -> Vec<[f64; 2]> {
    let step = if per_side > 1 {
        (1.0 - 2.0 * inset) / (per_side - 1) as f64
    } else {
        0.0
    };
    let at = |k: usize| {
        if per_side > 1 {
            inset + k as f64 * step
        } else {
            0.5
        }
    };
    (0..per_side)
        .flat_map(|iy| (0..per_side).map(move |ix| [at(ix), at(iy)]))
        .collect()
}

impl DarcyProblem {
    /// Unit source and an 8×8 sensor lattice inset by one grid spacing.
    pub fn new(grid: Grid2D, noise_sigma: f64) -> Result<Self> {
        let inset = grid.hx().max(grid.hy());
        let sensors = uniform_sensors(DEFAULT_SENSORS_PER_SIDE, inset);
        Self::with_parts(grid, vec![1.0; grid.len()], sensors, noise_sigma)
    }

    pub fn with_parts(
        grid: Grid2D,
        source: Vec<f64>,
        sensors: Vec<[f64; 2]>,
        noise_sigma: f64,
    ) -> Result<Self> {
        if grid.nx < 3 || grid.ny < 3 {
            return Err(DarcyError::NoInterior {
                nx: grid.nx,
                ny: grid.ny,
            });
        }
        if source.len() != grid.len() {
            return Err(DarcyError::FieldSize {
                expected: grid.len(),
                got: source.len(),
            });
        }
        if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
            return Err(DarcyError::Sigma(noise_sigma));
        }
        for (index, s) in sensors.iter().enumerate() {
            if !(s[0] > 0.0 && s[0] < 1.0 && s[1] > 0.0 && s[1] < 1.0) {
                return Err(DarcyError::SensorOutside {
                    index,
                    x: s[0],
                    y: s[1],
                });
            }
        }
        Ok(Self {
            grid,
            source,
            sensors,
            noise_sigma,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }
}

/// Symmetric positive definite banded matrix, lower band stored by rows:
/// `band[i * (w + 1) + k]` holds entry `(i, i − k)`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    pub n: usize,
    pub w: usize,
    pub band: Vec<f64>,
}

impl BandedSpd {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.w {
            0.0
        } else {
            self.band[i * (self.w + 1) + (i - j)]
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for k in 0..=self.w.min(i) {
                let a = self.band[i * (self.w + 1) + k];
                if a != 0.0 {
                    let j = i - k;
                    y[i] += a * x[j];
                    if k > 0 {
                        y[j] += a * x[i];
                    }
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// In-place banded Cholesky `A = L Lᵀ`.
    fn factor(&self) -> Result<Vec<f64>> {
        let (n, w) = (self.n, self.w);
        let mut l = self.band.clone();
        let at = |i: usize, j: usize| i * (w + 1) + (i - j);
        for i in 0..n {
            let j0 = i.saturating_sub(w);
            for j in j0..=i {
                let mut s = l[at(i, j)];
                for k in j0.max(j.saturating_sub(w))..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(DarcyError::Singular(i));
                    }
                    l[at(i, i)] = s.sqrt();
                } else {
                    l[at(i, j)] = s / l[at(j, j)];
                }
            }
        }
        Ok(l)
    }

    fn substitute(&self, l: &[f64], b: &[f64]) -> Vec<f64> {
        let (n, w) = (self.n, self.w);
        let at = |i: usize, j: usize| i * (w + 1) + (i - j);
        let mut z = b.to_vec();
        for i in 0..n {
            for k in i.saturating_sub(w)..i {
                z[i] -= l[at(i, k)] * z[k];
            }
            z[i] /= l[at(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..(i + w + 1).min(n) {
                z[i] -= l[at(k, i)] * z[k];
            }
            z[i] /= l[at(i, i)];
        }
        z
    }

    /// Solves `A x = b`, with one step of iterative refinement, and checks
    /// the relative residual.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let l = self.factor()?;
        let mut x = self.substitute(&l, b);
        let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_b == 0.0 {
            return Ok(vec![0.0; self.n]);
        }
        let residual =
            |x: &[f64]| -> Vec<f64> { self.mul(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
        let r = residual(&x);
        let dx = self.substitute(&l, &r);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        let rel = residual(&x).iter().map(|v| v * v).sum::<f64>().sqrt() / norm_b;
        if rel > RESIDUAL_TOL {
            return Err(DarcyError::Residual(rel));
        }
        Ok(x)
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Stiffness matrix on the interior nodes, ordered row-major.
pub fn assemble(problem: &DarcyProblem, u: &[f64]) -> Result<BandedSpd> {
    let g = &problem.grid;
    if u.len() != g.len() {
        return Err(DarcyError::FieldSize {
            expected: g.len(),
            got: u.len(),
        });
    }
    if let Some(i) = u.iter().position(|x| !x.is_finite()) {
        return Err(DarcyError::NonFinite(i));
    }
    let (mx, my) = (g.nx - 2, g.ny - 2);
    let n = mx * my;
    let w = mx;
    let mut band = vec![0.0; n * (w + 1)];
    let kappa: Vec<f64> = u.iter().map(|x| x.exp()).collect();
    let (cx, cy) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    for jy in 0..my {
        for jx in 0..mx {
            let row = jy * mx + jx;
            let node = g.index(jx + 1, jy + 1);
            let k0 = kappa[node];
            let kw = harmonic(k0, kappa[node - 1]) * cx;
            let ke = harmonic(k0, kappa[node + 1]) * cx;
            let ks = harmonic(k0, kappa[node - g.nx]) * cy;
            let kn = harmonic(k0, kappa[node + g.nx]) * cy;
            band[row * (w + 1)] = kw + ke + ks + kn;
            if jx > 0 {
                band[row * (w + 1) + 1] = -kw;
            }
            if jy > 0 {
                band[row * (w + 1) + w] = -ks;
            }
        }
    }
    Ok(BandedSpd { n, w, band })
}

/// Pressure at every grid node (zero on the boundary).
pub fn solve_darcy(problem: &DarcyProblem, u: &[f64]) -> Result<Vec<f64>> {
    let g = &problem.grid;
    let a = assemble(problem, u)?;
    let (mx, my) = (g.nx - 2, g.ny - 2);
    let b: Vec<f64> = (0..mx * my)
        .map(|r| problem.source[g.index(r % mx + 1, r / mx + 1)])
        .collect();
    let x = a.solve(&b)?;
    let mut p = vec![0.0; g.len()];
    for (r, v) in x.into_iter().enumerate() {
        p[g.index(r % mx + 1, r / mx + 1)] = v;
    }
    Ok(p)
}

/// Bilinear interpolation of a nodal field at `(x, y)` in the unit square.
pub fn interpolate(grid: &Grid2D, p: &[f64], x: f64, y: f64) -> f64 {
    let fx = (x / grid.hx()).clamp(0.0, (grid.nx - 1) as f64);
    let fy = (y / grid.hy()).clamp(0.0, (grid.ny - 1) as f64);
    let ix = (fx.floor() as usize).min(grid.nx - 2);
    let iy = (fy.floor() as usize).min(grid.ny - 2);
    let (tx, ty) = (fx - ix as f64, fy - iy as f64);
    let v = |a: usize, b: usize| p[grid.index(a, b)];
    (1.0 - tx) * (1.0 - ty) * v(ix, iy)
        + tx * (1.0 - ty) * v(ix + 1, iy)
        + (1.0 - tx) * ty * v(ix, iy + 1)
        + tx * ty * v(ix + 1, iy + 1)
}

pub fn observe(problem: &DarcyProblem, p: &[f64]) -> Result<ObservationVector> {
    if p.len() != problem.grid.len() {
        return Err(DarcyError::FieldSize {
            expected: problem.grid.len(),
            got: p.len(),
        });
    }
    Ok(problem
        .sensors
        .iter()
        .map(|s| interpolate(&problem.grid, p, s[0], s[1]))
        .collect())
}

/// Noiseless observation `G(u)`.
pub fn forward(problem: &DarcyProblem, u: &[f64]) -> Result<ObservationVector> {
    observe(problem, &solve_darcy(problem, u)?)
}

/// `G(u) + N(0, σ² I)`.
pub fn simulate_data(problem: &DarcyProblem, u: &[f64], seed: u64) -> Result<ObservationVector> {
    let mut y = forward(problem, u)?;
    add_noise(problem, &mut y, seed);
    Ok(y)
}

pub fn add_noise(problem: &DarcyProblem, y: &mut [f64], seed: u64) {
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, problem.noise_sigma).expect("positive sigma");
    y.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
}

/// `Φ(u; y) = Σ |G(u)_j − y_j|² / (2σ²)`.
pub fn likelihood_phi(problem: &DarcyProblem, u: &[f64], y: &[f64]) -> Result<f64> {
    let g = forward(problem, u)?;
    misfit(problem, &g, y)
}

pub fn misfit(problem: &DarcyProblem, g: &[f64], y: &[f64]) -> Result<f64> {
    if y.len() != g.len() {
        return Err(DarcyError::ObservationSize {
            expected: g.len(),
            got: y.len(),
        });
    }
    let s2 = problem.noise_sigma * problem.noise_sigma;
    Ok(g.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * s2))
}
