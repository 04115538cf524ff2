//! Two-dimensional benchmark targets with `y` the first coordinate and `u`
//! the second, plus slab rejection sampling of their conditionals.
//!
//! Raw draws live in `[−4, 4]²` (out-of-box draws are redrawn) and are
//! scaled by `1/4` into `[−1, 1]²`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{PairedSample, Point};
use crate::rng::{rng_from_seed, SeededRng};

pub const RAW_BOX: f64 = 4.0;
pub const DEFAULT_SLAB_DELTA: f64 = 0.05;
pub const MIN_SLAB_ACCEPTANCE: f64 = 1e-5;
const SLAB_BATCH: usize = 4096;
const SLAB_MIN_DRAWS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("unknown benchmark family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("slab acceptance {rate:e} below threshold after {draws} draws; {kept} values kept")]
    LowAcceptance {
        rate: f64,
        draws: usize,
        kept: usize,
        partial: SlabSample,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Benchmark2D {
    /// Gaussian blobs stretched along arms that twist with radius.
    Pinwheel {
        arms: usize,
        radial_std: f64,
        tangential_std: f64,
        rate: f64,
    },
    /// Two interleaved half circles with Gaussian noise.
    TwoMoons { noise: f64 },
    /// Uniform on alternating cells of a 4×4 board.
    Checkerboard,
    /// Planar Archimedean spiral with Gaussian noise.
    SwissRoll { noise: f64 },
    /// Uniform on the whole box; `y` and `u` independent.
    UniformBox,
}

/// `normalized = scale · raw + shift`, per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub shift: f64,
}

impl Normalization {
    pub fn apply(&self, raw: f64) -> f64 {
        self.scale * raw + self.shift
    }
    pub fn invert(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }
}

pub const NORMALIZATION: Normalization = Normalization {
    scale: 1.0 / RAW_BOX,
    shift: 0.0,
};

pub const FAMILIES: [&str; 4] = ["pinwheel", "two_moons", "checkerboard", "swiss_roll"];

impl Benchmark2D {
    pub fn from_name(name: &str) -> Result<Self, BenchmarkError> {
        Ok(match name {
            "pinwheel" => Self::Pinwheel {
                arms: 5,
                radial_std: 0.3,
                tangential_std: 0.1,
                rate: 0.25,
            },
            "two_moons" | "moons" => Self::TwoMoons { noise: 0.1 },
            "checkerboard" => Self::Checkerboard,
            "swiss_roll" => Self::SwissRoll { noise: 1.0 },
            "uniform" | "uniform_box" => Self::UniformBox,
            other => return Err(BenchmarkError::UnknownFamily(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Pinwheel { .. } => "pinwheel",
            Self::TwoMoons { .. } => "two_moons",
            Self::Checkerboard => "checkerboard",
            Self::SwissRoll { .. } => "swiss_roll",
            Self::UniformBox => "uniform_box",
        }
    }

    pub fn validate(&self) -> Result<(), BenchmarkError> {
        let bad = |what: &str| Err(BenchmarkError::Parameter(what.to_string()));
        match *self {
            Self::Pinwheel {
                arms,
                radial_std,
                tangential_std,
                rate,
            } => {
                if arms == 0 {
                    return bad("pinwheel needs at least one arm");
                }
                if !(radial_std >= 0.0 && tangential_std >= 0.0 && rate.is_finite()) {
                    return bad("pinwheel spreads must be non-negative and the rate finite");
                }
            }
            Self::TwoMoons { noise } | Self::SwissRoll { noise } => {
                if !(noise >= 0.0 && noise.is_finite()) {
                    return bad("noise must be non-negative");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// One draw in raw coordinates (may leave the box).
    fn raw_draw(&self, rng: &mut SeededRng) -> [f64; 2] {
        let normal = |rng: &mut SeededRng| -> f64 { StandardNormal.sample(rng) };
        match *self {
            Self::Pinwheel {
                arms,
                radial_std,
                tangential_std,
                rate,
            } => {
                let arm = rng.random_range(0..arms);
                let r = normal(rng) * radial_std + 1.0;
                let t = normal(rng) * tangential_std;
                let angle = 2.0 * PI * arm as f64 / arms as f64 + rate * r.exp();
                let (s, c) = angle.sin_cos();
                [2.0 * (c * r - s * t), 2.0 * (s * r + c * t)]
            }
            Self::TwoMoons { noise } => {
                let t = rng.random::<f64>() * PI;
                let (x, y) = if rng.random::<bool>() {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                let x = x + noise * normal(rng);
                let y = y + noise * normal(rng);
                [2.0 * x - 1.0, 2.0 * y - 0.5]
            }
            Self::Checkerboard => {
                let x = rng.random::<f64>() * 4.0 - 2.0;
                let y = rng.random::<f64>() - 2.0 * rng.random_range(0..2) as f64
                    + (x.floor().rem_euclid(2.0));
                [2.0 * x, 2.0 * y]
            }
            Self::SwissRoll { noise } => {
                let t = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
                let x = t * t.cos() + noise * normal(rng);
                let y = t * t.sin() + noise * normal(rng);
                [x / 5.0 * 1.5, y / 5.0 * 1.5]
            }
            Self::UniformBox => [
                rng.random_range(-RAW_BOX..RAW_BOX),
                rng.random_range(-RAW_BOX..RAW_BOX),
            ],
        }
    }

    /// One normalized draw in `[−1, 1]²`.
    pub fn draw(&self, rng: &mut SeededRng) -> [f64; 2] {
        loop {
            let [a, b] = self.raw_draw(rng);
            if a.abs() <= RAW_BOX && b.abs() <= RAW_BOX {
                return [NORMALIZATION.apply(a), NORMALIZATION.apply(b)];
            }
        }
    }
}

pub fn sample_benchmark(
    b: &Benchmark2D,
    n: usize,
    seed: u64,
) -> Result<Vec<PairedSample>, BenchmarkError> {
    b.validate()?;
    if n == 0 {
        return Err(BenchmarkError::Parameter("n must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..n)
        .map(|_| {
            let [y, u] = b.draw(&mut rng);
            PairedSample::new(Point::scalar(y), Point::scalar(u))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabSample {
    pub values: Vec<f64>,
    pub draws: usize,
    pub acceptance_rate: f64,
}

/// Keeps `u` from draws with `|y − y0| ≤ delta` until `n_keep` are collected.
/// Gives up once at least a million draws have been made at an acceptance
/// rate below `1e-5`, returning what was collected inside the error.
pub fn conditional_truth_slab(
    b: &Benchmark2D,
    y0: f64,
    delta: f64,
    n_keep: usize,
    seed: u64,
) -> Result<SlabSample, BenchmarkError> {
    b.validate()?;
    if !(delta > 0.0) {
        return Err(BenchmarkError::Parameter(format!(
            "slab width must be positive, got {delta}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut values = Vec::with_capacity(n_keep);
    let mut draws = 0usize;
    while values.len() < n_keep {
        for _ in 0..SLAB_BATCH {
            let [y, u] = b.draw(&mut rng);
            draws += 1;
            if (y - y0).abs() <= delta {
                values.push(u);
                if values.len() == n_keep {
                    break;
                }
            }
        }
        let rate = values.len() as f64 / draws as f64;
        if values.len() < n_keep && draws >= SLAB_MIN_DRAWS && rate < MIN_SLAB_ACCEPTANCE {
            let kept = values.len();
            return Err(BenchmarkError::LowAcceptance {
                rate,
                draws,
                kept,
                partial: SlabSample {
                    values,
                    draws,
                    acceptance_rate: rate,
                },
            });
        }
    }
    Ok(SlabSample {
        acceptance_rate: n_keep as f64 / draws as f64,
        values,
        draws,
    })
}

/// Fraction of `n` draws falling in the slab around `y0`.
pub fn slab_acceptance(b: &Benchmark2D, y0: f64, delta: f64, n: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .filter(|_| (b.draw(&mut rng)[0] - y0).abs() <= delta)
        .count() as f64
        / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::wasserstein1_1d;

    fn all() -> Vec<Benchmark2D> {
        FAMILIES
            .iter()
            .map(|f| Benchmark2D::from_name(f).unwrap())
            .chain([Benchmark2D::UniformBox])
            .collect()
    }

    #[test]
    fn bounded_and_deterministic() {
        for b in all() {
            let s = sample_benchmark(&b, 20_000, 3).unwrap();
            assert!(s
                .iter()
                .all(|p| p.y[0].abs() <= 1.01 && p.u[0].abs() <= 1.01 && p.y[0].is_finite()));
            assert_eq!(s[..50], sample_benchmark(&b, 50, 3).unwrap()[..]);
            // the box should actually be used, not a tiny corner of it
            let spread = s
                .iter()
                .map(|p| p.y[0].abs().max(p.u[0].abs()))
                .fold(0.0, f64::max);
            assert!(spread > 0.5, "{} spread {spread}", b.name());
        }
        assert!(Benchmark2D::from_name("spiral").is_err());
        assert!(sample_benchmark(&Benchmark2D::Checkerboard, 0, 1).is_err());
    }

    #[test]
    fn checkerboard_occupies_alternate_cells() {
        let s = sample_benchmark(&Benchmark2D::Checkerboard, 5000, 1).unwrap();
        for p in s {
            let cx = ((p.y[0] + 1.0) * 2.0).floor() as i64;
            let cy = ((p.u[0] + 1.0) * 2.0).floor() as i64;
            assert_eq!((cx + cy).rem_euclid(2), 0, "{:?}", (p.y[0], p.u[0]));
        }
    }

    #[test]
    fn uniform_slab_matches_uniform_cdf() {
        let b = Benchmark2D::UniformBox;
        let slab = conditional_truth_slab(&b, 0.3, DEFAULT_SLAB_DELTA, 10_000, 5).unwrap();
        assert_eq!(slab.values.len(), 10_000);
        // W1 against Uniform[−1, 1] via its quantiles at the midpoints
        let n = slab.values.len();
        let exact: Vec<f64> = (0..n)
            .map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64)
            .collect();
        assert!(wasserstein1_1d(&slab.values, &exact).unwrap() <= 0.02);
        // product target: the slab marginal does not depend on y0
        let other = conditional_truth_slab(&b, -0.7, DEFAULT_SLAB_DELTA, 10_000, 6).unwrap();
        assert!(wasserstein1_1d(&slab.values, &other.values).unwrap() <= 0.04);
    }

    #[test]
    fn slab_estimates_settle_as_delta_shrinks() {
        let b = Benchmark2D::from_name("two_moons").unwrap();
        let est: Vec<Vec<f64>> = [0.4, 0.2, 0.1, 0.05]
            .iter()
            .map(|&d| {
                conditional_truth_slab(&b, 0.1, d, 20_000, 7)
                    .unwrap()
                    .values
            })
            .collect();
        let gaps: Vec<f64> = est
            .windows(2)
            .map(|w| wasserstein1_1d(&w[0], &w[1]).unwrap())
            .collect();
        assert!(gaps[0] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn empty_slab_reports_partial() {
        match conditional_truth_slab(&Benchmark2D::UniformBox, 3.0, 0.01, 10, 1) {
            Err(BenchmarkError::LowAcceptance { kept, partial, .. }) => {
                assert_eq!(kept, 0);
                assert!(partial.values.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
