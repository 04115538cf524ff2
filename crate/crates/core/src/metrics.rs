//! Comparison metrics: 1D and sliced Wasserstein-1, field errors, variance
//! scatter, histograms and mode-count stability trends.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::rng_from_seed;

pub const DEFAULT_PROJECTIONS: usize = 32;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty sample")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("relative error against a zero reference")]
    ZeroReference,
    #[error("mode counts must be strictly increasing")]
    ModeOrder,
    #[error("sampler failed: {0}")]
    Sampler(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, MetricsError>;

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Wasserstein-1 distance between two empirical measures on the line.
pub fn wasserstein1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (a, b) = (sorted(a), sorted(b));
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    // ∫₀¹ |F_a⁻¹(t) − F_b⁻¹(t)| dt over the merged quantile breakpoints
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut t = 0.0;
    let mut total = 0.0;
    while i < na && j < nb {
        let ta = (i + 1) as f64 / na as f64;
        let tb = (j + 1) as f64 / nb as f64;
        let next = ta.min(tb);
        total += (next - t) * (a[i] - b[j]).abs();
        t = next;
        if ta <= tb {
            i += 1;
        }
        if tb <= ta {
            j += 1;
        }
    }
    Ok(total)
}

/// `‖a − b‖₂`, divided by `‖b‖₂` when `relative`.
pub fn field_l2_error(a: &[f64], b: &[f64], relative: bool) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MetricsError::Length(a.len(), b.len()));
    }
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    if !relative {
        return Ok(diff);
    }
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok(diff / norm)
}

pub fn variance_scatter(var_a: &[f64], var_b: &[f64]) -> Result<Vec<(f64, f64)>> {
    if var_a.len() != var_b.len() {
        return Err(MetricsError::Length(var_a.len(), var_b.len()));
    }
    Ok(var_a.iter().copied().zip(var_b.iter().copied()).collect())
}

/// Bin centers and normalized densities over `[lo, hi)`; values outside are dropped.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in xs {
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let n = xs.len().max(1) as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + (k as f64 + 0.5) * width, c as f64 / (n * width)))
        .collect()
}

/// Unit directions drawn from a seeded Gaussian.
pub fn random_directions(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| loop {
            let d: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break d.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Mean of 1D Wasserstein-1 distances over `n_projections` fixed directions.
pub fn sliced_w1(a: &[Vec<f64>], b: &[Vec<f64>], n_projections: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let dim = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|p| p.len() != dim) {
        return Err(MetricsError::Length(dim, bad.len()));
    }
    let dirs = random_directions(dim, n_projections, seed);
    let project = |pts: &[Vec<f64>], d: &[f64]| -> Vec<f64> {
        pts.iter()
            .map(|p| p.iter().zip(d).map(|(x, y)| x * y).sum())
            .collect()
    };
    let mut total = 0.0;
    for d in &dirs {
        total += wasserstein1_1d(&project(a, d), &project(b, d))?;
    }
    Ok(total / n_projections as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendRow {
    pub modes: usize,
    pub next_modes: usize,
    pub sliced_w1: f64,
}

/// Sliced W1 between posterior samples at consecutive mode counts.
/// `sampler(N, y, n)` must return `n` samples at `N` modes in a common
/// coordinate system (typically reconstructed fields).
pub fn stability_trend<F, E>(
    sampler: F,
    modes: &[usize],
    probe_y: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<TrendRow>>
where
    F: Fn(usize, &[f64], usize) -> std::result::Result<Vec<Vec<f64>>, E>,
    E: std::fmt::Display,
{
    if modes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::ModeOrder);
    }
    let mut sets = Vec::with_capacity(modes.len());
    for &n in modes {
        sets.push(
            sampler(n, probe_y, n_samples).map_err(|e| MetricsError::Sampler(e.to_string()))?,
        );
    }
    let mut rows = Vec::new();
    for k in 1..modes.len() {
        rows.push(TrendRow {
            modes: modes[k - 1],
            next_modes: modes[k],
            sliced_w1: sliced_w1(&sets[k - 1], &sets[k], DEFAULT_PROJECTIONS, seed)?,
        });
    }
    Ok(rows)
}

/// Comment lines, a header, then rows.
pub fn write_table<W: Write>(
    mut w: W,
    comments: &[String],
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn w1_examples() {
        assert_eq!(wasserstein1_1d(&[0.3, 0.1], &[0.1, 0.3]).unwrap(), 0.0);
        assert_eq!(wasserstein1_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1_1d(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 2.0);
        assert!(wasserstein1_1d(&[], &[1.0]).is_err());
    }

    #[test]
    fn w1_unequal_sizes_against_cdf_integral() {
        // W1 = ∫ |F_a(x) − F_b(x)| dx, evaluated on a fine grid
        let mut rng = rng_from_seed(6);
        let a: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 1.5).collect();
        let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let n = 300_000;
        let (lo, hi) = (-0.1, 1.6);
        let h = (hi - lo) / n as f64;
        let integral: f64 = (0..n)
            .map(|k| {
                (cdf(&a, lo + (k as f64 + 0.5) * h) - cdf(&b, lo + (k as f64 + 0.5) * h)).abs() * h
            })
            .sum();
        assert!((wasserstein1_1d(&a, &b).unwrap() - integral).abs() < 1e-4);
        // duplicating every atom leaves the measure unchanged
        let aa: Vec<f64> = a.iter().chain(&a).copied().collect();
        let w = wasserstein1_1d(&a, &b).unwrap();
        assert!((wasserstein1_1d(&aa, &b).unwrap() - w).abs() < 1e-12);
    }

    #[test]
    fn field_errors() {
        let b = vec![1.0, -2.0, 0.5];
        let a: Vec<f64> = b.iter().map(|x| 2.0 * x).collect();
        assert_eq!(field_l2_error(&b, &b, true).unwrap(), 0.0);
        assert!((field_l2_error(&a, &b, true).unwrap() - 1.0).abs() < 1e-15);
        assert!(field_l2_error(&a, &[0.0; 3], true).is_err());
        let mut rng = rng_from_seed(2);
        let x: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let mut direct = 0.0;
        for i in 0..50 {
            direct += (x[i] - y[i]) * (x[i] - y[i]);
        }
        assert!((field_l2_error(&x, &y, false).unwrap() - direct.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scatter_rows() {
        let v = vec![0.1, 0.2, 0.3];
        let s = variance_scatter(&v, &v).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|(a, b)| a == b));
        assert!(variance_scatter(&v, &v[..2]).is_err());
    }

    #[test]
    fn histogram_integrates_to_one() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let h = histogram(&xs, 0.0, 1.0, 10);
        let mass: f64 = h.iter().map(|(_, d)| d * 0.1).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sliced_w1_of_a_shift() {
        // for a shift by c every projection moves by ⟨c, θ⟩
        let mut rng = rng_from_seed(4);
        let a: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random(), rng.random(), rng.random()])
            .collect();
        let c = [0.3, -0.1, 0.2];
        let b: Vec<Vec<f64>> = a
            .iter()
            .map(|p| p.iter().zip(&c).map(|(x, s)| x + s).collect())
            .collect();
        let dirs = random_directions(3, 32, 9);
        let want: f64 = dirs
            .iter()
            .map(|d| d.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>().abs())
            .sum::<f64>()
            / 32.0;
        assert!((sliced_w1(&a, &b, 32, 9).unwrap() - want).abs() < 1e-12);
        assert_eq!(sliced_w1(&a, &a, 32, 9).unwrap(), 0.0);
    }

    #[test]
    fn trend_rejects_unsorted_modes() {
        let s = |_: usize, _: &[f64], n: usize| Ok::<_, String>(vec![vec![0.0]; n]);
        assert!(stability_trend(s, &[5, 5], &[0.0], 3, 0).is_err());
        let rows = stability_trend(s, &[5, 10, 20], &[0.0], 3, 0).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.sliced_w1 == 0.0));
    }

    proptest! {
        #[test]
        fn prop_w1_metric(a in prop::collection::vec(-5.0f64..5.0, 6), b in prop::collection::vec(-5.0f64..5.0, 6),
                          c in prop::collection::vec(-5.0f64..5.0, 6), shift in -3.0f64..3.0) {
            let ab = wasserstein1_1d(&a, &b).unwrap();
            prop_assert_eq!(ab, wasserstein1_1d(&b, &a).unwrap());
            prop_assert!(ab <= wasserstein1_1d(&a, &c).unwrap() + wasserstein1_1d(&c, &b).unwrap() + 1e-12);
            prop_assert_eq!(wasserstein1_1d(&a, &a).unwrap(), 0.0);
            let mut sa = a.clone();
            sa.sort_by(f64::total_cmp);
            let mut sb = b.clone();
            sb.sort_by(f64::total_cmp);
            prop_assert_eq!(ab == 0.0, sa == sb);
            let a2: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let b2: Vec<f64> = b.iter().map(|x| x + shift).collect();
            prop_assert!((wasserstein1_1d(&a2, &b2).unwrap() - ab).abs() < 1e-12);
        }
    }
}
