//! Empirical probability measures on product spaces.
//!
//! A [`JointMeasure`] stores atoms `(y, x)` of a product space `Y × X` with the
//! conditioning coordinate `y` kept separate, which is what the conditional
//! solvers group on. [`pair_reference`] builds a reference measure whose
//! `y`-atoms are bitwise copies of the target's, so the two `y`-marginals agree
//! exactly.

use std::io::{Read, Write};
use std::ops::Deref;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::rng_from_seed;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("empirical measure needs at least one point")]
    Empty,
    #[error("negative weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("weights sum to zero")]
    ZeroMass,
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate in point {index}")]
    NonFinite { index: usize },
    #[error("csv: {0}")]
    Csv(String),
}

/// A point of a finite-dimensional coordinate space. All coordinates are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, MeasureError> {
        if coords.iter().all(|c| c.is_finite()) {
            Ok(Point(coords))
        } else {
            Err(MeasureError::NonFinite { index: 0 })
        }
    }

    /// Builds a point without the finiteness check. Callers guarantee finiteness.
    pub(crate) fn from_vec(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Point(coords)
    }

    pub fn scalar(x: f64) -> Self {
        Point::from_vec(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Concatenation `(self, other)`.
    pub fn concat(&self, other: &Point) -> Point {
        let mut v = Vec::with_capacity(self.dim() + other.dim());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Point(v)
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    /// Exact coordinate-wise equality (`0.0 == -0.0`).
    pub fn same_atom(&self, other: &Point) -> bool {
        self.0 == other.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point::new(vec![x]).expect("finite scalar")
    }
}

/// A target sample `(y, u)`: conditioning coordinate and parameter coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub y: Point,
    pub u: Point,
}

impl PairedSample {
    pub fn new(y: Point, u: Point) -> Self {
        Self { y, u }
    }
}

/// Weighted point cloud with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }
}

fn normalized_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>, MeasureError> {
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(MeasureError::WeightCount {
                    expected: n,
                    got: w.len(),
                });
            }
            for (index, &weight) in w.iter().enumerate() {
                if !(weight >= 0.0) || !weight.is_finite() {
                    return Err(MeasureError::NegativeWeight { index, weight });
                }
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(MeasureError::ZeroMass);
            }
            Ok(w.iter().map(|x| x / total).collect())
        }
    }
}

fn check_dims(points: &[Point]) -> Result<usize, MeasureError> {
    let first = points.first().ok_or(MeasureError::Empty)?;
    let d = first.dim();
    for (index, p) in points.iter().enumerate() {
        if p.dim() != d {
            return Err(MeasureError::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(MeasureError::NonFinite { index });
        }
    }
    Ok(d)
}

/// Builds an empirical measure. Weights default to uniform and are normalized.
pub fn make_empirical(
    points: Vec<Point>,
    weights: Option<&[f64]>,
) -> Result<EmpiricalMeasure, MeasureError> {
    check_dims(&points)?;
    let weights = normalized_weights(points.len(), weights)?;
    Ok(EmpiricalMeasure { points, weights })
}

/// `Σ_j w_j ‖x_j‖²`.
pub fn second_moment(m: &EmpiricalMeasure) -> f64 {
    m.points
        .iter()
        .zip(&m.weights)
        .map(|(p, w)| w * p.norm_sq())
        .sum()
}

/// Empirical measure on a product space `Y × X`, conditioning coordinate first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMeasure {
    y: Vec<Point>,
    x: Vec<Point>,
    weights: Vec<f64>,
}

impl JointMeasure {
    pub fn new(
        y: Vec<Point>,
        x: Vec<Point>,
        weights: Option<&[f64]>,
    ) -> Result<Self, MeasureError> {
        if y.len() != x.len() {
            return Err(MeasureError::WeightCount {
                expected: y.len(),
                got: x.len(),
            });
        }
        check_dims(&y)?;
        check_dims(&x)?;
        let weights = normalized_weights(y.len(), weights)?;
        Ok(Self { y, x, weights })
    }

    pub fn from_samples(samples: &[PairedSample]) -> Result<Self, MeasureError> {
        let (y, x) = samples.iter().map(|s| (s.y.clone(), s.u.clone())).unzip();
        Self::new(y, x, None)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[Point] {
        &self.y
    }

    pub fn x(&self) -> &[Point] {
        &self.x
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn y_dim(&self) -> usize {
        self.y[0].dim()
    }

    pub fn x_dim(&self) -> usize {
        self.x[0].dim()
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-15)
    }

    /// The measure on the concatenated coordinates `(y, x)`.
    pub fn joint(&self) -> EmpiricalMeasure {
        EmpiricalMeasure {
            points: self
                .y
                .iter()
                .zip(&self.x)
                .map(|(y, x)| y.concat(x))
                .collect(),
            weights: self.weights.clone(),
        }
    }

    /// Replace the `y`-atoms, keeping `x` and weights.
    pub fn with_y(&self, y: Vec<Point>) -> Result<Self, MeasureError> {
        Self::new(y, self.x.clone(), Some(&self.weights))
    }
}

/// Source of reference draws `v ~ η_V`.
pub trait ReferenceSampler {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut dyn RngCore) -> Point;
}

/// Standard normal `N(0, I_d)`.
#[derive(Debug, Clone, Copy)]
pub struct StandardNormalSampler {
    pub dim: usize,
}

impl ReferenceSampler for StandardNormalSampler {
    fn dim(&self) -> usize {
        self.dim
    }
    fn draw(&self, rng: &mut dyn RngCore) -> Point {
        Point::from_vec((0..self.dim).map(|_| StandardNormal.sample(rng)).collect())
    }
}

/// Uniform on the box `[low, high]^d`.
#[derive(Debug, Clone, Copy)]
pub struct UniformSampler {
    pub dim: usize,
    pub low: f64,
    pub high: f64,
}

impl ReferenceSampler for UniformSampler {
    fn dim(&self) -> usize {
        self.dim
    }
    fn draw(&self, rng: &mut dyn RngCore) -> Point {
        let dist = Uniform::new_inclusive(self.low, self.high).expect("valid uniform range");
        Point::from_vec((0..self.dim).map(|_| dist.sample(rng)).collect())
    }
}

/// Always returns the same point.
#[derive(Debug, Clone)]
pub struct ConstantSampler(pub Point);

impl ReferenceSampler for ConstantSampler {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn draw(&self, _rng: &mut dyn RngCore) -> Point {
        self.0.clone()
    }
}

/// Builds `(η^J, ν^J)` from target samples: the reference atoms are `(y_j, v_j)`
/// with `y_j` copied from the targets and `v_j` drawn i.i.d. from `sampler`.
/// Both measures carry uniform weights `1/J`, and atom `j` of either measure
/// has the same `y`.
pub fn pair_reference(
    targets: &[PairedSample],
    sampler: &dyn ReferenceSampler,
    seed: u64,
) -> Result<(JointMeasure, JointMeasure), MeasureError> {
    if targets.is_empty() {
        return Err(MeasureError::Empty);
    }
    let mut rng = rng_from_seed(seed);
    let d = sampler.dim();
    let mut v = Vec::with_capacity(targets.len());
    for _ in targets {
        let p = sampler.draw(&mut rng);
        if p.dim() != d {
            return Err(MeasureError::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
        v.push(p);
    }
    let y: Vec<Point> = targets.iter().map(|s| s.y.clone()).collect();
    let reference = JointMeasure::new(y, v, None)?;
    let target = JointMeasure::from_samples(targets)?;
    Ok((reference, target))
}

/// Writes samples as CSV with header `y1,..,yd,u1,..,um`. Optional comment lines
/// (prefixed with `# `) go before the header.
pub fn write_samples_csv<W: Write>(
    mut w: W,
    samples: &[PairedSample],
    comments: &[String],
) -> Result<(), MeasureError> {
    let err = |e: std::io::Error| MeasureError::Csv(e.to_string());
    for c in comments {
        writeln!(w, "# {c}").map_err(err)?;
    }
    let (dy, du) = samples
        .first()
        .map(|s| (s.y.dim(), s.u.dim()))
        .ok_or(MeasureError::Empty)?;
    let mut wr = csv::Writer::from_writer(w);
    let header: Vec<String> = (1..=dy)
        .map(|i| format!("y{i}"))
        .chain((1..=du).map(|i| format!("u{i}")))
        .collect();
    wr.write_record(&header)
        .map_err(|e| MeasureError::Csv(e.to_string()))?;
    for s in samples {
        if s.y.dim() != dy || s.u.dim() != du {
            return Err(MeasureError::DimensionMismatch {
                expected: dy + du,
                got: s.y.dim() + s.u.dim(),
            });
        }
        let rec: Vec<String> =
            s.y.iter()
                .chain(s.u.iter())
                .map(|x| format!("{x:e}"))
                .collect();
        wr.write_record(&rec)
            .map_err(|e| MeasureError::Csv(e.to_string()))?;
    }
    wr.flush().map_err(err)
}

/// Reads the CSV format written by [`write_samples_csv`]. Lines starting with
/// `#` are skipped.
pub fn read_samples_csv<R: Read>(r: R) -> Result<Vec<PairedSample>, MeasureError> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header = rd
        .headers()
        .map_err(|e| MeasureError::Csv(e.to_string()))?
        .clone();
    let dy = header.iter().filter(|h| h.starts_with('y')).count();
    let du = header.iter().filter(|h| h.starts_with('u')).count();
    if dy + du != header.len() || dy == 0 || du == 0 {
        return Err(MeasureError::Csv(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| MeasureError::Csv(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| MeasureError::Csv(format!("record {}: {e}", line + 1)))?;
        if vals.len() != dy + du {
            return Err(MeasureError::DimensionMismatch {
                expected: dy + du,
                got: vals.len(),
            });
        }
        let y =
            Point::new(vals[..dy].to_vec()).map_err(|_| MeasureError::NonFinite { index: line })?;
        let u =
            Point::new(vals[dy..].to_vec()).map_err(|_| MeasureError::NonFinite { index: line })?;
        out.push(PairedSample { y, u });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pts(v: &[&[f64]]) -> Vec<Point> {
        v.iter().map(|c| Point::new(c.to_vec()).unwrap()).collect()
    }

    #[test]
    fn uniform_default_weights() {
        let m = make_empirical(pts(&[&[0.0], &[1.0], &[2.0]]), None).unwrap();
        for w in m.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_are_normalized() {
        let m = make_empirical(pts(&[&[0.0], &[1.0]]), Some(&[2.0, 2.0])).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let single = make_empirical(pts(&[&[4.0, 1.0]]), None).unwrap();
        assert_eq!(single.weights(), &[1.0]);
    }

    #[test]
    fn renormalizing_is_idempotent() {
        let m = make_empirical(pts(&[&[0.0], &[1.0], &[5.0]]), Some(&[1.0, 3.0, 0.5])).unwrap();
        let again = make_empirical(m.points().to_vec(), Some(m.weights())).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(make_empirical(vec![], None), Err(MeasureError::Empty));
        assert!(matches!(
            make_empirical(pts(&[&[0.0], &[1.0]]), Some(&[1.0, -1.0])),
            Err(MeasureError::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(
            make_empirical(pts(&[&[0.0], &[1.0, 2.0]]), None),
            Err(MeasureError::DimensionMismatch { .. })
        ));
        assert!(Point::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn second_moment_cases() {
        let origin = make_empirical(pts(&[&[0.0, 0.0]]), None).unwrap();
        assert_eq!(second_moment(&origin), 0.0);
        let units = make_empirical(pts(&[&[1.0, 0.0], &[0.0, -1.0]]), None).unwrap();
        assert!((second_moment(&units) - 1.0).abs() < 1e-15);

        let mut rng = rng_from_seed(11);
        let cloud: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let w: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        let mut oracle = 0.0;
        for (c, wi) in cloud.iter().zip(&w) {
            for x in c {
                oracle += wi / total * x * x;
            }
        }
        let m = make_empirical(
            cloud.into_iter().map(|c| Point::new(c).unwrap()).collect(),
            Some(&w),
        )
        .unwrap();
        assert!((second_moment(&m) - oracle).abs() < 1e-12);
    }

    #[test]
    fn pair_reference_singleton() {
        let t = vec![PairedSample::new(Point::from(0.0), Point::from(5.0))];
        let (eta, nu) = pair_reference(&t, &ConstantSampler(Point::from(0.0)), 1).unwrap();
        assert_eq!(eta.joint().points()[0].coords(), &[0.0, 0.0]);
        assert_eq!(nu.joint().points()[0].coords(), &[0.0, 5.0]);
    }

    #[test]
    fn pair_reference_matches_y_and_is_deterministic() {
        let mut rng = rng_from_seed(5);
        let t: Vec<PairedSample> = (0..20)
            .map(|_| {
                PairedSample::new(
                    Point::from(rng.random::<f64>()),
                    Point::from(rng.random::<f64>()),
                )
            })
            .collect();
        let s = StandardNormalSampler { dim: 1 };
        let (eta, nu) = pair_reference(&t, &s, 9).unwrap();
        assert_eq!(eta.len(), 20);
        assert!(eta.weights().iter().all(|w| *w == 1.0 / 20.0));
        assert!(eta.y().iter().zip(nu.y()).all(|(a, b)| a.same_atom(b)));
        let (eta2, _) = pair_reference(&t, &s, 9).unwrap();
        assert_eq!(eta, eta2);
    }

    struct Wobbly;
    impl ReferenceSampler for Wobbly {
        fn dim(&self) -> usize {
            1
        }
        fn draw(&self, rng: &mut dyn RngCore) -> Point {
            if rng.next_u32() % 2 == 0 {
                Point::from(0.0)
            } else {
                Point::new(vec![0.0, 0.0]).unwrap()
            }
        }
    }

    #[test]
    fn pair_reference_rejects_inconsistent_sampler() {
        let t: Vec<PairedSample> = (0..16)
            .map(|i| PairedSample::new(Point::from(i as f64), Point::from(0.0)))
            .collect();
        assert!(matches!(
            pair_reference(&t, &Wobbly, 0),
            Err(MeasureError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn csv_round_trip_with_comments() {
        let t = vec![
            PairedSample::new(Point::new(vec![0.5, -1.0]).unwrap(), Point::from(2.25)),
            PairedSample::new(Point::new(vec![1e-3, 7.0]).unwrap(), Point::from(-0.125)),
        ];
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &t, &["seed=3".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed=3\ny1,y2,u1\n"));
        assert_eq!(read_samples_csv(&buf[..]).unwrap(), t);
    }
}
