//! Penalized conditional Monge map.
//!
//! The map keeps `y` and sends `(y, v) ↦ T(y, v)`; it is trained to minimize
//!
//! ```text
//! (1/M) Σ ‖v_j − T(y_j, v_j)‖²  +  (1/λ) MMD({(y_j, T(y_j, v_j))}, {(y_j, u_j)})
//! ```
//!
//! over mini-batches. `T` is linear in its weights: a readout of the
//! standardized inputs, random Fourier features of `(y, v)` and of `y` alone,
//! and a bias. The divergence is a kernel MMD (the metric, not its square), see
//! [`KernelMetric`], so loss and gradient are available in closed form.
//! Training starts from `T(y, v) = v` or from a conditional Gaussian fit, see
//! [`MapInit`].

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{PairedSample, Point, ReferenceSampler};
use crate::numeric::{mean, sq_dist, variance};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum MongeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        trace: Vec<TraceRow>,
    },
    #[error("need at least {need} training pairs, got {got}")]
    TooFewSamples { need: usize, got: usize },
}

type Result<T> = std::result::Result<T, MongeError>;

/// Flat storage of `m` points of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(
            dim > 0 && data.len() % dim == 0,
            "buffer length is not a multiple of the dimension"
        );
        Self { dim, data }
    }

    pub fn from_points(points: &[Point]) -> Self {
        let dim = points.first().map_or(1, |p| p.dim());
        Self::new(dim, points.iter().flat_map(|p| p.iter().copied()).collect())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Paired `(y, x)` points: `x` is `v` for a reference batch, `u` for a target batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub y: PointSet,
    pub x: PointSet,
}

impl Batch {
    pub fn new(y: PointSet, x: PointSet) -> Self {
        assert_eq!(y.len(), x.len(), "batch halves differ in length");
        Self { y, x }
    }

    pub fn from_samples(samples: &[PairedSample]) -> Self {
        let y: Vec<Point> = samples.iter().map(|s| s.y.clone()).collect();
        let u: Vec<Point> = samples.iter().map(|s| s.u.clone()).collect();
        Self::new(PointSet::from_points(&y), PointSet::from_points(&u))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// V-statistic MMD² with kernel `exp(−‖a − b‖² / (2h²))`.
pub fn mmd2(x: &PointSet, y: &PointSet, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(MongeError::Config(format!(
            "kernel bandwidth must be positive, got {bandwidth}"
        )));
    }
    if x.is_empty() || y.is_empty() {
        return Err(MongeError::Config("MMD needs nonempty sample sets".into()));
    }
    if x.dim != y.dim {
        return Err(MongeError::Dimension(format!("{} vs {}", x.dim, y.dim)));
    }
    let g = -0.5 / (bandwidth * bandwidth);
    let mean_k = |a: &PointSet, b: &PointSet| -> f64 {
        let s: f64 = (0..a.len())
            .into_par_iter()
            .map(|i| {
                (0..b.len())
                    .map(|j| (g * sq_dist(a.row(i), b.row(j))).exp())
                    .sum::<f64>()
            })
            .sum();
        s / (a.len() * b.len()) as f64
    };
    Ok(mean_k(x, x) + mean_k(y, y) - 2.0 * mean_k(x, y))
}

/// Median pairwise distance over at most `max_points` rows chosen with `seed`.
pub fn median_bandwidth(points: &PointSet, max_points: usize, seed: u64) -> f64 {
    let n = points.len();
    let mut rng = rng_from_seed(seed);
    let idx: Vec<usize> = if n > max_points {
        sample_indices(&mut rng, n, max_points).into_vec()
    } else {
        (0..n).collect()
    };
    let mut d = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(sq_dist(points.row(i), points.row(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

/// Standardized inputs, random Fourier features and a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExpansion {
    pub d_y: usize,
    pub d_v: usize,
    /// `R × (d_y + d_v)`, row-major, entries `N(0, 1/bandwidth²)`.
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
    pub bandwidth: f64,
    /// Inputs are standardized as `(x − shift) / scale` before use.
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureExpansion {
    pub fn new(
        d_y: usize,
        d_v: usize,
        n_random: usize,
        bandwidth: f64,
        shift: Vec<f64>,
        scale: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let d = d_y + d_v;
        if n_random == 0 || !(bandwidth > 0.0) {
            return Err(MongeError::Config(
                "need at least one random feature and a positive bandwidth".into(),
            ));
        }
        if shift.len() != d || scale.len() != d || scale.iter().any(|s| !(*s > 0.0)) {
            return Err(MongeError::Config(
                "standardization needs one positive scale per input coordinate".into(),
            ));
        }
        let mut rng = rng_from_seed(seed);
        let frequencies = (0..n_random * d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / bandwidth
            })
            .collect::<Vec<f64>>();
        let phases = (0..n_random)
            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
            .collect();
        Ok(Self {
            d_y,
            d_v,
            frequencies,
            phases,
            bandwidth,
            shift,
            scale,
        })
    }

    /// Appends `n` random features of the standardized `y` alone, with width
    /// `bandwidth`; their frequencies are zero in the `v` coordinates.
    pub fn with_y_features(mut self, n: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(MongeError::Config(
                "y feature bandwidth must be positive".into(),
            ));
        }
        let mut rng = rng_from_seed(seed);
        for _ in 0..n {
            for _ in 0..self.d_y {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.frequencies.push(z / bandwidth);
            }
            self.frequencies.extend(std::iter::repeat_n(0.0, self.d_v));
            self.phases
                .push(rng.random::<f64>() * std::f64::consts::TAU);
        }
        Ok(self)
    }

    pub fn n_random(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.d_y + self.d_v
    }

    /// Length of the feature vector: passthrough, random features, bias.
    pub fn len(&self) -> usize {
        self.input_dim() + self.n_random() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval_into(&self, y: &[f64], v: &[f64], out: &mut [f64]) {
        let d = self.input_dim();
        for (k, x) in y.iter().chain(v).enumerate() {
            out[k] = (x - self.shift[k]) / self.scale[k];
        }
        let amp = (2.0 / self.n_random() as f64).sqrt();
        for r in 0..self.n_random() {
            let w = &self.frequencies[r * d..(r + 1) * d];
            let dot: f64 = w.iter().zip(&out[..d]).map(|(a, b)| a * b).sum();
            out[d + r] = amp * (dot + self.phases[r]).cos();
        }
        out[self.len() - 1] = 1.0;
    }

    pub fn eval(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(y, v, &mut out);
        out
    }
}

/// `T(y, v) = W · features(y, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReadoutMap {
    pub features: FeatureExpansion,
    /// `d_u × features.len()`, row-major.
    pub weights: Vec<f64>,
    pub d_u: usize,
}

impl LinearReadoutMap {
    /// The map `T(y, v) = v`, representable exactly through the passthrough
    /// features; requires `d_u = d_v`.
    pub fn identity_in_v(features: FeatureExpansion) -> Self {
        let (d_y, d_u, f) = (features.d_y, features.d_v, features.len());
        let mut weights = vec![0.0; d_u * f];
        for k in 0..d_u {
            weights[k * f + d_y + k] = features.scale[d_y + k];
            weights[k * f + f - 1] = features.shift[d_y + k];
        }
        Self {
            features,
            weights,
            d_u,
        }
    }

    pub fn zeros(features: FeatureExpansion, d_u: usize) -> Self {
        let f = features.len();
        Self {
            features,
            weights: vec![0.0; d_u * f],
            d_u,
        }
    }

    pub fn apply(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        let phi = self.features.eval(y, v);
        self.readout(&phi)
    }

    fn readout(&self, phi: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(phi.len())
            .map(|w| w.iter().zip(phi).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `n` samples of `T(y, v)` with `v ~ sampler`.
    pub fn sample(
        &self,
        y: &[f64],
        n: usize,
        sampler: &dyn ReferenceSampler,
        seed: u64,
    ) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| self.apply(y, &sampler.draw(&mut rng)))
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Metric for the kernel on `(y, u)`: coordinate `k` is multiplied by
/// `scale[k]` before the Gaussian kernel with width `bandwidth` is applied.
/// With `y_projection` set, the scaled `y` is further mapped through that
/// row-major matrix with `d_y` columns.
///
/// The divergence kernel is `h² k_h` on the whole embedding, plus, when
/// `pair_bandwidth = Some(p)` and the `y` embedding has one coordinate per
/// output, `p² Σ_a k_p` on the coordinate pairs `(ŷ_a, u_a)`. The factors of
/// `h²` make the resulting MMD a lower bound on the Wasserstein-1 distance in
/// the embedding metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMetric {
    pub scale: Vec<f64>,
    pub bandwidth: f64,
    #[serde(default)]
    pub y_projection: Option<Vec<f64>>,
    #[serde(default)]
    pub pair_bandwidth: Option<f64>,
}

impl KernelMetric {
    pub fn unit(dim: usize, bandwidth: f64) -> Self {
        Self {
            scale: vec![1.0; dim],
            bandwidth,
            y_projection: None,
            pair_bandwidth: None,
        }
    }

    /// Composite kernel between two embedded points; `d_e` is the length of
    /// their `y` block. With `grad`, adds `∂K/∂a` over the `u` block of `a`.
    fn eval(&self, a: &[f64], b: &[f64], d_e: usize, grad: Option<&mut [f64]>) -> f64 {
        let h2 = self.bandwidth * self.bandwidth;
        let kj = (-0.5 * sq_dist(a, b) / h2).exp();
        let mut value = h2 * kj;
        let du = a.len() - d_e;
        let pairs = self.pair_bandwidth.filter(|_| d_e == du);
        match grad {
            Some(g) => {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi -= kj * (a[d_e + i] - b[d_e + i]);
                }
                if let Some(p) = pairs {
                    let p2 = p * p;
                    for (i, gi) in g.iter_mut().enumerate() {
                        let (dy, du) = (a[i] - b[i], a[d_e + i] - b[d_e + i]);
                        let kp = (-0.5 * (dy * dy + du * du) / p2).exp();
                        value += p2 * kp;
                        *gi -= kp * du;
                    }
                }
            }
            None => {
                if let Some(p) = pairs {
                    let p2 = p * p;
                    for i in 0..du {
                        let (dy, du) = (a[i] - b[i], a[d_e + i] - b[d_e + i]);
                        value += p2 * (-0.5 * (dy * dy + du * du) / p2).exp();
                    }
                }
            }
        }
        value
    }

    /// V-statistic MMD under the composite kernel, between embedded sets.
    pub fn divergence(&self, x: &PointSet, y: &PointSet, d_e: usize) -> f64 {
        let mean_k = |p: &PointSet, q: &PointSet| {
            (0..p.len())
                .into_par_iter()
                .map(|i| {
                    (0..q.len())
                        .map(|j| self.eval(p.row(i), q.row(j), d_e, None))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / (p.len() * q.len()) as f64
        };
        (mean_k(x, x) + mean_k(y, y) - 2.0 * mean_k(x, y))
            .max(0.0)
            .sqrt()
    }

    /// Length of the embedded `y` block.
    pub fn y_embed_dim(&self, d_y: usize) -> usize {
        match &self.y_projection {
            Some(p) => p.len() / d_y.max(1),
            None => d_y,
        }
    }

    /// Appends the embedding of `(y, u)` to `buf`.
    pub fn embed(&self, y: &[f64], u: &[f64], buf: &mut Vec<f64>) {
        let (sy, su) = self.scale.split_at(y.len());
        match &self.y_projection {
            Some(p) => buf.extend(p.chunks(y.len()).map(|row| {
                row.iter()
                    .zip(y.iter().zip(sy))
                    .map(|(w, (a, b))| w * a * b)
                    .sum::<f64>()
            })),
            None => buf.extend(y.iter().zip(sy).map(|(a, b)| a * b)),
        }
        buf.extend(u.iter().zip(su).map(|(a, b)| a * b));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub kernel: KernelMetric,
    /// Drop the `‖v − T‖²` term (divergence-only training).
    pub monge_term: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub monge: f64,
    pub mmd: f64,
    pub total: f64,
}

fn check_batches(map: &LinearReadoutMap, r: &Batch, t: &Batch, cfg: &LossConfig) -> Result<()> {
    if r.is_empty() || t.is_empty() {
        return Err(MongeError::Config("empty batch".into()));
    }
    let f = &map.features;
    if r.y.dim != f.d_y || r.x.dim != f.d_v || t.y.dim != f.d_y || t.x.dim != map.d_u {
        return Err(MongeError::Dimension(format!(
            "batches ({}, {}) / ({}, {}) do not fit a map ({}, {}) -> {}",
            r.y.dim, r.x.dim, t.y.dim, t.x.dim, f.d_y, f.d_v, map.d_u
        )));
    }
    if cfg.kernel.scale.len() != f.d_y + map.d_u {
        return Err(MongeError::Dimension(
            "kernel scale length must be d_y + d_u".into(),
        ));
    }
    if let Some(p) = &cfg.kernel.y_projection {
        if p.is_empty() || p.len() % f.d_y != 0 {
            return Err(MongeError::Dimension(
                "y projection must have d_y columns".into(),
            ));
        }
    }
    if !(cfg.lambda > 0.0) || !(cfg.kernel.bandwidth > 0.0) {
        return Err(MongeError::Config(
            "lambda and bandwidth must be positive".into(),
        ));
    }
    Ok(())
}

struct Forward {
    phi: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
    gen: PointSet,
    tgt: PointSet,
}

fn forward(map: &LinearReadoutMap, r: &Batch, t: &Batch, cfg: &LossConfig) -> Forward {
    let metric = &cfg.kernel;
    let (phi, out): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..r.len())
        .into_par_iter()
        .map(|j| {
            let phi = map.features.eval(r.y.row(j), r.x.row(j));
            let out = map.readout(&phi);
            (phi, out)
        })
        .unzip();
    let dim = metric.y_embed_dim(r.y.dim) + map.d_u;
    let mut gen = Vec::with_capacity(r.len() * dim);
    for j in 0..r.len() {
        metric.embed(r.y.row(j), &out[j], &mut gen);
    }
    let mut tgt = Vec::with_capacity(t.len() * dim);
    for j in 0..t.len() {
        metric.embed(t.y.row(j), t.x.row(j), &mut tgt);
    }
    Forward {
        phi,
        out,
        gen: PointSet::new(dim, gen),
        tgt: PointSet::new(dim, tgt),
    }
}

fn monge_value(r: &Batch, out: &[Vec<f64>]) -> f64 {
    out.iter()
        .enumerate()
        .map(|(j, o)| sq_dist(r.x.row(j), o))
        .sum::<f64>()
        / r.len() as f64
}

/// Monge term plus `1/λ` times the MMD between `{(y_j, T(y_j, v_j))}` and the
/// target batch.
pub fn monge_mmd_loss(
    map: &LinearReadoutMap,
    batch_ref: &Batch,
    batch_tgt: &Batch,
    cfg: &LossConfig,
) -> Result<LossParts> {
    check_batches(map, batch_ref, batch_tgt, cfg)?;
    let fw = forward(map, batch_ref, batch_tgt, cfg);
    let monge = if cfg.monge_term {
        monge_value(batch_ref, &fw.out)
    } else {
        0.0
    };
    let d_e = cfg.kernel.y_embed_dim(map.features.d_y);
    let mmd = cfg.kernel.divergence(&fw.gen, &fw.tgt, d_e);
    Ok(LossParts {
        monge,
        mmd,
        total: monge + mmd / cfg.lambda,
    })
}

/// Loss and its gradient in the readout weights (same layout as `weights`).
pub fn loss_and_grad(
    map: &LinearReadoutMap,
    batch_ref: &Batch,
    batch_tgt: &Batch,
    cfg: &LossConfig,
) -> Result<(LossParts, Vec<f64>)> {
    check_batches(map, batch_ref, batch_tgt, cfg)?;
    let fw = forward(map, batch_ref, batch_tgt, cfg);
    let (m, n) = (batch_ref.len(), batch_tgt.len());
    let d_y = map.features.d_y;
    let d_e = cfg.kernel.y_embed_dim(d_y);
    let du = map.d_u;
    let metric = &cfg.kernel;
    let su = &metric.scale[d_y..];

    // per-sample gradient of the MMD² term with respect to T_j, and kernel sums
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..m)
        .into_par_iter()
        .map(|j| {
            let gj = fw.gen.row(j);
            let mut acc = vec![0.0; du];
            let mut kg = vec![0.0; du];
            let (mut kgg, mut kgt) = (0.0, 0.0);
            for k in 0..m {
                kgg += metric.eval(gj, fw.gen.row(k), d_e, Some(&mut kg));
            }
            // the pair (j, k) and (k, j) both depend on T_j
            for a in 0..du {
                acc[a] += 2.0 / (m * m) as f64 * kg[a];
                kg[a] = 0.0;
            }
            for k in 0..n {
                kgt += metric.eval(gj, fw.tgt.row(k), d_e, Some(&mut kg));
            }
            for a in 0..du {
                acc[a] -= 2.0 / (m * n) as f64 * kg[a];
                acc[a] *= su[a];
            }
            (acc, kgg, kgt)
        })
        .collect();
    let ktt: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|k| metric.eval(fw.tgt.row(i), fw.tgt.row(k), d_e, None))
                .sum::<f64>()
        })
        .sum();
    let kgg: f64 = rows.iter().map(|r| r.1).sum();
    let kgt: f64 = rows.iter().map(|r| r.2).sum();
    let mmd_sq = kgg / (m * m) as f64 + ktt / (n * n) as f64 - 2.0 * kgt / (m * n) as f64;
    let mmd = mmd_sq.max(0.0).sqrt();
    // d MMD = d MMD² / (2 MMD)
    let chain = if mmd > 0.0 { 0.5 / mmd } else { 0.0 };
    let monge = if cfg.monge_term {
        monge_value(batch_ref, &fw.out)
    } else {
        0.0
    };

    let f = map.features.len();
    let mut grad = vec![0.0; du * f];
    for (j, (acc, _, _)) in rows.iter().enumerate() {
        let phi = &fw.phi[j];
        for a in 0..du {
            let mut dt = chain * acc[a] / cfg.lambda;
            if cfg.monge_term {
                dt += 2.0 / m as f64 * (fw.out[j][a] - batch_ref.x.row(j)[a]);
            }
            let row = &mut grad[a * f..(a + 1) * f];
            for (gw, p) in row.iter_mut().zip(phi) {
                *gw += dt * p;
            }
        }
    }
    Ok((
        LossParts {
            monge,
            mmd,
            total: monge + mmd / cfg.lambda,
        },
        grad,
    ))
}

pub fn grad_loss(
    map: &LinearReadoutMap,
    batch_ref: &Batch,
    batch_tgt: &Batch,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    loss_and_grad(map, batch_ref, batch_tgt, cfg).map(|x| x.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Starting point of training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapInit {
    /// `T(y, v) = v`.
    Identity,
    /// `T(y, v) = m(y) + diag(s) v`: least-squares conditional mean over the
    /// `y`-only features plus the residual standard deviations.
    ConditionalGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Kernel width on standardized `(y, u)`; the median heuristic when unset.
    pub kernel_bandwidth: Option<f64>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub n_features: usize,
    /// Additional random features of `y` alone.
    pub n_y_features: usize,
    /// Width of the random Fourier features on standardized inputs; the
    /// median heuristic when unset.
    pub feature_bandwidth: Option<f64>,
    /// Extra factor on the `y` block of the kernel metric.
    pub y_kernel_weight: f64,
    /// Compare `y` in the kernel through its least-squares prediction of `u`
    /// instead of coordinate by coordinate.
    pub y_summary: bool,
    /// Add the per-output pair terms to the kernel (needs `y_summary`).
    pub pair_kernel: bool,
    pub optimizer: Optimizer,
    pub monge_term: bool,
    pub init: MapInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            kernel_bandwidth: None,
            batch_size: 256,
            learning_rate: 1e-2,
            iterations: 2000,
            seed: 0,
            n_features: 128,
            n_y_features: 128,
            feature_bandwidth: None,
            y_kernel_weight: 1.0,
            y_summary: true,
            pair_kernel: true,
            optimizer: Optimizer::Adam,
            monge_term: true,
            init: MapInit::Identity,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("lambda", self.lambda),
            ("learning_rate", self.learning_rate),
            ("y_kernel_weight", self.y_kernel_weight),
        ];
        for (name, x) in pos {
            if !(x > 0.0 && x.is_finite()) {
                return Err(MongeError::Config(format!(
                    "{name} must be positive, got {x}"
                )));
            }
        }
        for (name, h) in [
            ("kernel_bandwidth", self.kernel_bandwidth),
            ("feature_bandwidth", self.feature_bandwidth),
        ] {
            if let Some(h) = h {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(MongeError::Config(format!(
                        "{name} must be positive, got {h}"
                    )));
                }
            }
        }
        if self.batch_size == 0 || self.n_features == 0 {
            return Err(MongeError::Config(
                "batch_size and n_features must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub monge_term: f64,
    pub mmd_term: f64,
    pub total: f64,
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> std::io::Result<()> {
    writeln!(w, "iteration,monge_term,mmd_term,total")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{}",
            r.iteration, r.monge_term, r.mmd_term, r.total
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainedMap {
    pub map: LinearReadoutMap,
    pub loss: LossConfig,
    pub trace: Vec<TraceRow>,
}

fn column_stats(set: &PointSet) -> (Vec<f64>, Vec<f64>) {
    (0..set.dim)
        .map(|k| {
            let col: Vec<f64> = (0..set.len()).map(|i| set.row(i)[k]).collect();
            let sd = variance(&col).sqrt();
            (mean(&col), if sd > 0.0 { sd } else { 1.0 })
        })
        .unzip()
}

fn gather(set: &PointSet, idx: &[usize]) -> PointSet {
    PointSet::new(
        set.dim,
        idx.iter()
            .flat_map(|&i| set.row(i).iter().copied())
            .collect(),
    )
}

fn draw_set(sampler: &dyn ReferenceSampler, n: usize, rng: &mut dyn rand::RngCore) -> PointSet {
    PointSet::new(
        sampler.dim(),
        (0..n).flat_map(|_| sampler.draw(rng).into_vec()).collect(),
    )
}

/// Least-squares map from `y / sd_y` to `u / sd_u`, as a `d_u × d_y`
/// row-major matrix. Its image approximates the linear conditional mean.
fn regression_summary(data: &Batch, y_sd: &[f64], u_sd: &[f64]) -> Vec<f64> {
    let (n, d_y, d_u) = (data.len(), data.y.dim, data.x.dim);
    let (y_mean, _) = column_stats(&data.y);
    let (u_mean, _) = column_stats(&data.x);
    let x = DMatrix::from_fn(n, d_y, |i, k| (data.y.row(i)[k] - y_mean[k]) / y_sd[k]);
    let z = DMatrix::from_fn(n, d_u, |i, a| (data.x.row(i)[a] - u_mean[a]) / u_sd[a]);
    let mut gram = x.transpose() * &x;
    // small ridge keeps near-collinear sensors well posed
    let ridge = 1e-6 * n as f64;
    for k in 0..d_y {
        gram[(k, k)] += ridge;
    }
    let w = gram
        .cholesky()
        .expect("ridge Gram matrix is positive definite")
        .solve(&(x.transpose() * z));
    // applied to kernel-scaled y, so the y weight carries over
    (0..d_u)
        .flat_map(|a| (0..d_y).map(move |k| (a, k)))
        .map(|(a, k)| w[(k, a)])
        .collect()
}

/// Weights of `T(y, v) = m(y) + diag(s) v`, `m` the ridge least-squares fit of
/// `u` on the features that do not see `v` (standardized `y`, `y`-only random
/// features, bias) and `s` the residual sd. Requires `d_v = d_u`.
fn conditional_gaussian_map(features: FeatureExpansion, data: &Batch) -> LinearReadoutMap {
    let (n, d_y, d_u) = (data.len(), data.y.dim, data.x.dim);
    let d = features.input_dim();
    let f = features.len();
    let y_only: Vec<usize> = (0..d_y)
        .chain((0..features.n_random()).filter_map(|r| {
            features.frequencies[r * d + d_y..(r + 1) * d]
                .iter()
                .all(|w| *w == 0.0)
                .then_some(d + r)
        }))
        .chain([f - 1])
        .collect();
    let p = y_only.len();
    let zero_v = vec![0.0; features.d_v];
    let mut x = DMatrix::zeros(n, p);
    let mut buf = vec![0.0; f];
    for i in 0..n {
        features.eval_into(data.y.row(i), &zero_v, &mut buf);
        for (c, &k) in y_only.iter().enumerate() {
            x[(i, c)] = buf[k];
        }
    }
    let z = DMatrix::from_fn(n, d_u, |i, a| data.x.row(i)[a]);
    let mut gram = x.transpose() * &x;
    for c in 0..p - 1 {
        gram[(c, c)] += 1e-6 * n as f64;
    }
    let w = gram
        .cholesky()
        .expect("ridge Gram matrix is positive definite")
        .solve(&(x.transpose() * &z));
    let resid = &z - &x * &w;
    let mut weights = vec![0.0; d_u * f];
    for a in 0..d_u {
        let s = (resid.column(a).norm_squared() / n as f64).sqrt();
        let row = &mut weights[a * f..(a + 1) * f];
        for (c, &k) in y_only.iter().enumerate() {
            row[k] = w[(c, a)];
        }
        // s · v through the standardized passthrough of v_a
        row[d_y + a] = s * features.scale[d_y + a];
        row[f - 1] += s * features.shift[d_y + a];
    }
    LinearReadoutMap {
        features,
        weights,
        d_u,
    }
}

/// Initial map (see [`MapInit`]), kernel metric and loss configuration for `data`.
pub fn init_training(
    data: &Batch,
    sampler: &dyn ReferenceSampler,
    cfg: &TrainConfig,
) -> Result<(LinearReadoutMap, LossConfig)> {
    cfg.validate()?;
    let (d_y, d_u) = (data.y.dim, data.x.dim);
    if sampler.dim() != d_u {
        return Err(MongeError::Dimension(format!(
            "reference is {}-dimensional, targets {d_u}-dimensional",
            sampler.dim()
        )));
    }
    let mut rng = rng_from_seed(derive_seed(cfg.seed, "standardize"));
    let v_pool = draw_set(sampler, 1024, &mut rng);
    let (y_mean, y_sd) = column_stats(&data.y);
    let (v_mean, v_sd) = column_stats(&v_pool);
    let (_, u_sd) = column_stats(&data.x);
    let shift: Vec<f64> = y_mean.into_iter().chain(v_mean).collect();
    let in_scale: Vec<f64> = y_sd.iter().chain(&v_sd).copied().collect();
    let feature_bandwidth = match cfg.feature_bandwidth {
        Some(h) => h,
        None => {
            let n = data.len().min(v_pool.len());
            let joint: Vec<f64> = (0..n)
                .flat_map(|i| {
                    data.y
                        .row(i)
                        .iter()
                        .chain(v_pool.row(i))
                        .zip(shift.iter().zip(&in_scale))
                        .map(|(x, (m, s))| (x - m) / s)
                        .collect::<Vec<_>>()
                })
                .collect();
            median_bandwidth(
                &PointSet::new(d_y + d_u, joint),
                512,
                derive_seed(cfg.seed, "feature-bandwidth"),
            )
        }
    };
    let y_bandwidth = {
        let n = data.len().min(4096);
        let ys: Vec<f64> = (0..n)
            .flat_map(|i| {
                data.y
                    .row(i)
                    .iter()
                    .zip(shift.iter().zip(&in_scale))
                    .map(|(x, (m, s))| (x - m) / s)
                    .collect::<Vec<_>>()
            })
            .collect();
        median_bandwidth(
            &PointSet::new(d_y, ys),
            512,
            derive_seed(cfg.seed, "y-feature-bandwidth"),
        )
    };
    let features = FeatureExpansion::new(
        d_y,
        d_u,
        cfg.n_features,
        feature_bandwidth,
        shift,
        in_scale,
        derive_seed(cfg.seed, "features"),
    )?
    .with_y_features(
        cfg.n_y_features,
        y_bandwidth,
        derive_seed(cfg.seed, "y-features"),
    )?;
    let scale: Vec<f64> = y_sd
        .iter()
        .map(|s| cfg.y_kernel_weight / s)
        .chain(u_sd.iter().map(|s| 1.0 / s))
        .collect();
    let mut kernel = KernelMetric {
        scale,
        bandwidth: 1.0,
        y_projection: cfg
            .y_summary
            .then(|| regression_summary(data, &y_sd, &u_sd)),
        pair_bandwidth: None,
    };
    kernel.bandwidth = match cfg.kernel_bandwidth {
        Some(h) => h,
        None => {
            let mut joint = Vec::new();
            for i in 0..data.len().min(4096) {
                kernel.embed(data.y.row(i), data.x.row(i), &mut joint);
            }
            median_bandwidth(
                &PointSet::new(kernel.y_embed_dim(d_y) + d_u, joint),
                512,
                derive_seed(cfg.seed, "bandwidth"),
            )
        }
    };
    if cfg.y_summary && cfg.pair_kernel {
        // median over the pooled two-dimensional pairs (ŷ_a, u_a)
        let mut pairs = Vec::new();
        let mut buf = Vec::new();
        for i in 0..data.len().min(512) {
            buf.clear();
            kernel.embed(data.y.row(i), data.x.row(i), &mut buf);
            for a in 0..d_u {
                pairs.extend([buf[a], buf[d_u + a]]);
            }
        }
        kernel.pair_bandwidth = Some(median_bandwidth(
            &PointSet::new(2, pairs),
            1024,
            derive_seed(cfg.seed, "pair-bandwidth"),
        ));
    }
    let loss = LossConfig {
        lambda: cfg.lambda,
        kernel,
        monge_term: cfg.monge_term,
    };
    let map = match cfg.init {
        MapInit::Identity => LinearReadoutMap::identity_in_v(features),
        MapInit::ConditionalGaussian => conditional_gaussian_map(features, data),
    };
    Ok((map, loss))
}

/// Mini-batch training from the initial map of `cfg.init`.
pub fn train(
    targets: &[PairedSample],
    sampler: &dyn ReferenceSampler,
    cfg: &TrainConfig,
) -> Result<TrainedMap> {
    let data = Batch::from_samples(targets);
    let (map, loss) = init_training(&data, sampler, cfg)?;
    train_from(map, loss, &data, sampler, cfg)
}

/// Continues training `map` under `loss` on `data`.
pub fn train_from(
    mut map: LinearReadoutMap,
    loss: LossConfig,
    data: &Batch,
    sampler: &dyn ReferenceSampler,
    cfg: &TrainConfig,
) -> Result<TrainedMap> {
    cfg.validate()?;
    let m = cfg.batch_size;
    let full_batch = m >= data.len();
    if !full_batch && data.len() < 2 * m {
        return Err(MongeError::TooFewSamples {
            need: 2 * m,
            got: data.len(),
        });
    }
    let mut rng = rng_from_seed(derive_seed(cfg.seed, "batches"));
    let p = map.weights.len();
    let (mut m1, mut m2) = (vec![0.0; p], vec![0.0; p]);
    let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let fixed_v = full_batch.then(|| draw_set(sampler, data.len(), &mut rng));
    for it in 0..cfg.iterations {
        let (batch_ref, batch_tgt) = if let Some(v) = &fixed_v {
            (Batch::new(data.y.clone(), v.clone()), data.clone())
        } else {
            let idx = sample_indices(&mut rng, data.len(), m).into_vec();
            let y = gather(&data.y, &idx);
            let tgt = Batch::new(y.clone(), gather(&data.x, &idx));
            (Batch::new(y, draw_set(sampler, m, &mut rng)), tgt)
        };
        let (parts, grad) = loss_and_grad(&map, &batch_ref, &batch_tgt, &loss)?;
        trace.push(TraceRow {
            iteration: it,
            monge_term: parts.monge,
            mmd_term: parts.mmd,
            total: parts.total,
        });
        if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(MongeError::Diverged {
                iteration: it,
                trace,
            });
        }
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (w, g) in map.weights.iter_mut().zip(&grad) {
                    *w -= cfg.learning_rate * g;
                }
            }
            Optimizer::Adam => {
                let t = (it + 1) as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for k in 0..p {
                    m1[k] = b1 * m1[k] + (1.0 - b1) * grad[k];
                    m2[k] = b2 * m2[k] + (1.0 - b2) * grad[k] * grad[k];
                    map.weights[k] -=
                        cfg.learning_rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
                }
            }
        }
    }
    Ok(TrainedMap { map, loss, trace })
}

/// Fraction of triples `(y, z1, z2)` with `⟨T(y, z1) − T(y, z2), z1 − z2⟩ ≥ 0`.
pub fn monotonicity_fraction(map: &LinearReadoutMap, pairs: &[(Point, Point, Point)]) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    let ok = pairs
        .par_iter()
        .filter(|(y, z1, z2)| {
            let a = map.apply(y, z1);
            let b = map.apply(y, z2);
            a.iter()
                .zip(&b)
                .zip(z1.iter().zip(z2.iter()))
                .map(|((p, q), (s, t))| (p - q) * (s - t))
                .sum::<f64>()
                >= 0.0
        })
        .count();
    ok as f64 / pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::StandardNormalSampler;

    fn random_set(rng: &mut impl Rng, n: usize, dim: usize) -> PointSet {
        PointSet::new(
            dim,
            (0..n * dim).map(|_| StandardNormal.sample(rng)).collect(),
        )
    }

    #[test]
    fn mmd_closed_forms() {
        let mut rng = rng_from_seed(1);
        let x = random_set(&mut rng, 20, 3);
        assert!(mmd2(&x, &x, 0.7).unwrap().abs() < 1e-12);
        let a = PointSet::new(2, vec![0.0, 0.0]);
        let b = PointSet::new(2, vec![1.0, 2.0]);
        let h: f64 = 1.3;
        let want = 2.0 - 2.0 * (-5.0 / (2.0 * h * h)).exp();
        assert!((mmd2(&a, &b, h).unwrap() - want).abs() < 1e-15);
        assert!(mmd2(&a, &b, 0.0).is_err());
        // naive double loop
        let y = random_set(&mut rng, 15, 3);
        let k = |p: &[f64], q: &[f64]| (-sq_dist(p, q) / (2.0 * 0.9 * 0.9)).exp();
        let mut naive = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                naive += k(x.row(i), x.row(j)) / 400.0;
            }
        }
        for i in 0..15 {
            for j in 0..15 {
                naive += k(y.row(i), y.row(j)) / 225.0;
            }
        }
        for i in 0..20 {
            for j in 0..15 {
                naive -= 2.0 * k(x.row(i), y.row(j)) / 300.0;
            }
        }
        let got = mmd2(&x, &y, 0.9).unwrap();
        assert!((got - naive).abs() < 1e-12);
        assert!((mmd2(&y, &x, 0.9).unwrap() - got).abs() < 1e-12);
        assert!(got > 0.0);
    }

    fn instance(
        seed: u64,
        m: usize,
        dy: usize,
        du: usize,
        r: usize,
    ) -> (LinearReadoutMap, Batch, Batch, LossConfig) {
        let mut rng = rng_from_seed(seed);
        let features =
            FeatureExpansion::new(dy, du, r, 1.5, vec![0.1; dy + du], vec![1.2; dy + du], seed)
                .unwrap();
        let mut map = LinearReadoutMap::zeros(features, du);
        for w in map.weights.iter_mut() {
            *w = 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        }
        let y = random_set(&mut rng, m, dy);
        let r_batch = Batch::new(y.clone(), random_set(&mut rng, m, du));
        let t_batch = Batch::new(y, random_set(&mut rng, m, du));
        let cfg = LossConfig {
            lambda: 0.1,
            kernel: KernelMetric {
                scale: (0..dy + du).map(|k| 0.5 + 0.1 * k as f64).collect(),
                bandwidth: 1.1,
                y_projection: None,
                pair_bandwidth: None,
            },
            monge_term: true,
        };
        (map, r_batch, t_batch, cfg)
    }

    #[test]
    fn loss_matches_recomputation() {
        let (map, r, t, cfg) = instance(3, 12, 2, 2, 8);
        let parts = monge_mmd_loss(&map, &r, &t, &cfg).unwrap();
        let out: Vec<Vec<f64>> = (0..12).map(|j| map.apply(r.y.row(j), r.x.row(j))).collect();
        let monge: f64 = (0..12).map(|j| sq_dist(&out[j], r.x.row(j))).sum::<f64>() / 12.0;
        let scale = |y: &[f64], u: &[f64]| -> Vec<f64> {
            y.iter()
                .chain(u)
                .zip(&cfg.kernel.scale)
                .map(|(a, b)| a * b)
                .collect()
        };
        let gen = PointSet::new(
            4,
            (0..12).flat_map(|j| scale(r.y.row(j), &out[j])).collect(),
        );
        let tgt = PointSet::new(
            4,
            (0..12)
                .flat_map(|j| scale(t.y.row(j), t.x.row(j)))
                .collect(),
        );
        let mmd = 1.1 * mmd2(&gen, &tgt, 1.1).unwrap().sqrt();
        assert!((parts.monge - monge).abs() < 1e-12);
        assert!((parts.total - (monge + mmd / 0.1)).abs() < 1e-10);
        let (p2, _) = loss_and_grad(&map, &r, &t, &cfg).unwrap();
        assert!((p2.total - parts.total).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (map, r, t, cfg) = instance(10 + seed, 10, 2, 3, 6);
            let g = grad_loss(&map, &r, &t, &cfg).unwrap();
            let mut fd = vec![0.0; g.len()];
            for k in 0..g.len() {
                let h = 1e-5;
                let mut p = map.clone();
                p.weights[k] += h;
                let lp = monge_mmd_loss(&p, &r, &t, &cfg).unwrap().total;
                p.weights[k] -= 2.0 * h;
                let lm = monge_mmd_loss(&p, &r, &t, &cfg).unwrap().total;
                fd[k] = (lp - lm) / (2.0 * h);
            }
            let num: f64 = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(num / den < 1e-6, "relative error {}", num / den);
        }
    }

    #[test]
    fn composite_kernel_gradient_matches_finite_differences() {
        let (map, r, t, mut cfg) = instance(20, 9, 2, 2, 5);
        cfg.kernel.y_projection = Some(vec![0.6, -0.1, 0.3, 0.8]);
        cfg.kernel.pair_bandwidth = Some(0.9);
        let g = grad_loss(&map, &r, &t, &cfg).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..g.len() {
            let h = 1e-5;
            let mut p = map.clone();
            p.weights[k] += h;
            let lp = monge_mmd_loss(&p, &r, &t, &cfg).unwrap().total;
            p.weights[k] -= 2.0 * h;
            let lm = monge_mmd_loss(&p, &r, &t, &cfg).unwrap().total;
            let fd = (lp - lm) / (2.0 * h);
            num += (g[k] - fd) * (g[k] - fd);
            den += fd * fd;
        }
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn conditional_gaussian_init_recovers_linear_posterior() {
        // u ~ N(0, 1), y = u + ξ/2: u | y ~ N(0.8 y, 0.2)
        let mut rng = rng_from_seed(8);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let targets: Vec<PairedSample> = (0..20_000)
            .map(|_| {
                let u = g();
                PairedSample::new(Point::scalar(u + 0.5 * g()), Point::scalar(u))
            })
            .collect();
        let cfg = TrainConfig {
            iterations: 0,
            init: MapInit::ConditionalGaussian,
            ..Default::default()
        };
        let map = train(&targets, &StandardNormalSampler { dim: 1 }, &cfg)
            .unwrap()
            .map;
        for y in [-1.0, 0.0, 1.0] {
            let at0 = map.apply(&[y], &[0.0])[0];
            let slope = map.apply(&[y], &[1.0])[0] - at0;
            assert!((at0 - 0.8 * y).abs() < 0.05, "mean {at0} at y = {y}");
            assert!((slope - 0.2f64.sqrt()).abs() < 0.02, "sd {slope}");
        }
    }

    #[test]
    fn projection_map_has_zero_monge_term() {
        let (_, r, t, cfg) = instance(4, 8, 1, 2, 4);
        let features =
            FeatureExpansion::new(1, 2, 4, 1.0, vec![0.3, -0.2, 0.5], vec![2.0, 0.5, 1.5], 0)
                .unwrap();
        let map = LinearReadoutMap::identity_in_v(features);
        let parts = monge_mmd_loss(&map, &r, &t, &cfg).unwrap();
        assert!(parts.monge < 1e-24);
        for j in 0..8 {
            let out = map.apply(r.y.row(j), r.x.row(j));
            assert!(sq_dist(&out, r.x.row(j)) < 1e-24);
        }
        // large λ leaves the Monge term
        let mut big = cfg.clone();
        big.lambda = 1e12;
        let (m, r, t, _) = instance(5, 8, 1, 2, 4);
        let parts = monge_mmd_loss(&m, &r, &t, &big).unwrap();
        assert!((parts.total - parts.monge).abs() < 1e-10);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let mut rng = rng_from_seed(0);
        let targets: Vec<PairedSample> = (0..40)
            .map(|_| PairedSample::new(Point::scalar(rng.random()), Point::scalar(rng.random())))
            .collect();
        let cfg = TrainConfig {
            iterations: 0,
            batch_size: 10,
            ..Default::default()
        };
        let out = train(&targets, &StandardNormalSampler { dim: 1 }, &cfg).unwrap();
        assert!(out.trace.is_empty());
        assert!((out.map.apply(&[0.2], &[0.7])[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn quadratic_well_pulls_toward_v() {
        // one pair, λ huge: descending the gradient moves T(y, v) to v
        let features =
            FeatureExpansion::new(1, 1, 3, 1.0, vec![0.0, 0.0], vec![1.0, 1.0], 1).unwrap();
        let mut map = LinearReadoutMap::zeros(features, 1);
        let r = Batch::new(PointSet::new(1, vec![0.4]), PointSet::new(1, vec![1.5]));
        let cfg = LossConfig {
            lambda: 1e12,
            kernel: KernelMetric::unit(2, 1.0),
            monge_term: true,
        };
        let start = (map.apply(&[0.4], &[1.5])[0] - 1.5).abs();
        for _ in 0..200 {
            let g = grad_loss(&map, &r, &r, &cfg).unwrap();
            assert!(g.iter().all(|x| x.is_finite()));
            for (w, d) in map.weights.iter_mut().zip(&g) {
                *w -= 0.05 * d;
            }
        }
        assert!((map.apply(&[0.4], &[1.5])[0] - 1.5).abs() < 1e-3 * start);
    }

    #[test]
    fn monotonicity_extremes() {
        let features =
            FeatureExpansion::new(1, 1, 2, 1.0, vec![0.0, 0.0], vec![1.0, 1.0], 1).unwrap();
        let id = LinearReadoutMap::identity_in_v(features);
        let mut neg = id.clone();
        for w in neg.weights.iter_mut() {
            *w = -*w;
        }
        let mut rng = rng_from_seed(2);
        let pairs: Vec<(Point, Point, Point)> = (0..100)
            .map(|_| {
                (
                    Point::scalar(rng.random()),
                    Point::scalar(rng.random()),
                    Point::scalar(rng.random::<f64>() + 2.0),
                )
            })
            .collect();
        assert_eq!(monotonicity_fraction(&id, &pairs), 1.0);
        assert_eq!(monotonicity_fraction(&neg, &pairs), 0.0);
    }

    #[test]
    fn json_round_trip() {
        let (map, ..) = instance(7, 4, 1, 1, 3);
        let back = LinearReadoutMap::from_json(&map.to_json().unwrap()).unwrap();
        assert_eq!(back, map);
        let mut buf = Vec::new();
        write_trace_csv(
            &mut buf,
            &[TraceRow {
                iteration: 0,
                monge_term: 1.0,
                mmd_term: 0.5,
                total: 6.0,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,monge_term,mmd_term,total\n0,1,0.5,6\n"
        );
    }
}
