//! Plugin conditional map: solve the perturbed empirical OT problem once, then
//! extend the resulting pairing `(y_j, v_j) ↦ u_{σ(j)}` to new inputs by
//! inverse-distance weighting over the `k` nearest anchors.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::{solve_perturbed, ConditionalError, PerturbedCostSpec};
use crate::kdtree::{knn_brute, KdTree};
use crate::measures::{pair_reference, MeasureError, PairedSample, Point, ReferenceSampler};
use crate::rng::rng_from_seed;

/// Below this many anchors neighbours are found by scanning.
pub const BRUTE_FORCE_LIMIT: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub y: Point,
    pub v: Point,
    pub u: Point,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PluginConditionalMap {
    anchors: Vec<Anchor>,
    k: usize,
    /// Per-coordinate weights of the squared distance on `(y, v)`.
    input_metric_weights: Vec<f64>,
    #[serde(skip)]
    index: OnceLock<Index>,
}

#[derive(Debug)]
struct Index {
    coords: Vec<f64>,
    tree: Option<KdTree>,
}

impl Clone for PluginConditionalMap {
    fn clone(&self) -> Self {
        Self {
            anchors: self.anchors.clone(),
            k: self.k,
            input_metric_weights: self.input_metric_weights.clone(),
            index: OnceLock::new(),
        }
    }
}

impl PluginConditionalMap {
    pub fn new(
        anchors: Vec<Anchor>,
        k: usize,
        input_metric_weights: Option<Vec<f64>>,
    ) -> Result<Self, ConditionalError> {
        let Some(first) = anchors.first() else {
            return Err(MeasureError::Empty.into());
        };
        let (dy, dv, du) = (first.y.dim(), first.v.dim(), first.u.dim());
        if let Some(a) = anchors
            .iter()
            .find(|a| a.y.dim() != dy || a.v.dim() != dv || a.u.dim() != du)
        {
            return Err(ConditionalError::Dimension(format!(
                "anchor dimensions ({}, {}, {}) differ from ({dy}, {dv}, {du})",
                a.y.dim(),
                a.v.dim(),
                a.u.dim()
            )));
        }
        if k == 0 || k > anchors.len() {
            return Err(ConditionalError::InvalidSpec(format!(
                "neighbour count {k} must lie in 1..={}",
                anchors.len()
            )));
        }
        let weights = input_metric_weights.unwrap_or_else(|| vec![1.0; dy + dv]);
        if weights.len() != dy + dv || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(ConditionalError::InvalidSpec(
                "metric weights must be positive, one per (y, v) coordinate".into(),
            ));
        }
        Ok(Self {
            anchors,
            k,
            input_metric_weights: weights,
            index: OnceLock::new(),
        })
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn input_metric_weights(&self) -> &[f64] {
        &self.input_metric_weights
    }

    pub fn y_dim(&self) -> usize {
        self.anchors[0].y.dim()
    }

    pub fn v_dim(&self) -> usize {
        self.anchors[0].v.dim()
    }

    pub fn u_dim(&self) -> usize {
        self.anchors[0].u.dim()
    }

    fn scaled(&self, y: &[f64], v: &[f64], out: &mut Vec<f64>) {
        for (x, w) in y.iter().chain(v).zip(&self.input_metric_weights) {
            out.push(x * w.sqrt());
        }
    }

    fn index(&self) -> &Index {
        self.index.get_or_init(|| {
            let mut coords =
                Vec::with_capacity(self.anchors.len() * self.input_metric_weights.len());
            for a in &self.anchors {
                self.scaled(&a.y, &a.v, &mut coords);
            }
            let tree = (self.anchors.len() >= BRUTE_FORCE_LIMIT)
                .then(|| KdTree::new(coords.clone(), self.input_metric_weights.len()));
            Index { coords, tree }
        })
    }

    /// Inverse-distance-weighted average of the `u`-values of the `k` nearest
    /// anchors to `(y, v)`; an exact anchor hit returns that anchor's `u`.
    pub fn evaluate(&self, y: &[f64], v: &[f64]) -> Result<Point, ConditionalError> {
        if y.len() != self.y_dim() || v.len() != self.v_dim() {
            return Err(ConditionalError::Dimension(format!(
                "query has dimensions ({}, {}), map expects ({}, {})",
                y.len(),
                v.len(),
                self.y_dim(),
                self.v_dim()
            )));
        }
        let mut q = Vec::with_capacity(y.len() + v.len());
        self.scaled(y, v, &mut q);
        let idx = self.index();
        let nn = match &idx.tree {
            Some(t) => t.knn(&q, self.k),
            None => knn_brute(&idx.coords, q.len(), &q, self.k),
        };
        if nn[0].1 == 0.0 {
            return Ok(self.anchors[nn[0].0].u.clone());
        }
        let mut out = vec![0.0; self.u_dim()];
        let mut total = 0.0;
        for &(i, d2) in &nn {
            let w = 1.0 / d2.sqrt();
            total += w;
            for (o, x) in out.iter_mut().zip(self.anchors[i].u.iter()) {
                *o += w * x;
            }
        }
        Ok(Point::new(out.into_iter().map(|x| x / total).collect())?)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self, ConditionalError> {
        let raw: Self = serde_json::from_str(s)
            .map_err(|e| ConditionalError::InvalidSpec(format!("malformed map file: {e}")))?;
        Self::new(raw.anchors, raw.k, Some(raw.input_metric_weights))
    }
}

/// Pairs the targets with reference draws, solves the perturbed OT problem and
/// stores the matched triples `(y_j, v_j, u_{σ(j)})`.
pub fn fit_plugin(
    targets: &[PairedSample],
    sampler: &dyn ReferenceSampler,
    spec: &PerturbedCostSpec,
    k: usize,
    seed: u64,
) -> Result<PluginConditionalMap, ConditionalError> {
    spec.validate()?;
    let (reference, target) = pair_reference(targets, sampler, seed)?;
    if reference.x_dim() != target.x_dim() {
        return Err(ConditionalError::Dimension(format!(
            "reference draws are {}-dimensional, targets {}-dimensional",
            reference.x_dim(),
            target.x_dim()
        )));
    }
    let (plan, _) = solve_perturbed(&reference, &target, spec)?;
    let sigma = plan
        .as_permutation()
        .expect("assignment plans are permutations");
    let anchors = (0..reference.len())
        .map(|j| Anchor {
            y: reference.y()[j].clone(),
            v: reference.x()[j].clone(),
            u: target.x()[sigma[j]].clone(),
        })
        .collect();
    PluginConditionalMap::new(anchors, k, None)
}

/// `n` draws `v ~ η_V` pushed through `evaluate(map, y, ·)`.
pub fn conditional_sample(
    map: &PluginConditionalMap,
    y: &[f64],
    n: usize,
    sampler: &dyn ReferenceSampler,
    seed: u64,
) -> Result<Vec<Point>, ConditionalError> {
    let mut rng = rng_from_seed(seed);
    let draws: Vec<Point> = (0..n).map(|_| sampler.draw(&mut rng)).collect();
    draws.par_iter().map(|v| map.evaluate(y, v)).collect()
}
