//! Plugin conditional sampling on a 2D benchmark, scored slice by slice
//! against slab rejection samples.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::benchmarks2d::{
    conditional_truth_slab, sample_benchmark, Benchmark2D, DEFAULT_SLAB_DELTA,
};
use crate::conditional::PerturbedCostSpec;
use crate::measures::{PairedSample, StandardNormalSampler};
use crate::metrics::wasserstein1_1d;
use crate::plugin::{conditional_sample, fit_plugin, PluginConditionalMap};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bench2dConfig {
    pub family: String,
    pub n_train: usize,
    pub epsilon: f64,
    pub k: usize,
    pub slices: Vec<f64>,
    pub slab_delta: f64,
    pub n_eval: usize,
    pub seed: u64,
}

impl Default for Bench2dConfig {
    fn default() -> Self {
        Self {
            family: "pinwheel".into(),
            n_train: 20_000,
            epsilon: 5e-3,
            k: 2,
            slices: vec![-0.5, 0.0, 0.5],
            slab_delta: DEFAULT_SLAB_DELTA,
            n_eval: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceResult {
    pub y0: f64,
    pub slab_acceptance: f64,
    pub w1: f64,
    pub plugin: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Bench2dRun {
    pub data: Vec<PairedSample>,
    pub map: PluginConditionalMap,
    pub slices: Vec<SliceResult>,
    pub fit_seconds: f64,
}

impl Bench2dConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if self.k == 0 || self.n_train < self.k {
            return bad("need 1 <= k <= n_train");
        }
        if self.n_eval == 0 {
            return bad("n_eval must be positive");
        }
        if !(self.slab_delta > 0.0) {
            return bad("slab_delta must be positive");
        }
        Ok(())
    }
}

pub fn run_bench2d(cfg: &Bench2dConfig) -> Result<Bench2dRun, ExperimentError> {
    let bench = Benchmark2D::from_name(&cfg.family)?;
    cfg.validate()?;
    let data = sample_benchmark(&bench, cfg.n_train, derive_seed(cfg.seed, "data"))?;
    let spec = PerturbedCostSpec::new(cfg.epsilon)?;
    let reference = StandardNormalSampler { dim: 1 };
    let t = Instant::now();
    let map = fit_plugin(
        &data,
        &reference,
        &spec,
        cfg.k,
        derive_seed(cfg.seed, "reference"),
    )?;
    let fit_seconds = t.elapsed().as_secs_f64();
    let mut slices = Vec::with_capacity(cfg.slices.len());
    for (i, &y0) in cfg.slices.iter().enumerate() {
        let truth = conditional_truth_slab(
            &bench,
            y0,
            cfg.slab_delta,
            cfg.n_eval,
            derive_seed(cfg.seed, &format!("slab{i}")),
        )?;
        let plugin: Vec<f64> = conditional_sample(
            &map,
            &[y0],
            cfg.n_eval,
            &reference,
            derive_seed(cfg.seed, &format!("conditional{i}")),
        )?
        .iter()
        .map(|p| p[0])
        .collect();
        slices.push(SliceResult {
            y0,
            slab_acceptance: truth.acceptance_rate,
            w1: wasserstein1_1d(&plugin, &truth.values)?,
            plugin,
            truth: truth.values,
        });
    }
    Ok(Bench2dRun {
        data,
        map,
        slices,
        fit_seconds,
    })
}
