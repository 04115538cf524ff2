//! Amortized Darcy inversion: simulate `(u_j, y_j)` pairs from the prior,
//! compress fields to whitened principal coefficients, train a conditional
//! Monge map and compare its posteriors with pCN chains.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::darcy::{simulate_data, uniform_sensors, DarcyProblem, DEFAULT_NOISE_SIGMA};
use crate::grf::{pca_fit, GrfModel, Grid2D, KlBasis, MaternKernel};
use crate::measures::{PairedSample, Point, StandardNormalSampler};
use crate::metrics::{field_l2_error, variance_scatter};
use crate::monge::{
    monotonicity_fraction, train, LinearReadoutMap, MapInit, TrainConfig, TrainedMap,
};
use crate::numeric::pearson;
use crate::pcn::{posterior_stats, run_chain, Chain, PcnConfig};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarcyConfig {
    /// Nodes per side, boundary included.
    pub grid: usize,
    pub lengthscale: f64,
    pub noise_sigma: f64,
    pub sensors_per_side: usize,
    /// Sensor lattice inset from the boundary; one grid spacing when unset.
    pub sensor_inset: Option<f64>,
    pub n_modes: usize,
    pub n_train: usize,
    pub n_heldout: usize,
    pub n_posterior: usize,
    pub n_monotonicity: usize,
    /// Perturbation and neighbour count of the plugin map.
    pub plugin_epsilon: f64,
    pub plugin_k: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub pcn: PcnConfig,
}

impl Default for DarcyConfig {
    fn default() -> Self {
        Self {
            grid: 16,
            lengthscale: 0.5,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            sensors_per_side: 8,
            sensor_inset: None,
            n_modes: 20,
            n_train: 100_000,
            n_heldout: 4,
            n_posterior: 5000,
            n_monotonicity: 10_000,
            plugin_epsilon: 5e-3,
            plugin_k: 2,
            seed: 0,
            train: TrainConfig {
                lambda: 1e-3,
                learning_rate: 1e-4,
                init: MapInit::ConditionalGaussian,
                ..TrainConfig::default()
            },
            pcn: PcnConfig {
                iterations: 1_000_000,
                burn_in: 100_000,
                thin: 100,
                ..PcnConfig::default()
            },
        }
    }
}

impl DarcyConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.grid < 3 {
            return bad(format!("grid must be at least 3, got {}", self.grid));
        }
        if self.n_modes == 0 || self.n_modes > self.grid * self.grid {
            return bad(format!("n_modes must lie in 1..={}", self.grid * self.grid));
        }
        if self.n_train < self.n_modes {
            return bad("n_train must be at least n_modes".into());
        }
        if self.sensors_per_side == 0 {
            return bad("sensors_per_side must be positive".into());
        }
        self.train.validate()?;
        self.pcn.validate()?;
        Ok(())
    }
}

/// Prior and forward problem built from a config.
#[derive(Debug, Clone)]
pub struct DarcySetup {
    pub prior: GrfModel,
    pub problem: DarcyProblem,
}

impl DarcySetup {
    pub fn new(cfg: &DarcyConfig) -> Result<Self, ExperimentError> {
        cfg.validate()?;
        let grid = Grid2D::square(cfg.grid)?;
        let prior = GrfModel::new(grid, MaternKernel::new(cfg.lengthscale)?)?;
        let inset = cfg.sensor_inset.unwrap_or(grid.hx().max(grid.hy()));
        let sensors = uniform_sensors(cfg.sensors_per_side, inset);
        let problem =
            DarcyProblem::with_parts(grid, vec![1.0; grid.len()], sensors, cfg.noise_sigma)?;
        Ok(Self { prior, problem })
    }

    /// `n` prior fields with their noisy observations; draw `j` uses its own
    /// stream so the set does not depend on thread scheduling.
    pub fn simulate(
        &self,
        n: usize,
        seed: u64,
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), ExperimentError> {
        let out: Result<Vec<(Vec<f64>, Vec<f64>)>, ExperimentError> = (0..n)
            .into_par_iter()
            .map(|j| {
                let s = derive_seed(seed, &format!("draw{j}"));
                let u = self.prior.sample_with(&mut rng_from_seed(s));
                let y = simulate_data(&self.problem, &u, derive_seed(s, "noise"))?;
                Ok((u, y))
            })
            .collect();
        Ok(out?.into_iter().unzip())
    }

    pub fn potential(&self, y: &[f64]) -> impl Fn(&[f64]) -> f64 + '_ {
        let y = y.to_vec();
        move |u: &[f64]| crate::darcy::likelihood_phi(&self.problem, u, &y).unwrap_or(f64::INFINITY)
    }
}

/// Whitened principal coefficients of simulated fields paired with their data.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub basis: KlBasis,
    pub samples: Vec<PairedSample>,
}

pub fn build_training_set(
    setup: &DarcySetup,
    cfg: &DarcyConfig,
) -> Result<TrainingSet, ExperimentError> {
    let (fields, obs) = setup.simulate(cfg.n_train, derive_seed(cfg.seed, "training"))?;
    let basis = pca_fit(&fields, cfg.n_modes)?;
    let samples = fields
        .par_iter()
        .zip(&obs)
        .map(|(u, y)| {
            Ok(PairedSample::new(
                Point::new(y.clone())?,
                Point::new(basis.project_whitened(u))?,
            ))
        })
        .collect::<Result<Vec<_>, crate::measures::MeasureError>>()?;
    Ok(TrainingSet { basis, samples })
}

pub fn fit_monge(ts: &TrainingSet, cfg: &DarcyConfig) -> Result<TrainedMap, ExperimentError> {
    let sampler = StandardNormalSampler {
        dim: ts.basis.n_modes(),
    };
    let mut tc = cfg.train.clone();
    tc.seed = derive_seed(cfg.seed, "monge");
    Ok(train(&ts.samples, &sampler, &tc)?)
}

/// `n` posterior fields `reconstruct(T(y, v))`, `v ~ N(0, I)`.
pub fn map_posterior_fields(
    map: &LinearReadoutMap,
    basis: &KlBasis,
    y: &[f64],
    n: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let sampler = StandardNormalSampler {
        dim: basis.n_modes(),
    };
    map.sample(y, n, &sampler, seed)
        .iter()
        .map(|z| basis.reconstruct_whitened(z))
        .collect()
}

pub fn pcn_posterior(
    setup: &DarcySetup,
    y: &[f64],
    pcn: &PcnConfig,
) -> Result<Chain, ExperimentError> {
    let phi = setup.potential(y);
    let u0 = vec![0.0; setup.prior.grid.len()];
    Ok(run_chain(pcn, &phi, &setup.prior, &u0)?)
}

/// Held-out truth, its data, and both posterior summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeldOutComparison {
    pub truth: Vec<f64>,
    pub y: Vec<f64>,
    pub map_mean: Vec<f64>,
    pub map_var: Vec<f64>,
    pub pcn_mean: Vec<f64>,
    pub pcn_var: Vec<f64>,
    pub pcn_acceptance: f64,
    pub pcn_beta: f64,
    pub mean_rel_l2: f64,
    pub var_pearson: f64,
}

impl HeldOutComparison {
    pub fn scatter(&self) -> Vec<(f64, f64)> {
        variance_scatter(&self.map_var, &self.pcn_var).expect("equal lengths")
    }
}

pub fn heldout_data(
    setup: &DarcySetup,
    cfg: &DarcyConfig,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), ExperimentError> {
    setup.simulate(cfg.n_heldout, derive_seed(cfg.seed, "heldout"))
}

pub fn compare_heldout(
    setup: &DarcySetup,
    cfg: &DarcyConfig,
    map: &LinearReadoutMap,
    basis: &KlBasis,
    truth: &[f64],
    y: &[f64],
    k: usize,
) -> Result<HeldOutComparison, ExperimentError> {
    let fields = map_posterior_fields(
        map,
        basis,
        y,
        cfg.n_posterior,
        derive_seed(cfg.seed, &format!("posterior{k}")),
    );
    let (map_mean, map_var) = posterior_stats(&fields)?;
    let mut pcn = cfg.pcn.clone();
    pcn.seed = derive_seed(cfg.seed, &format!("pcn{k}"));
    let chain = pcn_posterior(setup, y, &pcn)?;
    let (pcn_mean, pcn_var) = posterior_stats(&chain.states)?;
    let mean_rel_l2 = field_l2_error(&map_mean, &pcn_mean, true)?;
    let var_pearson = pearson(&map_var, &pcn_var).unwrap_or(f64::NAN);
    Ok(HeldOutComparison {
        truth: truth.to_vec(),
        y: y.to_vec(),
        map_mean,
        map_var,
        pcn_mean,
        pcn_var,
        pcn_acceptance: chain.acceptance_rate,
        pcn_beta: chain.final_beta(),
        mean_rel_l2,
        var_pearson,
    })
}

/// Held-out `(y, z1, z2)` triples: fresh data paired with two reference draws.
pub fn monotonicity_pairs(
    setup: &DarcySetup,
    n: usize,
    n_modes: usize,
    seed: u64,
) -> Result<Vec<(Point, Point, Point)>, ExperimentError> {
    let (_, obs) = setup.simulate(n, derive_seed(seed, "monotone-data"))?;
    let sampler = StandardNormalSampler { dim: n_modes };
    let mut rng = rng_from_seed(derive_seed(seed, "monotone-ref"));
    use crate::measures::ReferenceSampler;
    obs.into_iter()
        .map(|y| {
            Ok((
                Point::new(y)?,
                sampler.draw(&mut rng),
                sampler.draw(&mut rng),
            ))
        })
        .collect()
}

pub fn map_monotonicity(
    setup: &DarcySetup,
    cfg: &DarcyConfig,
    map: &LinearReadoutMap,
) -> Result<f64, ExperimentError> {
    let pairs = monotonicity_pairs(setup, cfg.n_monotonicity, cfg.n_modes, cfg.seed)?;
    Ok(monotonicity_fraction(map, &pairs))
}
