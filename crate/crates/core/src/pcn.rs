//! Preconditioned Crank–Nicolson MCMC on function space.
//!
//! The proposal `√(1−β²)·u + β·ξ`, `ξ` a prior draw, is prior-reversible, so
//! the acceptance ratio involves only the potential `Φ`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::ReferenceSampler;
use crate::rng::{rng_from_seed, SeededRng};

#[derive(Debug, Error)]
pub enum PcnError {
    #[error("invalid pCN config: {0}")]
    Config(String),
    #[error("initial state has dimension {got}, prior has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("potential is not finite at the initial state")]
    NonFiniteStart,
    #[error("chain has no retained states")]
    EmptyChain,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcnConfig {
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub target_acceptance: f64,
    pub adapt: bool,
    pub seed: u64,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
}

impl Default for PcnConfig {
    fn default() -> Self {
        Self {
            beta: 0.2,
            iterations: 100_000,
            burn_in: 10_000,
            target_acceptance: 0.25,
            adapt: true,
            seed: 0,
            thin: 10,
        }
    }
}

impl PcnConfig {
    pub fn validate(&self) -> Result<(), PcnError> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(PcnError::Config(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if self.burn_in >= self.iterations {
            return Err(PcnError::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(PcnError::Config(format!(
                "target_acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        if self.thin == 0 {
            return Err(PcnError::Config("thin must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PcnStep {
    pub state: Vec<f64>,
    pub phi: f64,
    pub accepted: bool,
    /// `min(1, exp(Φ(u) − Φ(û)))`.
    pub acceptance_probability: f64,
}

/// One pCN transition from `u` with cached potential `phi_u`.
pub fn pcn_step(
    u: &[f64],
    phi_u: f64,
    phi: &dyn Fn(&[f64]) -> f64,
    sampler: &dyn ReferenceSampler,
    beta: f64,
    rng: &mut SeededRng,
) -> PcnStep {
    let xi = sampler.draw(rng);
    let c = (1.0 - beta * beta).max(0.0).sqrt();
    let proposal: Vec<f64> = u
        .iter()
        .zip(xi.coords())
        .map(|(a, b)| c * a + beta * b)
        .collect();
    let phi_p = phi(&proposal);
    let alpha = if phi_p.is_finite() {
        (phi_u - phi_p).exp().min(1.0)
    } else {
        0.0
    };
    let accepted = alpha >= 1.0 || rng.random::<f64>() < alpha;
    if accepted {
        PcnStep {
            state: proposal,
            phi: phi_p,
            accepted,
            acceptance_probability: alpha,
        }
    } else {
        PcnStep {
            state: u.to_vec(),
            phi: phi_u,
            accepted,
            acceptance_probability: alpha,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain {
    /// Post-burn-in states, thinned.
    pub states: Vec<Vec<f64>>,
    /// Fraction of accepted proposals after burn-in.
    pub acceptance_rate: f64,
    /// Step size at every iteration.
    pub beta_trace: Vec<f64>,
    pub accepted: Vec<bool>,
    pub burn_in: usize,
}

impl Chain {
    pub fn final_beta(&self) -> f64 {
        *self.beta_trace.last().expect("non-empty trace")
    }

    /// `iteration,accepted,beta` rows.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<(), PcnError> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "iteration,accepted,beta")?;
        for (i, (a, b)) in self.accepted.iter().zip(&self.beta_trace).enumerate() {
            writeln!(w, "{i},{},{b}", *a as u8)?;
        }
        Ok(())
    }
}

/// Runs a chain from `u0`. With `adapt`, `log β` follows a Robbins–Monro
/// recursion toward the target acceptance during burn-in and is frozen after.
pub fn run_chain(
    cfg: &PcnConfig,
    phi: &dyn Fn(&[f64]) -> f64,
    sampler: &dyn ReferenceSampler,
    u0: &[f64],
) -> Result<Chain, PcnError> {
    cfg.validate()?;
    if u0.len() != sampler.dim() {
        return Err(PcnError::Dimension {
            expected: sampler.dim(),
            got: u0.len(),
        });
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut u = u0.to_vec();
    let mut phi_u = phi(&u);
    if !phi_u.is_finite() {
        return Err(PcnError::NonFiniteStart);
    }
    let mut log_beta = cfg.beta.ln();
    let mut beta_trace = Vec::with_capacity(cfg.iterations);
    let mut accepted = Vec::with_capacity(cfg.iterations);
    let mut states = Vec::with_capacity((cfg.iterations - cfg.burn_in) / cfg.thin + 1);
    let mut n_acc = 0usize;
    for t in 0..cfg.iterations {
        let beta = log_beta.exp();
        let step = pcn_step(&u, phi_u, phi, sampler, beta, &mut rng);
        beta_trace.push(beta);
        accepted.push(step.accepted);
        if cfg.adapt && t < cfg.burn_in {
            let gain = 1.0 / ((t + 1) as f64).sqrt();
            log_beta =
                (log_beta + gain * (step.acceptance_probability - cfg.target_acceptance)).min(0.0);
        }
        u = step.state;
        phi_u = step.phi;
        if t >= cfg.burn_in {
            n_acc += step.accepted as usize;
            if (t - cfg.burn_in) % cfg.thin == 0 {
                states.push(u.clone());
            }
        }
    }
    let acceptance_rate = n_acc as f64 / (cfg.iterations - cfg.burn_in) as f64;
    Ok(Chain {
        states,
        acceptance_rate,
        beta_trace,
        accepted,
        burn_in: cfg.burn_in,
    })
}

/// Node-wise sample mean and unbiased variance.
pub fn posterior_stats(states: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), PcnError> {
    let n = states.len();
    if n == 0 {
        return Err(PcnError::EmptyChain);
    }
    let d = states[0].len();
    let mut mean = vec![0.0; d];
    for s in states {
        mean.iter_mut().zip(s).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    if n > 1 {
        for s in states {
            var.iter_mut()
                .zip(s.iter().zip(&mean))
                .for_each(|(v, (x, m))| *v += (x - m) * (x - m));
        }
        var.iter_mut().for_each(|v| *v /= (n - 1) as f64);
    }
    Ok((mean, var))
}
