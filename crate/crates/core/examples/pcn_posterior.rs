//! pCN on a small Darcy problem: adaptation of the step size toward the target
//! acceptance rate, then posterior mean and spread against the truth.
//!
//! cargo run --release --example pcn_posterior [iterations]

use condot::experiments::darcy::{heldout_data, pcn_posterior, DarcyConfig, DarcySetup};
use condot::metrics::field_l2_error;
use condot::pcn::posterior_stats;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations: usize = std::env::args().nth(1).map_or(Ok(200_000), |s| s.parse())?;
    let mut cfg = DarcyConfig {
        n_train: 100,
        n_heldout: 1,
        ..Default::default()
    };
    cfg.pcn.iterations = iterations;
    cfg.pcn.burn_in = iterations / 10;
    cfg.pcn.thin = 20;
    let setup = DarcySetup::new(&cfg)?;
    let (truths, ys) = heldout_data(&setup, &cfg)?;

    let chain = pcn_posterior(&setup, &ys[0], &cfg.pcn)?;
    let (mean, var) = posterior_stats(&chain.states)?;
    println!(
        "acceptance {:.3} with β = {:.4} after adaptation",
        chain.acceptance_rate,
        chain.final_beta()
    );
    println!(
        "relative L2 distance of the posterior mean from the truth {:.3}",
        field_l2_error(&mean, &truths[0], true)?
    );
    let avg_sd = var.iter().map(|v| v.sqrt()).sum::<f64>() / var.len() as f64;
    println!("average posterior standard deviation {avg_sd:.3} (prior 1)");
    Ok(())
}
