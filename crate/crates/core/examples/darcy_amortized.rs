//! Amortized Darcy inversion: one conditional Monge map trained on simulated
//! pairs, evaluated at held-out data and compared with pCN posteriors.
//!
//! cargo run --release --example darcy_amortized [config.toml]
//!
//! Without a config the desk-scale defaults are used with a shortened run;
//! keys are those of the `condot darcy` config.

use std::time::Instant;

use condot::experiments::darcy::{
    build_training_set, compare_heldout, fit_monge, heldout_data, map_monotonicity, DarcyConfig,
    DarcySetup,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg: DarcyConfig = match std::env::args().nth(1) {
        Some(path) => toml::from_str(&std::fs::read_to_string(path)?)?,
        None => {
            let mut c = DarcyConfig {
                n_train: 20_000,
                ..Default::default()
            };
            c.pcn.iterations = 200_000;
            c.pcn.burn_in = 20_000;
            c.pcn.thin = 20;
            c
        }
    };
    let setup = DarcySetup::new(&cfg)?;

    let t = Instant::now();
    let ts = build_training_set(&setup, &cfg)?;
    println!(
        "simulated {} pairs, {} modes keep {:.1}% of the energy ({:.1}s)",
        ts.samples.len(),
        cfg.n_modes,
        100.0 * (1.0 - ts.basis.discarded_energy() / ts.basis.total_energy),
        t.elapsed().as_secs_f64()
    );

    let t = Instant::now();
    let trained = fit_monge(&ts, &cfg)?;
    let last = trained.trace.last().expect("at least one iteration");
    println!(
        "trained map: monge {:.4}, divergence {:.4} ({:.1}s)",
        last.monge_term,
        last.mmd_term,
        t.elapsed().as_secs_f64()
    );
    println!(
        "monotone fraction on held-out pairs: {:.4}",
        map_monotonicity(&setup, &cfg, &trained.map)?
    );

    let (truths, ys) = heldout_data(&setup, &cfg)?;
    for (k, (u, y)) in truths.iter().zip(&ys).enumerate() {
        let t = Instant::now();
        let c = compare_heldout(&setup, &cfg, &trained.map, &ts.basis, u, y, k)?;
        println!(
            "y{k}: mean rel L2 {:.3}, variance pearson {:.3}, pCN acceptance {:.3} at beta {:.4} ({:.1}s)",
            c.mean_rel_l2,
            c.var_pearson,
            c.pcn_acceptance,
            c.pcn_beta,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
