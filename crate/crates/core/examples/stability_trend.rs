//! Posterior stability under KL truncation on the linear-Gaussian surrogate:
//! sliced W1 between posteriors at successive mode counts.
//!
//! cargo run --release --example stability_trend

use condot::experiments::linear_gaussian::LinearGaussianSurrogate;
use condot::grf::{GrfModel, MaternKernel};
use condot::metrics::stability_trend;
use condot::rng::rng_from_seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = LinearGaussianSurrogate::new(16, 0.5, 8, 0.05)?;
    let prior = GrfModel::new(s.grid, MaternKernel::new(0.5)?)?;
    let truth = prior.sample_with(&mut rng_from_seed(2));
    let y = s.observe(&truth, 3);
    let rows = stability_trend(
        |n, y: &[f64], k| Ok::<_, String>(s.sample_truncated(n, y, k, 11)),
        &[5, 10, 20, 40],
        &y,
        4000,
        13,
    )?;
    for r in rows {
        println!(
            "N = {:>2} → {:>2}: sliced W1 {:.4}",
            r.modes, r.next_modes, r.sliced_w1
        );
    }
    Ok(())
}
