//! Monge-penalized conditional map on a 1D toy problem with a known
//! posterior: `u ~ N(0, 1)`, `y = u + 0.5 ξ`, so `u | y ~ N(0.8 y, 0.2)`.
//!
//! cargo run --release --example monge_map_training

use condot::measures::{PairedSample, Point, StandardNormalSampler};
use condot::monge::{monotonicity_fraction, train, TrainConfig};
use condot::numeric::{mean, variance};
use condot::rng::rng_from_seed;
use rand_distr::{Distribution, StandardNormal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rng_from_seed(1);
    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
    let data: Vec<PairedSample> = (0..4000)
        .map(|_| {
            let u = g();
            PairedSample::new(Point::scalar(u + 0.5 * g()), Point::scalar(u))
        })
        .collect();
    let sampler = StandardNormalSampler { dim: 1 };
    let cfg = TrainConfig {
        iterations: 1500,
        learning_rate: 3e-3,
        lambda: 0.01,
        ..Default::default()
    };
    let trained = train(&data, &sampler, &cfg)?;
    let last = trained.trace.last().expect("trained");
    println!(
        "final Monge term {:.4}, divergence {:.4}",
        last.monge_term, last.mmd_term
    );
    for y in [-1.0, 0.0, 1.5] {
        let s: Vec<f64> = trained
            .map
            .sample(&[y], 5000, &sampler, 2)
            .into_iter()
            .map(|v| v[0])
            .collect();
        println!(
            "y = {y:+.1}: mean {:+.3} (exact {:+.3}), variance {:.3} (exact 0.200)",
            mean(&s),
            0.8 * y,
            variance(&s)
        );
    }
    let triples: Vec<(Point, Point, Point)> = (0..2000)
        .map(|_| (Point::scalar(g()), Point::scalar(g()), Point::scalar(g())))
        .collect();
    println!(
        "monotone fraction {:.4}",
        monotonicity_fraction(&trained.map, &triples)
    );
    Ok(())
}
