//! Plugin conditional sampling on the 2D benchmarks, scored against slab
//! rejection samples of the true conditionals.
//!
//! cargo run --release --example plugin_benchmarks [family] [J]

use std::time::Instant;

use condot::benchmarks2d::{
    conditional_truth_slab, sample_benchmark, Benchmark2D, DEFAULT_SLAB_DELTA, FAMILIES,
};
use condot::conditional::PerturbedCostSpec;
use condot::measures::StandardNormalSampler;
use condot::metrics::wasserstein1_1d;
use condot::plugin::{conditional_sample, fit_plugin};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let families: Vec<&str> = match args.get(1) {
        Some(f) => vec![f.as_str()],
        None => FAMILIES.to_vec(),
    };
    let j: usize = args
        .get(2)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(20_000);
    let spec = PerturbedCostSpec::new(5e-3)?;
    let reference = StandardNormalSampler { dim: 1 };

    for name in families {
        let bench = Benchmark2D::from_name(name)?;
        let data = sample_benchmark(&bench, j, 1)?;
        let t = Instant::now();
        let map = fit_plugin(&data, &reference, &spec, 2, 2)?;
        println!("{name}: fitted J={j} in {:.1}s", t.elapsed().as_secs_f64());
        for y0 in [-0.5, 0.0, 0.5] {
            let truth = match conditional_truth_slab(&bench, y0, DEFAULT_SLAB_DELTA, 5000, 3) {
                Ok(s) => s,
                Err(e) => {
                    println!("  y={y0:+.2}: {e}");
                    continue;
                }
            };
            let samples: Vec<f64> = conditional_sample(&map, &[y0], 5000, &reference, 4)?
                .iter()
                .map(|p| p[0])
                .collect();
            println!(
                "  y={y0:+.2}: slab acceptance {:.3}, W1 = {:.4}",
                truth.acceptance_rate,
                wasserstein1_1d(&samples, &truth.values)?
            );
        }
    }
    Ok(())
}
