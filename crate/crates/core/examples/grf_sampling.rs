//! Matérn-3/2 random fields on the unit square and their principal modes.
//!
//! cargo run --release --example grf_sampling [grid] [samples]

use condot::grf::{pca_fit, sample_grf, GrfModel, Grid2D, MaternKernel};
use condot::numeric::variance;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(16), |s| s.parse())?;
    let samples: usize = args.next().map_or(Ok(4000), |s| s.parse())?;
    let grid = Grid2D::square(n)?;
    let model = GrfModel::new(grid, MaternKernel::new(0.5)?)?;
    let fields = sample_grf(&model, samples, 1);

    let center = grid.index(n / 2, n / 2);
    let at_center: Vec<f64> = fields.iter().map(|f| f[center]).collect();
    println!(
        "{} fields on {n}×{n}; variance at the center node {:.3} (unit marginal variance)",
        samples,
        variance(&at_center)
    );

    let basis = pca_fit(&fields, 40)?;
    let mut kept = 0.0;
    for (k, s) in basis.singular_values.iter().enumerate() {
        kept += s * s;
        if [4, 9, 19, 39].contains(&k) {
            println!(
                "{:>2} modes keep {:.1}% of the sample energy",
                k + 1,
                100.0 * kept / basis.total_energy
            );
        }
    }
    let z = basis.project_whitened(&fields[0]);
    let back = basis.reconstruct_whitened(&z);
    let err: f64 = back
        .iter()
        .zip(&fields[0])
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    println!(
        "40-mode reconstruction error of one field: {:.3e}",
        err.sqrt()
    );
    Ok(())
}
