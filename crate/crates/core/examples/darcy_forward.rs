//! The Darcy forward model: pressure for constant and random
//! log-permeability, point observations and the likelihood potential.
//!
//! cargo run --release --example darcy_forward [grid]

use condot::darcy::{forward, likelihood_phi, simulate_data, solve_darcy, DarcyProblem};
use condot::grf::{GrfModel, Grid2D, MaternKernel};
use condot::rng::rng_from_seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(64), |s| s.parse())?;
    let grid = Grid2D::square(n)?;
    let problem = DarcyProblem::new(grid, 0.01)?;

    let p = solve_darcy(&problem, &vec![0.0; grid.len()])?;
    let center = grid.index(n / 2, n / 2);
    println!(
        "unit permeability: pressure {:.6} at node {:?}",
        p[center],
        grid.node(center)
    );

    let prior = GrfModel::new(grid, MaternKernel::new(0.5)?)?;
    let u = prior.sample_with(&mut rng_from_seed(5));
    let p = solve_darcy(&problem, &u)?;
    let max = p.iter().cloned().fold(f64::MIN, f64::max);
    let min = p.iter().cloned().fold(f64::MAX, f64::min);
    println!("random field: pressure range [{min:.4}, {max:.4}]");

    let clean = forward(&problem, &u)?;
    let y = simulate_data(&problem, &u, 9)?;
    println!(
        "{} sensors; first readings {:.4?}",
        problem.n_sensors(),
        &clean[..4]
    );
    println!(
        "potential at the truth {:.2}, at u = 0 {:.2}",
        likelihood_phi(&problem, &u, &y)?,
        likelihood_phi(&problem, &vec![0.0; grid.len()], &y)?
    );
    Ok(())
}
