//! Discrete OT three ways on one random instance: the exact assignment
//! solver, the transportation simplex, and annealed Sinkhorn.
//!
//! cargo run --release --example assignment_and_lp [n]

use condot::ot::{
    extract_duals, solve_assignment, solve_lp, solve_sinkhorn, uniform, CostMatrix, SinkhornOptions,
};
use condot::rng::rng_from_seed;
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(40), |s| s.parse())?;
    let mut rng = rng_from_seed(7);
    let pts = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<[f64; 2]> {
        (0..n).map(|_| [rng.random(), rng.random()]).collect()
    };
    let (x, y) = (pts(&mut rng), pts(&mut rng));
    let c = CostMatrix::from_fn(n, n, |i, j| {
        (x[i][0] - y[j][0]).powi(2) + (x[i][1] - y[j][1]).powi(2)
    })?;
    let w = uniform(n);

    let a = solve_assignment(&c)?;
    let lp = solve_lp(&c, &w, &w)?;
    println!("assignment cost {:.10}", a.cost);
    println!("simplex cost    {:.10} ({} pivots)", lp.cost, lp.pivots);

    let duals = extract_duals(&c, &a.plan())?;
    println!(
        "dual value {:.10}, max infeasibility {:.1e}",
        duals.dual_value(&w, &w),
        duals.max_infeasibility(&c)
    );

    for reg in [1e-1, 1e-2, 1e-3] {
        let s = solve_sinkhorn(&c, &w, &w, reg, SinkhornOptions::default())?;
        println!(
            "sinkhorn reg {reg:.0e}: cost {:.6}, {} iterations, marginal error {:.1e}",
            s.plan.cost(&c),
            s.iterations,
            s.marginal_violation
        );
    }
    Ok(())
}
