//! Conditional Kantorovich on a small two-slice problem: slice-by-slice
//! decomposition, the χ-cost LP it must agree with, duality with partial
//! c-transforms, and the ε-perturbed plans approaching it.
//!
//! cargo run --release --example conditional_kantorovich

use condot::conditional::{
    build_chi_cost, conditional_duality_gap, epsilon_sweep, independence_coupling_cost,
    quadratic_cost, solve_conditional_kantorovich, triangular_compose, DEFAULT_EPSILONS,
};
use condot::measures::{JointMeasure, Point};
use condot::ot::solve_lp;
use condot::rng::rng_from_seed;
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rng_from_seed(3);
    let y: Vec<Point> = (0..8).map(|i| Point::scalar((i / 4) as f64)).collect();
    let mut draw = || -> Vec<Point> { (0..8).map(|_| Point::scalar(rng.random())).collect() };
    let reference = JointMeasure::new(y.clone(), draw(), None)?;
    let target = JointMeasure::new(y, draw(), None)?;

    let (dec, total) = solve_conditional_kantorovich(&reference, &target, &quadratic_cost)?;
    let chi = build_chi_cost(&reference, &target, &quadratic_cost)?;
    let lp = solve_lp(&chi, reference.weights(), target.weights())?;
    println!("conditional cost {total:.12}");
    println!("χ-cost LP        {:.12}", lp.cost);
    println!("pairing {:?}", dec.pairing(reference.len()));
    println!(
        "independent coupling within slices costs {:.6}",
        independence_coupling_cost(&reference, &target, &quadratic_cost)?
    );

    let rep = conditional_duality_gap(&reference, &target, &quadratic_cost)?;
    println!(
        "primal {:.12}, dual {:.12}, slackness {:.1e}",
        rep.primal, rep.dual, rep.max_slackness
    );

    for e in epsilon_sweep(&reference, &target, &DEFAULT_EPSILONS)? {
        println!(
            "ε = {:.0e}: distance to conditional map {:.6}",
            e.epsilon, e.distance
        );
    }

    let tri = triangular_compose(&reference, &target, &quadratic_cost)?;
    println!(
        "triangular composition: stage 1 {:.6}, stage 2 {:.6}",
        tri.stage1_cost, tri.stage2_cost
    );
    Ok(())
}
