//! Small oracle suites behind `condot selftest`: each compares a solver
//! against an independent computation on random instances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conditional::{
    build_chi_cost, conditional_duality_gap, quadratic_cost, solve_conditional_kantorovich,
};
use crate::grf::{cov_matrix, GrfModel, Grid2D, MaternKernel};
use crate::measures::{JointMeasure, Point};
use crate::monge::{
    grad_loss, monge_mmd_loss, Batch, FeatureExpansion, KernelMetric, LinearReadoutMap, LossConfig,
    PointSet,
};
use crate::numeric::{batch_means_se, mean};
use crate::ot::{solve_assignment, solve_lp, CostMatrix};
use crate::pcn::{run_chain, PcnConfig};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_all() -> Vec<SuiteResult> {
    vec![
        assignment_vs_enumeration(),
        conditional_duality(),
        chi_cost_lp(),
        pcn_conjugate(),
        monge_gradient(),
    ]
}

/// Minimum of `Σ c[i][σ(i)]` over all permutations, by Heap's algorithm.
pub fn enumerate_min(c: &CostMatrix) -> f64 {
    let n = c.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum::<f64>();
    let mut best = cost(&perm);
    let mut counters = vec![0; n];
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(cost(&perm));
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

fn assignment_vs_enumeration() -> SuiteResult {
    let mut rng = rng_from_seed(101);
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let n = 3 + t % 5;
        let c = CostMatrix::from_fn(n, n, |_, _| rng.random::<f64>()).expect("finite costs");
        let got = solve_assignment(&c).map(|a| a.cost).unwrap_or(f64::NAN);
        worst = worst.max((got - enumerate_min(&c) / n as f64).abs());
    }
    SuiteResult {
        name: "assignment vs enumeration",
        passed: worst <= 1e-12,
        detail: format!("max |Δ| = {worst:.2e} on 100 instances"),
    }
}

fn random_conditional(
    rng: &mut impl Rng,
    slices: usize,
    per: usize,
) -> (JointMeasure, JointMeasure) {
    let mut y = Vec::new();
    for s in 0..slices {
        y.extend(std::iter::repeat_n(Point::scalar(s as f64), per));
    }
    let mut draw = || -> Vec<Point> { (0..y.len()).map(|_| Point::scalar(rng.random())).collect() };
    let (v, u) = (draw(), draw());
    (
        JointMeasure::new(y.clone(), v, None).expect("valid measure"),
        JointMeasure::new(y, u, None).expect("valid measure"),
    )
}

fn conditional_duality() -> SuiteResult {
    let mut rng = rng_from_seed(202);
    let (mut gap, mut slack): (f64, f64) = (0.0, 0.0);
    for t in 0..50 {
        let (r, tg) = random_conditional(&mut rng, 2 + t % 4, 1 + t % 6);
        match conditional_duality_gap(&r, &tg, &quadratic_cost) {
            Ok(rep) => {
                gap = gap.max(rep.gap.abs() / (1.0 + rep.primal.abs()));
                slack = slack.max(rep.max_slackness);
            }
            Err(_) => gap = f64::INFINITY,
        }
    }
    SuiteResult {
        name: "conditional duality",
        passed: gap <= 1e-8 && slack <= 1e-8,
        detail: format!("max relative gap {gap:.2e}, max slackness {slack:.2e}"),
    }
}

fn chi_cost_lp() -> SuiteResult {
    let mut rng = rng_from_seed(303);
    let mut worst: f64 = 0.0;
    for t in 0..30 {
        let (r, tg) = random_conditional(&mut rng, 2 + t % 3, 2 + t % 3);
        let d = solve_conditional_kantorovich(&r, &tg, &quadratic_cost)
            .ok()
            .zip(build_chi_cost(&r, &tg, &quadratic_cost).ok())
            .and_then(|((_, total), c)| {
                solve_lp(&c, r.weights(), tg.weights())
                    .ok()
                    .map(|lp| (total - lp.cost).abs())
            });
        worst = worst.max(d.unwrap_or(f64::INFINITY));
    }
    SuiteResult {
        name: "conditional vs chi-cost LP",
        passed: worst <= 1e-9,
        detail: format!("max |Δ| = {worst:.2e} on 30 instances"),
    }
}

fn pcn_conjugate() -> SuiteResult {
    let grid = Grid2D::square(3).expect("valid grid");
    let kernel = MaternKernel::new(0.5).expect("valid lengthscale");
    let prior = GrfModel::new(grid, kernel).expect("positive definite prior");
    let c = cov_matrix(&grid, &kernel);
    let sigma: f64 = 0.3;
    let a = DMatrix::from_fn(3, 9, |i, j| ((i * 9 + j) as f64 * 0.7).sin());
    let y = DVector::from_vec(vec![0.4, -0.2, 0.9]);
    let precision =
        c.try_inverse().expect("invertible prior") + a.transpose() * &a / (sigma * sigma);
    let want = precision.try_inverse().expect("invertible posterior") * a.transpose() * &y
        / (sigma * sigma);
    let phi = |x: &[f64]| {
        (&a * DVector::from_column_slice(x) - &y).norm_squared() / (2.0 * sigma * sigma)
    };
    let cfg = PcnConfig {
        iterations: 60_000,
        burn_in: 10_000,
        seed: 404,
        thin: 1,
        ..Default::default()
    };
    let Ok(chain) = run_chain(&cfg, &phi, &prior, &[0.0; 9]) else {
        return SuiteResult {
            name: "pCN conjugate Gaussian",
            passed: false,
            detail: "chain failed".into(),
        };
    };
    let worst = (0..9)
        .map(|node| {
            let xs: Vec<f64> = chain.states.iter().map(|s| s[node]).collect();
            (mean(&xs) - want[node]).abs() / batch_means_se(&xs, 50)
        })
        .fold(0.0, f64::max);
    SuiteResult {
        name: "pCN conjugate Gaussian",
        passed: worst <= 4.0,
        detail: format!(
            "max |mean error| = {worst:.2} batch-means SE, acceptance {:.3}",
            chain.acceptance_rate
        ),
    }
}

fn monge_gradient() -> SuiteResult {
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let mut rng = rng_from_seed(505 + seed);
        let (dy, du, m) = (2, 2, 10);
        let features =
            FeatureExpansion::new(dy, du, 6, 1.5, vec![0.1; dy + du], vec![1.2; dy + du], seed)
                .expect("valid features");
        let mut map = LinearReadoutMap::zeros(features, du);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        for w in map.weights.iter_mut() {
            *w = 0.3 * gauss();
        }
        let mut set = |n: usize, d: usize| PointSet::new(d, (0..n * d).map(|_| gauss()).collect());
        let y = set(m, dy);
        let r = Batch::new(y.clone(), set(m, du));
        let t = Batch::new(y, set(m, du));
        let cfg = LossConfig {
            lambda: 0.1,
            kernel: KernelMetric {
                scale: vec![0.8; dy + du],
                bandwidth: 1.1,
                y_projection: Some(vec![0.5, -0.3, 0.2, 0.7]),
                pair_bandwidth: Some(0.7),
            },
            monge_term: true,
        };
        let Ok(g) = grad_loss(&map, &r, &t, &cfg) else {
            worst = f64::INFINITY;
            continue;
        };
        let loss = |w: &LinearReadoutMap| monge_mmd_loss(w, &r, &t, &cfg).map(|p| p.total);
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..g.len() {
            let h = 1e-5;
            let mut p = map.clone();
            p.weights[k] += h;
            let lp = loss(&p).unwrap_or(f64::NAN);
            p.weights[k] -= 2.0 * h;
            let lm = loss(&p).unwrap_or(f64::NAN);
            let fd = (lp - lm) / (2.0 * h);
            num += (g[k] - fd) * (g[k] - fd);
            den += fd * fd;
        }
        worst = worst.max((num / den).sqrt());
    }
    SuiteResult {
        name: "Monge loss gradient",
        passed: worst <= 1e-5,
        detail: format!("max relative error vs central differences {worst:.2e}"),
    }
}
