//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! cargo test --release --test acceptance [-- 1 5 10]
//!
//! With arguments only the listed criteria run. Exits with 3 when any fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use condot::benchmarks2d::FAMILIES;
use condot::conditional::{
    build_chi_cost, conditional_duality_gap, epsilon_sweep, quadratic_cost,
    solve_conditional_kantorovich, DEFAULT_EPSILONS,
};
use condot::darcy::{interpolate, solve_darcy, DarcyProblem};
use condot::experiments::bench2d::{run_bench2d, Bench2dConfig};
use condot::experiments::darcy::{
    build_training_set, compare_heldout, fit_monge, heldout_data, map_monotonicity, DarcyConfig,
    DarcySetup,
};
use condot::experiments::linear_gaussian::LinearGaussianSurrogate;
use condot::grf::{cov_matrix, sample_grf, GrfModel, Grid2D, MaternKernel};
use condot::measures::{JointMeasure, Point};
use condot::metrics::stability_trend;
use condot::monge::{
    grad_loss, monge_mmd_loss, Batch, FeatureExpansion, KernelMetric, LinearReadoutMap, LossConfig,
    PointSet,
};
use condot::numeric::{batch_means_se, mean};
use condot::ot::{solve_assignment, solve_lp, CostMatrix};
use condot::pcn::{run_chain, PcnConfig};
use condot::rng::rng_from_seed;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// All permutations of `0..n`, lexicographic, by repeated next-permutation.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
            return out;
        };
        let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).unwrap();
        p.swap(i, j);
        p[i + 1..].reverse();
        out.push(p.clone());
    }
}

fn criterion_1() -> Outcome {
    let mut rng = rng_from_seed(1001);
    let mut worst: f64 = 0.0;
    for t in 0..200 {
        let n = 3 + t % 5;
        let c: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        let brute = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| c[i][j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / n as f64;
        let got = solve_assignment(&CostMatrix::from_rows(&c).unwrap())
            .unwrap()
            .cost;
        worst = worst.max((got - brute).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("max |Δ| = {worst:.1e} over 200 instances, n in 3..=7"),
    )
}

fn scalar_points(xs: &[f64]) -> Vec<Point> {
    xs.iter().map(|&x| Point::scalar(x)).collect()
}

/// `slices` groups at `y = 0, 1, ...` with `per` uniform atoms each.
fn conditional_instance(
    rng: &mut impl Rng,
    slices: usize,
    per: usize,
) -> (JointMeasure, JointMeasure) {
    let y: Vec<f64> = (0..slices * per).map(|i| (i / per) as f64).collect();
    let mut draw = || -> Vec<f64> { (0..y.len()).map(|_| rng.random()).collect() };
    let (v, u) = (draw(), draw());
    (
        JointMeasure::new(scalar_points(&y), scalar_points(&v), None).unwrap(),
        JointMeasure::new(scalar_points(&y), scalar_points(&u), None).unwrap(),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = rng_from_seed(1002);
    let (mut gap, mut slack): (f64, f64) = (0.0, 0.0);
    for t in 0..100 {
        let slices = 2 + t % 4;
        let per = 1 + (t / 4) % 6;
        let (r, tg) = conditional_instance(&mut rng, slices, per);
        let rep = conditional_duality_gap(&r, &tg, &quadratic_cost).unwrap();
        // recompute the dual objective and slackness from the potentials alone
        let psi = &rep.potentials.psi;
        let phi = &rep.potentials.phi;
        let dual: f64 = phi
            .iter()
            .zip(tg.weights())
            .map(|(p, b)| p * b)
            .sum::<f64>()
            - psi.iter().zip(r.weights()).map(|(p, a)| p * a).sum::<f64>();
        gap = gap.max((rep.primal - dual).abs() / (1.0 + rep.primal.abs()));
        let (dec, _) = solve_conditional_kantorovich(&r, &tg, &quadratic_cost).unwrap();
        let plan = dec.global_plan(&r, &tg);
        for (i, j, _) in plan.support() {
            let c = (r.x()[i][0] - tg.x()[j][0]).powi(2);
            slack = slack.max((phi[j] - psi[i] - c).abs());
        }
        // feasibility within slices
        for i in 0..r.len() {
            for j in 0..tg.len() {
                if r.y()[i][0] == tg.y()[j][0] {
                    let c = (r.x()[i][0] - tg.x()[j][0]).powi(2);
                    slack = slack.max(phi[j] - psi[i] - c);
                }
            }
        }
    }
    outcome(
        gap <= 1e-8 && slack <= 1e-8,
        format!("max relative gap {gap:.1e}, max slackness/infeasibility {slack:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = rng_from_seed(1003);
    let mut worst: f64 = 0.0;
    let mut off_diagonal = 0usize;
    for t in 0..100 {
        let (r, tg) = conditional_instance(&mut rng, 2 + t % 3, 2 + (t / 3) % 3);
        let (dec, total) = solve_conditional_kantorovich(&r, &tg, &quadratic_cost).unwrap();
        let chi = build_chi_cost(&r, &tg, &quadratic_cost).unwrap();
        let lp = solve_lp(&chi, r.weights(), tg.weights()).unwrap();
        worst = worst.max((total - lp.cost).abs());
        let plan = dec.global_plan(&r, &tg);
        off_diagonal += plan
            .support()
            .iter()
            .filter(|(i, j, m)| *m > 0.0 && r.y()[*i][0] != tg.y()[*j][0])
            .count();
    }
    outcome(
        worst <= 1e-9 && off_diagonal == 0,
        format!("max |Δ| vs χ-cost LP {worst:.1e}, off-diagonal atoms {off_diagonal}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = rng_from_seed(1004);
    let mut violations = 0usize;
    let mut worst_final: f64 = 0.0;
    for t in 0..50 {
        let (r, tg) = conditional_instance(&mut rng, 2 + t % 4, 2 + (t / 4) % 5);
        let sweep = epsilon_sweep(&r, &tg, &DEFAULT_EPSILONS).unwrap();
        violations += sweep
            .windows(2)
            .filter(|w| w[1].distance > w[0].distance)
            .count();
        worst_final = worst_final.max(sweep.last().unwrap().distance);
    }
    outcome(
        violations == 0 && worst_final == 0.0,
        format!(
            "increases along ε ladder {violations}, largest distance at ε = 1e-4: {worst_final}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for family in FAMILIES {
        let cfg = Bench2dConfig {
            family: family.to_string(),
            ..Default::default()
        };
        let run = run_bench2d(&cfg).unwrap();
        let w: Vec<String> = run
            .slices
            .iter()
            .map(|s| {
                ok &= s.slab_acceptance > 0.01 && s.w1 <= 0.1;
                worst = worst.max(s.w1);
                format!("{:.3}", s.w1)
            })
            .collect();
        lines.push(format!("{family} [{}]", w.join(" ")));
    }
    outcome(ok, format!("max W1 {worst:.3}; {}", lines.join(", ")))
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in 0..3u64 {
        let mut rng = rng_from_seed(1006 + inst);
        let (dy, du, m) = (2 + inst as usize % 2, 2, 12);
        let features =
            FeatureExpansion::new(dy, du, 8, 1.3, vec![0.2; dy + du], vec![0.9; dy + du], inst)
                .unwrap()
                .with_y_features(4, 1.7, inst + 50)
                .unwrap();
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut set = |n: usize, d: usize| PointSet::new(d, (0..n * d).map(|_| gauss()).collect());
        let y = set(m, dy);
        let r = Batch::new(y.clone(), set(m, du));
        let tg = Batch::new(y, set(m, du));
        let cfg = LossConfig {
            lambda: 0.1,
            kernel: KernelMetric {
                scale: (0..dy + du).map(|k| 0.7 + 0.1 * k as f64).collect(),
                bandwidth: 1.4,
                y_projection: Some((0..du * dy).map(|k| ((k * 7) as f64).sin()).collect()),
                pair_bandwidth: Some(0.8),
            },
            monge_term: true,
        };
        let mut prng = rng_from_seed(2006 + inst);
        for _ in 0..10 {
            let mut map = LinearReadoutMap::zeros(features.clone(), du);
            for w in map.weights.iter_mut() {
                *w =
                    0.4 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut prng);
            }
            let g = grad_loss(&map, &r, &tg, &cfg).unwrap();
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..g.len() {
                let h = 1e-5;
                let mut p = map.clone();
                p.weights[k] += h;
                let lp = monge_mmd_loss(&p, &r, &tg, &cfg).unwrap().total;
                p.weights[k] -= 2.0 * h;
                let lm = monge_mmd_loss(&p, &r, &tg, &cfg).unwrap().total;
                let fd = (lp - lm) / (2.0 * h);
                num += (g[k] - fd).powi(2);
                den += fd * fd;
            }
            worst = worst.max((num / den).sqrt());
        }
    }
    outcome(
        worst <= 1e-5,
        format!("max relative error {worst:.1e} over 3 instances × 10 points"),
    )
}

fn criterion_7() -> Outcome {
    let mut cfg = DarcyConfig {
        n_train: 10_000,
        ..Default::default()
    };
    cfg.train.lambda = 0.1;
    let setup = DarcySetup::new(&cfg).unwrap();
    let ts = build_training_set(&setup, &cfg).unwrap();
    let trained = fit_monge(&ts, &cfg).unwrap();
    let frac = map_monotonicity(&setup, &cfg, &trained.map).unwrap();
    outcome(
        frac >= 0.90,
        format!(
            "monotone fraction {frac:.4} on {} pairs at λ = {}",
            cfg.n_monotonicity, cfg.train.lambda
        ),
    )
}

fn criterion_8() -> Outcome {
    // small grid: every node is a separate 3-SE test
    let grid = Grid2D::square(3).unwrap();
    let kernel = MaternKernel::new(0.5).unwrap();
    let prior = GrfModel::new(grid, kernel).unwrap();
    let cov = cov_matrix(&grid, &kernel);
    let d = grid.len();
    let batches = 100;

    // (a) Φ ≡ 0 leaves the prior invariant
    let cfg = PcnConfig {
        iterations: 100_000,
        burn_in: 1,
        adapt: false,
        thin: 1,
        seed: 1008,
        ..Default::default()
    };
    let chain = run_chain(&cfg, &|_: &[f64]| 0.0, &prior, &vec![0.0; d]).unwrap();
    let mut worst_a: f64 = 0.0;
    for node in 0..d {
        let xs: Vec<f64> = chain.states.iter().map(|s| s[node]).collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        worst_a = worst_a.max(mean(&xs).abs() / batch_means_se(&xs, batches));
        worst_a = worst_a.max((mean(&sq) - cov[(node, node)]).abs() / batch_means_se(&sq, batches));
    }

    // (b) linear observations with Gaussian noise; posterior mean from the precision form
    let sigma: f64 = 0.2;
    let a = DMatrix::from_fn(4, d, |i, j| ((1 + i * d + j) as f64 * 1.3).cos());
    let y = DVector::from_vec(vec![0.5, -0.4, 0.1, 0.8]);
    let precision = cov.clone().try_inverse().unwrap() + a.transpose() * &a / (sigma * sigma);
    let want = precision.try_inverse().unwrap() * a.transpose() * &y / (sigma * sigma);
    let phi = |u: &[f64]| {
        (&a * DVector::from_column_slice(u) - &y).norm_squared() / (2.0 * sigma * sigma)
    };
    let cfg = PcnConfig {
        iterations: 110_000,
        burn_in: 10_000,
        thin: 1,
        seed: 1308,
        ..Default::default()
    };
    let chain_b = run_chain(&cfg, &phi, &prior, &vec![0.0; d]).unwrap();
    let mut worst_b: f64 = 0.0;
    for node in 0..d {
        let xs: Vec<f64> = chain_b.states.iter().map(|st| st[node]).collect();
        worst_b = worst_b.max((mean(&xs) - want[node]).abs() / batch_means_se(&xs, batches));
    }
    outcome(
        worst_a <= 3.0 && worst_b <= 3.0,
        format!(
            "prior: max {worst_a:.2} SE over mean and variance; conjugate: max {worst_b:.2} SE (acceptance {:.3})",
            chain_b.acceptance_rate
        ),
    )
}

/// Center value of `−Δp = 1` on the unit square with zero boundary values.
fn poisson_center_series() -> f64 {
    let pi = std::f64::consts::PI;
    let mut s = 0.0;
    for m in (1..400).step_by(2) {
        for n in (1..400).step_by(2) {
            let (mf, nf) = (m as f64, n as f64);
            let sign = if ((m + n) / 2 - 1) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            s += sign * 16.0 / (pi.powi(4) * mf * nf * (mf * mf + nf * nf));
        }
    }
    s
}

fn criterion_9() -> Outcome {
    let grid = Grid2D::square(64).unwrap();
    let problem = DarcyProblem::new(grid, 0.01).unwrap();
    let p = solve_darcy(&problem, &vec![0.0; grid.len()]).unwrap();
    let center = interpolate(&grid, &p, 0.5, 0.5);
    let reference = poisson_center_series();
    let rel = (center - reference).abs() / reference;

    let small = Grid2D::square(16).unwrap();
    let model = GrfModel::new(small, MaternKernel::new(0.5).unwrap()).unwrap();
    let pb = DarcyProblem::new(small, 0.01).unwrap();
    let mut violations = 0;
    for u in sample_grf(&model, 100, 1009) {
        let p = solve_darcy(&pb, &u).unwrap();
        // f ≥ 0 with zero boundary values forces p ≥ 0
        violations += usize::from(p.iter().any(|&x| !(x >= 0.0)));
    }
    outcome(
        rel <= 0.01 && violations == 0,
        format!(
            "center {center:.6} vs series {reference:.6} (rel {rel:.1e}); {violations}/100 fields violate the maximum principle"
        ),
    )
}

fn criterion_10() -> Outcome {
    let cfg = DarcyConfig::default();
    let setup = DarcySetup::new(&cfg).unwrap();
    let ts = build_training_set(&setup, &cfg).unwrap();
    let trained = fit_monge(&ts, &cfg).unwrap();
    let (truths, ys) = heldout_data(&setup, &cfg).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (u, y)) in truths.iter().zip(&ys).enumerate() {
        let c = compare_heldout(&setup, &cfg, &trained.map, &ts.basis, u, y, k).unwrap();
        ok &= c.mean_rel_l2 <= 0.5 && c.var_pearson >= 0.5;
        parts.push(format!(
            "y{k}: rel L2 {:.3}, var pearson {:.3}",
            c.mean_rel_l2, c.var_pearson
        ));
    }
    outcome(
        ok,
        format!(
            "J = {}, λ = {}; {}",
            cfg.n_train,
            cfg.train.lambda,
            parts.join("; ")
        ),
    )
}

fn criterion_11() -> Outcome {
    let s = LinearGaussianSurrogate::new(16, 0.5, 8, 0.01).unwrap();
    let prior = GrfModel::new(s.grid, MaternKernel::new(0.5).unwrap()).unwrap();
    let truth = prior.sample_with(&mut rng_from_seed(1011));
    let y = s.observe(&truth, 1111);
    let rows = stability_trend(
        |n, y: &[f64], k| Ok::<_, String>(s.sample_truncated(n, y, k, 1211)),
        &[5, 10, 20, 40],
        &y,
        4000,
        1311,
    )
    .unwrap();
    let w: Vec<f64> = rows.iter().map(|r| r.sliced_w1).collect();
    let ok = w.windows(2).all(|p| p[1] <= p[0]);
    let text: Vec<String> = rows
        .iter()
        .map(|r| format!("{}→{}: {:.4}", r.modes, r.next_modes, r.sliced_w1))
        .collect();
    outcome(ok, text.join(", "))
}

fn main() {
    let criteria: [(u32, &str, f64, fn() -> Outcome); 11] = [
        (
            1,
            "assignment vs permutation enumeration",
            10.0,
            criterion_1,
        ),
        (2, "conditional strong duality", f64::INFINITY, criterion_2),
        (
            3,
            "conditional decomposition vs χ-cost LP",
            f64::INFINITY,
            criterion_3,
        ),
        (4, "ε-limit of perturbed plans", f64::INFINITY, criterion_4),
        (5, "2D benchmark fidelity", 600.0, criterion_5),
        (6, "Monge loss gradient", f64::INFINITY, criterion_6),
        (7, "Monge map monotonicity", f64::INFINITY, criterion_7),
        (8, "pCN correctness", 120.0, criterion_8),
        (9, "Darcy solver", f64::INFINITY, criterion_9),
        (10, "end-to-end Darcy comparison", 1800.0, criterion_10),
        (
            11,
            "discretization stability trend",
            f64::INFINITY,
            criterion_11,
        ),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failures = 0;
    for (id, name, budget, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        let passed = out.passed && secs <= budget;
        failures += usize::from(!passed);
        let limit = if budget.is_finite() {
            format!(" (limit {budget:.0}s)")
        } else {
            String::new()
        };
        println!(
            "{} criterion {id:>2} {name}: {} [{secs:.1}s{limit}]",
            if passed { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(3);
    }
}
