//! Entropic OT by log-domain Sinkhorn iterations.

use super::{check_weights, CostMatrix, OtError, TransportPlan};

#[derive(Debug, Clone, Copy)]
pub struct SinkhornOptions {
    pub max_iters: usize,
    /// Stop once the L1 marginal violation drops below this.
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub plan: TransportPlan,
    pub iterations: usize,
    /// L1 violation of both marginals of the returned plan.
    pub marginal_violation: f64,
    /// `false` when `max_iters` was reached first; the plan is still returned.
    pub converged: bool,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + xs.map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Entropy-regularized plan `P_ij = exp((f_i + g_j − c_ij)/reg)` with marginals
/// `a`, `b`. The cost matrix must be finite.
pub fn solve_sinkhorn(
    c: &CostMatrix,
    a: &[f64],
    b: &[f64],
    reg: f64,
    opts: SinkhornOptions,
) -> Result<SinkhornOutput, OtError> {
    let (n, m) = (c.rows(), c.cols());
    if !(reg > 0.0) {
        return Err(OtError::InvalidParameter(format!(
            "entropic regularization must be positive, got {reg}"
        )));
    }
    if c.data().iter().any(|x| !x.is_finite()) {
        return Err(OtError::InvalidParameter(
            "sinkhorn needs a finite cost matrix".into(),
        ));
    }
    check_weights(a, n, "row weights")?;
    check_weights(b, m, "column weights")?;
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let plan_of = |f: &[f64], g: &[f64], reg: f64| -> Vec<f64> {
        let mut p = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                p[i * m + j] = ((f[i] + g[j] - c.get(i, j)) / reg).exp();
            }
        }
        p
    };
    let violation = |p: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..n {
            v += (p[i * m..(i + 1) * m].iter().sum::<f64>() - a[i]).abs();
        }
        for j in 0..m {
            v += ((0..n).map(|i| p[i * m + j]).sum::<f64>() - b[j]).abs();
        }
        v
    };
    // anneal the regularization down to `reg` with warm-started potentials;
    // at small `reg` a cold start stalls for a very long time
    let mut schedule = Vec::new();
    let mut r = c.max_abs_finite().max(reg);
    while r > reg {
        schedule.push(r);
        r /= 4.0;
    }
    schedule.push(reg);
    let mut iterations = 0;
    let mut converged = false;
    let last = schedule.len() - 1;
    for (stage, &r) in schedule.iter().enumerate() {
        let stage_tol = if stage == last {
            opts.tol
        } else {
            opts.tol.max(1e-3)
        };
        while iterations < opts.max_iters {
            iterations += 1;
            for i in 0..n {
                f[i] = if a[i] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    r * log_a[i] - r * log_sum_exp((0..m).map(|j| (g[j] - c.get(i, j)) / r))
                };
            }
            for j in 0..m {
                g[j] = if b[j] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    r * log_b[j] - r * log_sum_exp((0..n).map(|i| (f[i] - c.get(i, j)) / r))
                };
            }
            if iterations % 10 == 0 || iterations == opts.max_iters {
                let p = plan_of(&f, &g, r);
                if violation(&p) <= stage_tol {
                    converged = stage == last;
                    break;
                }
            }
        }
    }
    let p = plan_of(&f, &g, reg);
    let marginal_violation = violation(&p);
    converged |= marginal_violation <= opts.tol;
    Ok(SinkhornOutput {
        plan: TransportPlan::matrix(n, m, p, a.to_vec(), b.to_vec()),
        iterations,
        marginal_violation,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{solve_lp, uniform};
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn one_by_one_is_trivial() {
        let c = CostMatrix::from_rows(&[vec![2.5]]).unwrap();
        for reg in [1e-3, 1.0, 10.0] {
            let s = solve_sinkhorn(&c, &[1.0], &[1.0], reg, Default::default()).unwrap();
            assert!((s.plan.to_dense()[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_reg_approaches_lp() {
        let mut rng = rng_from_seed(13);
        let c = CostMatrix::from_fn(4, 4, |_, _| rng.random::<f64>()).unwrap();
        let lp = solve_lp(&c, &uniform(4), &uniform(4)).unwrap();
        let s = solve_sinkhorn(&c, &uniform(4), &uniform(4), 1e-3, Default::default()).unwrap();
        assert!(s.converged);
        assert!(s.marginal_violation <= 1e-9);
        let cost = s.plan.cost(&c);
        assert!(
            (cost - lp.cost).abs() <= 0.02 * lp.cost,
            "{cost} vs {}",
            lp.cost
        );
    }

    #[test]
    fn gap_shrinks_with_reg() {
        let mut rng = rng_from_seed(31);
        for _ in 0..5 {
            let c = CostMatrix::from_fn(4, 4, |_, _| rng.random::<f64>()).unwrap();
            let lp = solve_lp(&c, &uniform(4), &uniform(4)).unwrap().cost;
            let gaps: Vec<f64> = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
                .iter()
                .map(|&r| {
                    let s = solve_sinkhorn(&c, &uniform(4), &uniform(4), r, Default::default())
                        .unwrap();
                    s.plan.cost(&c) - lp
                })
                .collect();
            for w in gaps.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{gaps:?}");
            }
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut rng = rng_from_seed(1);
        let c = CostMatrix::from_fn(6, 6, |_, _| rng.random::<f64>()).unwrap();
        let s = solve_sinkhorn(
            &c,
            &uniform(6),
            &uniform(6),
            1e-4,
            SinkhornOptions {
                max_iters: 2,
                tol: 1e-14,
            },
        )
        .unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 2);
        assert!(s.marginal_violation > 0.0);
    }

    #[test]
    fn rejects_bad_reg() {
        let c = CostMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(solve_sinkhorn(&c, &[1.0], &[1.0], 0.0, Default::default()).is_err());
    }
}
