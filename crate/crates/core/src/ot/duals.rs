//! Dual potentials of discrete OT.
//!
//! Given a plan, [`extract_duals`] looks for potentials with
//! `φ(j) − ψ(i) ≤ c(i, j)` everywhere and equality on the plan's support. These
//! are difference constraints, solved by Bellman–Ford; a negative cycle means
//! the plan is not cyclically monotone, i.e. not optimal.

use serde::{Deserialize, Serialize};

use super::{CostMatrix, OtError, TransportPlan, FORBIDDEN};
use crate::numeric::KahanSum;

/// Mass below this is treated as off-support when extracting duals.
const SUPPORT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    /// One value per reference (row) atom.
    pub psi: Vec<f64>,
    /// One value per target (column) atom.
    pub phi: Vec<f64>,
}

impl DualPotentials {
    /// `Σ_j b_j φ(j) − Σ_i a_i ψ(i)`.
    pub fn dual_value(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = KahanSum::new();
        for (w, p) in b.iter().zip(&self.phi) {
            s.add(w * p);
        }
        for (w, p) in a.iter().zip(&self.psi) {
            s.add(-w * p);
        }
        s.value()
    }

    /// Largest `φ(j) − ψ(i) − c(i, j)` over finite entries (≤ 0 when feasible).
    pub fn max_infeasibility(&self, c: &CostMatrix) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..c.rows() {
            for j in 0..c.cols() {
                let cij = c.get(i, j);
                if cij != FORBIDDEN {
                    worst = worst.max(self.phi[j] - self.psi[i] - cij);
                }
            }
        }
        worst
    }

    /// Largest `|φ(j) − ψ(i) − c(i, j)|` over the support of `plan`.
    pub fn slackness_violation(&self, c: &CostMatrix, plan: &TransportPlan) -> f64 {
        plan.support()
            .into_iter()
            .map(|(i, j, _)| (self.phi[j] - self.psi[i] - c.get(i, j)).abs())
            .fold(0.0, f64::max)
    }
}

/// Potentials certifying `plan` optimal for `c`.
///
/// Errors with [`OtError::NotOptimal`] when no such potentials exist or the
/// recovered duality gap exceeds `1e-8 · (1 + |primal|)`.
pub fn extract_duals(c: &CostMatrix, plan: &TransportPlan) -> Result<DualPotentials, OtError> {
    let (n, m) = (c.rows(), c.cols());
    if plan.rows() != n || plan.cols() != m {
        return Err(OtError::Dimension(format!(
            "plan is {}x{}, cost is {n}x{m}",
            plan.rows(),
            plan.cols()
        )));
    }
    let primal = plan.cost(c);
    if !primal.is_finite() {
        return Err(OtError::NotOptimal { gap: f64::INFINITY });
    }
    // nodes: psi_i = i, phi_j = n + j; edge (x -> y, w) encodes d(y) <= d(x) + w
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let cij = c.get(i, j);
            if cij == FORBIDDEN {
                continue;
            }
            edges.push((i, n + j, cij));
            if plan.mass(i, j) > SUPPORT_TOL {
                edges.push((n + j, i, -cij));
            }
        }
    }
    let scale = 1.0 + c.max_abs_finite();
    let eps = 1e-13 * scale;
    let nodes = n + m;
    let mut d = vec![0.0_f64; nodes];
    let mut converged = false;
    for _ in 0..=nodes {
        let mut changed = false;
        for &(x, y, w) in &edges {
            if d[x] + w < d[y] - eps {
                d[y] = d[x] + w;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(OtError::NotOptimal { gap: f64::NAN });
    }
    let duals = DualPotentials {
        psi: d[..n].to_vec(),
        phi: d[n..].to_vec(),
    };
    let gap = primal - duals.dual_value(plan.row_weights(), plan.col_weights());
    if gap.abs() > 1e-8 * (1.0 + primal.abs()) {
        return Err(OtError::NotOptimal { gap });
    }
    Ok(duals)
}
