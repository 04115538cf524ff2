//! Discrete balanced optimal transport.
//!
//! - [`solve_assignment`]: shortest-augmenting-path assignment for square
//!   problems with uniform marginals; [`solve_assignment_sparse`] is the same
//!   algorithm on a candidate graph with a global optimality check, for large
//!   geometric instances.
//! - [`solve_lp`]: network simplex on the bipartite transportation graph, for
//!   arbitrary marginals.
//! - [`solve_sinkhorn`]: log-domain entropic approximation.
//! - [`extract_duals`]: potentials certifying optimality of a given plan.
//! - [`brute_force_ot`]: exhaustive oracle for tiny instances.
//!
//! Forbidden pairs are encoded with the [`FORBIDDEN`] sentinel (`+∞`) and never
//! carry mass.

mod assignment;
mod brute;
mod duals;
mod simplex;
mod sinkhorn;

pub use assignment::{
    solve_assignment, solve_assignment_sparse, solve_assignment_sparse_warm, Assignment,
    SparseAssignmentOptions,
};
pub use brute::brute_force_ot;
pub use duals::{extract_duals, DualPotentials};
pub use simplex::{solve_lp, LpSolution};
pub use sinkhorn::{solve_sinkhorn, SinkhornOptions, SinkhornOutput};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::KahanSum;

/// Cost of a pair that may not carry mass.
pub const FORBIDDEN: f64 = f64::INFINITY;

/// Tolerance on marginal sums of returned plans.
pub const MARGINAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum OtError {
    #[error("cost matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("no feasible plan avoids the forbidden entries")]
    Infeasible,
    #[error("invalid cost entry {value} at ({row}, {col})")]
    InvalidCost { row: usize, col: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid marginal weights: {0}")]
    InvalidWeights(String),
    #[error("plan is not optimal (duality gap {gap:e})")]
    NotOptimal { gap: f64 },
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Dense `rows × cols` cost matrix, row-major. Entries are finite or [`FORBIDDEN`].
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, OtError> {
        if data.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(OtError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        for (k, &value) in data.iter().enumerate() {
            if value.is_nan() || value == f64::NEG_INFINITY {
                return Err(OtError::InvalidCost {
                    row: k / cols,
                    col: k % cols,
                    value,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, OtError> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// From nested rows, convenient for small literals.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OtError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(OtError::Dimension("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn is_forbidden(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == FORBIDDEN
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Largest absolute finite entry (0 when everything is forbidden).
    pub fn max_abs_finite(&self) -> f64 {
        self.data
            .iter()
            .filter(|c| c.is_finite())
            .fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|c| if c.is_finite() { c * k } else { *c })
                .collect(),
        }
    }

    /// `c'(i, j) = c(perm[i], perm[j])`, for square matrices.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(self.rows, self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self.get(perm[i], perm[j]))
            .expect("same entries")
    }
}

/// Storage form of a transport plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum PlanForm {
    /// Row `i` sends all its mass to column `sigma[i]` (0-based).
    Permutation { sigma: Vec<usize> },
    /// Dense row-major coupling matrix.
    Matrix {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
}

/// A coupling between two discrete measures.
///
/// Serializes as `{"form":"permutation","sigma":[..]}` or
/// `{"form":"matrix","rows":n,"cols":m,"data":[..]}`; marginals are implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PlanForm", into = "PlanForm")]
pub struct TransportPlan {
    form: PlanForm,
    row_weights: Vec<f64>,
    col_weights: Vec<f64>,
}

impl From<PlanForm> for TransportPlan {
    fn from(form: PlanForm) -> Self {
        match form {
            PlanForm::Permutation { sigma } => TransportPlan::permutation(sigma),
            PlanForm::Matrix { rows, cols, data } => {
                let mut rw = vec![0.0; rows];
                let mut cw = vec![0.0; cols];
                for i in 0..rows {
                    for j in 0..cols {
                        rw[i] += data[i * cols + j];
                        cw[j] += data[i * cols + j];
                    }
                }
                TransportPlan {
                    form: PlanForm::Matrix { rows, cols, data },
                    row_weights: rw,
                    col_weights: cw,
                }
            }
        }
    }
}

impl From<TransportPlan> for PlanForm {
    fn from(p: TransportPlan) -> Self {
        p.form
    }
}

impl TransportPlan {
    /// Permutation plan with uniform marginals `1/n`.
    pub fn permutation(sigma: Vec<usize>) -> Self {
        let n = sigma.len();
        let w = vec![1.0 / n as f64; n];
        Self {
            form: PlanForm::Permutation { sigma },
            row_weights: w.clone(),
            col_weights: w,
        }
    }

    pub fn matrix(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        row_weights: Vec<f64>,
        col_weights: Vec<f64>,
    ) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self {
            form: PlanForm::Matrix { rows, cols, data },
            row_weights,
            col_weights,
        }
    }

    pub fn form(&self) -> &PlanForm {
        &self.form
    }

    pub fn rows(&self) -> usize {
        self.row_weights.len()
    }

    pub fn cols(&self) -> usize {
        self.col_weights.len()
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    pub fn col_weights(&self) -> &[f64] {
        &self.col_weights
    }

    pub fn as_permutation(&self) -> Option<&[usize]> {
        match &self.form {
            PlanForm::Permutation { sigma } => Some(sigma),
            PlanForm::Matrix { .. } => None,
        }
    }

    /// Mass on pair `(i, j)`.
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        match &self.form {
            PlanForm::Permutation { sigma } => {
                if sigma[i] == j {
                    1.0 / sigma.len() as f64
                } else {
                    0.0
                }
            }
            PlanForm::Matrix { cols, data, .. } => data[i * cols + j],
        }
    }

    /// Nonzero entries `(i, j, mass)`, row-major.
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        match &self.form {
            PlanForm::Permutation { sigma } => {
                let w = 1.0 / sigma.len() as f64;
                sigma.iter().enumerate().map(|(i, &j)| (i, j, w)).collect()
            }
            PlanForm::Matrix { cols, data, .. } => data
                .iter()
                .enumerate()
                .filter(|(_, m)| **m > 0.0)
                .map(|(k, m)| (k / cols, k % cols, *m))
                .collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match &self.form {
            PlanForm::Permutation { sigma } => {
                let n = sigma.len();
                let mut d = vec![0.0; n * n];
                for (i, &j) in sigma.iter().enumerate() {
                    d[i * n + j] = 1.0 / n as f64;
                }
                d
            }
            PlanForm::Matrix { data, .. } => data.clone(),
        }
    }

    /// `Σ π_ij c_ij` with compensated summation. Mass on a forbidden entry gives `+∞`.
    pub fn cost(&self, c: &CostMatrix) -> f64 {
        match &self.form {
            PlanForm::Permutation { sigma } => {
                let s: KahanSum = sigma
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| c.get(i, j))
                    .collect();
                s.value() / sigma.len() as f64
            }
            PlanForm::Matrix { .. } => self
                .support()
                .into_iter()
                .map(|(i, j, m)| m * c.get(i, j))
                .collect::<KahanSum>()
                .value(),
        }
    }

    /// Largest absolute deviation of row/column sums from the marginals.
    pub fn marginal_violation(&self) -> f64 {
        match &self.form {
            PlanForm::Permutation { sigma } => {
                let mut seen = vec![false; sigma.len()];
                for &j in sigma {
                    if j >= sigma.len() || seen[j] {
                        return f64::INFINITY;
                    }
                    seen[j] = true;
                }
                0.0
            }
            PlanForm::Matrix { rows, cols, data } => {
                let mut worst = 0.0_f64;
                for i in 0..*rows {
                    let s: f64 = data[i * cols..(i + 1) * cols].iter().sum();
                    worst = worst.max((s - self.row_weights[i]).abs());
                }
                for j in 0..*cols {
                    let s: f64 = (0..*rows).map(|i| data[i * cols + j]).sum();
                    worst = worst.max((s - self.col_weights[j]).abs());
                }
                worst
            }
        }
    }

    /// Whether any mass sits on a forbidden entry.
    pub fn touches_forbidden(&self, c: &CostMatrix) -> bool {
        self.support().iter().any(|&(i, j, _)| c.is_forbidden(i, j))
    }
}

pub(crate) fn check_weights(w: &[f64], n: usize, name: &str) -> Result<(), OtError> {
    if w.len() != n {
        return Err(OtError::InvalidWeights(format!(
            "{name} has {} entries, expected {n}",
            w.len()
        )));
    }
    if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(OtError::InvalidWeights(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(OtError::InvalidWeights(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// `n` equal weights summing to one.
pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_json_schema() {
        let p = TransportPlan::permutation(vec![1, 0]);
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"form":"permutation","sigma":[1,0]}"#
        );
        let back: TransportPlan =
            serde_json::from_str(r#"{"form":"permutation","sigma":[1,0]}"#).unwrap();
        assert_eq!(back, p);

        let m = TransportPlan::matrix(2, 1, vec![0.5, 0.5], vec![0.5, 0.5], vec![1.0]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"form":"matrix","rows":2,"cols":1,"data":[0.5,0.5]}"#);
        let back: TransportPlan = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn cost_matrix_rejects_nan() {
        assert!(matches!(
            CostMatrix::new(1, 2, vec![0.0, f64::NAN]),
            Err(OtError::InvalidCost { row: 0, col: 1, .. })
        ));
        assert!(CostMatrix::new(1, 2, vec![0.0, FORBIDDEN]).is_ok());
    }

    #[test]
    fn permutation_marginals() {
        assert_eq!(
            TransportPlan::permutation(vec![2, 0, 1]).marginal_violation(),
            0.0
        );
        assert!(TransportPlan::permutation(vec![0, 0, 1])
            .marginal_violation()
            .is_infinite());
    }
}
