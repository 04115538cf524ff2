//! Conditional (block-triangular) optimal transport on discrete measures.
//!
//! A reference measure lives on `Y × V` with atoms `(z_i, v_i)`, a target on
//! `Y × U` with atoms `(y_j, u_j)`. Admissible couplings keep the `y`
//! coordinate fixed: mass only flows between atoms with `z_i = y_j`. Such a
//! problem splits into one ordinary OT problem per `y`-atom ("slice"), and it is
//! the `ε → 0` limit of unconstrained OT under
//! `c_ε = ‖z − y‖^p + ε‖v − u‖^q`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kdtree::KdTree;
use crate::measures::{JointMeasure, MeasureError, Point};
use crate::numeric::{dist_pow, sq_dist, KahanSum};
use crate::ot::{
    extract_duals, solve_assignment, solve_assignment_sparse, solve_assignment_sparse_warm,
    solve_lp, CostMatrix, DualPotentials, OtError, SparseAssignmentOptions, TransportPlan,
    FORBIDDEN,
};

/// Cost on the non-conditioning coordinates, `c(v, u)`.
pub type VuCost<'a> = &'a (dyn Fn(&[f64], &[f64]) -> f64 + Sync);

/// `‖v − u‖²`.
pub fn quadratic_cost(v: &[f64], u: &[f64]) -> f64 {
    sq_dist(v, u)
}

/// Default `ε` ladder for sweeps.
pub const DEFAULT_EPSILONS: [f64; 6] = [1.0, 1e-1, 1e-2, 5e-3, 1e-3, 1e-4];

/// Problems up to this size use the dense Hungarian solver in [`solve_perturbed`].
pub const DENSE_ASSIGNMENT_LIMIT: usize = 600;

const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConditionalError {
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("invalid perturbed cost: {0}")]
    InvalidSpec(String),
    #[error("reference and target y-marginals differ: {0}")]
    MarginalMismatch(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no atoms in the requested y-slice")]
    EmptySlice,
    #[error("{0}")]
    Unsupported(String),
}

type Result<T> = std::result::Result<T, ConditionalError>;

/// `c_ε(z, v; y, u) = ‖z − y‖^p + ε‖v − u‖^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedCostSpec {
    pub epsilon: f64,
    pub y_exponent: f64,
    pub u_exponent: f64,
}

impl PerturbedCostSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        Self::with_exponents(epsilon, 2.0, 2.0)
    }

    pub fn with_exponents(epsilon: f64, y_exponent: f64, u_exponent: f64) -> Result<Self> {
        let s = Self {
            epsilon,
            y_exponent,
            u_exponent,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ConditionalError::InvalidSpec(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        for (name, p) in [
            ("y_exponent", self.y_exponent),
            ("u_exponent", self.u_exponent),
        ] {
            if !(p > 1.0 && p.is_finite()) {
                return Err(ConditionalError::InvalidSpec(format!(
                    "{name} must lie in (1, inf), got {p}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, z: &[f64], v: &[f64], y: &[f64], u: &[f64]) -> f64 {
        dist_pow(z, y, self.y_exponent) + self.epsilon * dist_pow(v, u, self.u_exponent)
    }
}

fn check_dims(reference: &JointMeasure, target: &JointMeasure) -> Result<()> {
    if reference.is_empty() || target.is_empty() {
        return Err(MeasureError::Empty.into());
    }
    if reference.y_dim() != target.y_dim() {
        return Err(ConditionalError::Dimension(format!(
            "y is {}-dimensional in the reference, {}-dimensional in the target",
            reference.y_dim(),
            target.y_dim()
        )));
    }
    if reference.x_dim() != target.x_dim() {
        return Err(ConditionalError::Dimension(format!(
            "v is {}-dimensional, u is {}-dimensional",
            reference.x_dim(),
            target.x_dim()
        )));
    }
    Ok(())
}

pub fn build_perturbed_cost(
    reference: &JointMeasure,
    target: &JointMeasure,
    spec: &PerturbedCostSpec,
) -> Result<CostMatrix> {
    spec.validate()?;
    check_dims(reference, target)?;
    let (zs, vs) = (reference.y(), reference.x());
    let (ys, us) = (target.y(), target.x());
    Ok(CostMatrix::from_fn(
        reference.len(),
        target.len(),
        |i, j| spec.eval(&zs[i], &vs[i], &ys[j], &us[j]),
    )?)
}

/// Atoms sharing one `y` value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceGroup {
    pub y: Point,
    pub ref_indices: Vec<usize>,
    pub tgt_indices: Vec<usize>,
}

fn atom_key(p: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same atom
    p.iter()
        .map(|&x| if x == 0.0 { 0 } else { x.to_bits() })
        .collect()
}

/// Groups both measures by exact `y` equality, in order of first appearance in
/// the reference, and checks that every group carries the same mass on both
/// sides.
pub fn group_by_y(reference: &JointMeasure, target: &JointMeasure) -> Result<Vec<SliceGroup>> {
    check_dims(reference, target)?;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<SliceGroup> = Vec::new();
    for (i, z) in reference.y().iter().enumerate() {
        let g = *index.entry(atom_key(z)).or_insert_with(|| {
            groups.push(SliceGroup {
                y: z.clone(),
                ref_indices: Vec::new(),
                tgt_indices: Vec::new(),
            });
            groups.len() - 1
        });
        groups[g].ref_indices.push(i);
    }
    for (j, y) in target.y().iter().enumerate() {
        match index.get(&atom_key(y)) {
            Some(&g) => groups[g].tgt_indices.push(j),
            None => {
                return Err(ConditionalError::MarginalMismatch(format!(
                    "target atom {j} has a y-value absent from the reference"
                )))
            }
        }
    }
    for (g, grp) in groups.iter().enumerate() {
        let ma: f64 = grp
            .ref_indices
            .iter()
            .map(|&i| reference.weights()[i])
            .collect::<KahanSum>()
            .value();
        let mb: f64 = grp
            .tgt_indices
            .iter()
            .map(|&j| target.weights()[j])
            .collect::<KahanSum>()
            .value();
        if (ma - mb).abs() > MASS_TOL {
            return Err(ConditionalError::MarginalMismatch(format!(
                "slice {g} has mass {ma} in the reference and {mb} in the target"
            )));
        }
    }
    Ok(groups)
}

/// `c(v_i, u_j)` where `z_i = y_j`, forbidden elsewhere.
pub fn build_chi_cost(
    reference: &JointMeasure,
    target: &JointMeasure,
    vu_cost: VuCost,
) -> Result<CostMatrix> {
    group_by_y(reference, target)?;
    let (zs, vs) = (reference.y(), reference.x());
    let (ys, us) = (target.y(), target.x());
    Ok(CostMatrix::from_fn(
        reference.len(),
        target.len(),
        |i, j| {
            if zs[i].same_atom(&ys[j]) {
                vu_cost(&vs[i], &us[j])
            } else {
                FORBIDDEN
            }
        },
    )?)
}

/// Per-slice solution of the conditional Kantorovich problem.
///
/// Slice plans are couplings of the slice marginals renormalized to mass one;
/// `masses[g]` is the slice's share of the total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDecomposition {
    pub groups: Vec<SliceGroup>,
    pub slice_plans: Vec<TransportPlan>,
    pub slice_costs: Vec<f64>,
    pub masses: Vec<f64>,
}

impl SliceDecomposition {
    pub fn total_cost(&self) -> f64 {
        self.masses
            .iter()
            .zip(&self.slice_costs)
            .map(|(m, c)| m * c)
            .collect::<KahanSum>()
            .value()
    }

    /// `ref index → tgt index` when every slice plan is a permutation.
    pub fn pairing(&self, n_ref: usize) -> Option<Vec<usize>> {
        let mut out = vec![usize::MAX; n_ref];
        for (g, p) in self.groups.iter().zip(&self.slice_plans) {
            let sigma = p.as_permutation()?;
            for (a, &b) in sigma.iter().enumerate() {
                out[g.ref_indices[a]] = g.tgt_indices[b];
            }
        }
        Some(out)
    }

    /// The coupling on the full index sets.
    pub fn global_plan(&self, reference: &JointMeasure, target: &JointMeasure) -> TransportPlan {
        let (n, m) = (reference.len(), target.len());
        if n == m && reference.is_uniform() && target.is_uniform() {
            if let Some(sigma) = self.pairing(n) {
                return TransportPlan::permutation(sigma);
            }
        }
        let mut data = vec![0.0; n * m];
        for ((g, p), &mass) in self.groups.iter().zip(&self.slice_plans).zip(&self.masses) {
            for (a, b, w) in p.support() {
                data[g.ref_indices[a] * m + g.tgt_indices[b]] = mass * w;
            }
        }
        TransportPlan::matrix(
            n,
            m,
            data,
            reference.weights().to_vec(),
            target.weights().to_vec(),
        )
    }
}

struct Slice {
    cost: CostMatrix,
    a: Vec<f64>,
    b: Vec<f64>,
    mass: f64,
    uniform: bool,
}

fn slice_problem(
    reference: &JointMeasure,
    target: &JointMeasure,
    g: &SliceGroup,
    vu_cost: VuCost,
) -> Result<Slice> {
    let (vs, us) = (reference.x(), target.x());
    let cost = CostMatrix::from_fn(g.ref_indices.len(), g.tgt_indices.len(), |a, b| {
        vu_cost(&vs[g.ref_indices[a]], &us[g.tgt_indices[b]])
    })?;
    let wa: Vec<f64> = g
        .ref_indices
        .iter()
        .map(|&i| reference.weights()[i])
        .collect();
    let wb: Vec<f64> = g.tgt_indices.iter().map(|&j| target.weights()[j]).collect();
    let mass = wa.iter().copied().collect::<KahanSum>().value();
    let mb = wb.iter().copied().collect::<KahanSum>().value();
    let uniform = reference.is_uniform() && target.is_uniform() && wa.len() == wb.len();
    let a = wa.iter().map(|w| w / mass).collect();
    let b = wb.iter().map(|w| w / mb).collect();
    Ok(Slice {
        cost,
        a,
        b,
        mass,
        uniform,
    })
}

fn solve_slice(s: &Slice) -> Result<(TransportPlan, f64)> {
    if s.uniform {
        let a = solve_assignment(&s.cost)?;
        Ok((a.plan(), a.cost))
    } else {
        let lp = solve_lp(&s.cost, &s.a, &s.b)?;
        Ok((lp.plan, lp.cost))
    }
}

/// Solves one OT problem per `y`-slice. Uniform equal-size slices go through the
/// assignment solver (permutation plans), others through the LP.
pub fn solve_conditional_kantorovich(
    reference: &JointMeasure,
    target: &JointMeasure,
    vu_cost: VuCost,
) -> Result<(SliceDecomposition, f64)> {
    let groups = group_by_y(reference, target)?;
    let solved: Vec<(TransportPlan, f64, f64)> = groups
        .par_iter()
        .map(|g| {
            let s = slice_problem(reference, target, g, vu_cost)?;
            let (plan, cost) = solve_slice(&s)?;
            Ok((plan, cost, s.mass))
        })
        .collect::<Result<_>>()?;
    let mut dec = SliceDecomposition {
        groups,
        slice_plans: Vec::with_capacity(solved.len()),
        slice_costs: Vec::with_capacity(solved.len()),
        masses: Vec::with_capacity(solved.len()),
    };
    for (p, c, m) in solved {
        dec.slice_plans.push(p);
        dec.slice_costs.push(c);
        dec.masses.push(m);
    }
    let total = dec.total_cost();
    Ok((dec, total))
}

/// Unconstrained OT under `c_ε` between equal-size uniform measures.
///
/// Small problems build the dense cost matrix. Larger ones run the sparse
/// assignment solver with nearest neighbours in the scaled space
/// `(y, ε^{1/q} u)` as candidate edges; its global optimality check makes the
/// result exact regardless of the candidates.
pub fn solve_perturbed(
    reference: &JointMeasure,
    target: &JointMeasure,
    spec: &PerturbedCostSpec,
) -> Result<(TransportPlan, f64)> {
    spec.validate()?;
    check_dims(reference, target)?;
    let n = reference.len();
    if target.len() != n || !reference.is_uniform() || !target.is_uniform() {
        return Err(ConditionalError::Unsupported(
            "perturbed OT needs two uniform measures of equal size".into(),
        ));
    }
    if n <= DENSE_ASSIGNMENT_LIMIT {
        let c = build_perturbed_cost(reference, target, spec)?;
        let a = solve_assignment(&c)?;
        return Ok((a.plan(), a.cost));
    }
    let (dy, dx) = (reference.y_dim(), reference.x_dim());
    let d = dy + dx;
    let scale = spec.epsilon.powf(1.0 / spec.u_exponent);
    let flat = |m: &JointMeasure| -> Vec<f64> {
        let mut out = Vec::with_capacity(m.len() * d);
        for (y, x) in m.y().iter().zip(m.x()) {
            out.extend_from_slice(y);
            out.extend(x.iter().map(|c| c * scale));
        }
        out
    };
    let ref_flat = flat(reference);
    let tgt_flat = flat(target);
    if spec.y_exponent == 2.0 && spec.u_exponent == 2.0 {
        // c_ε is the squared distance between the scaled points
        let a = multiscale_quadratic(&ref_flat, &tgt_flat, d)?;
        return Ok((a.plan(), a.cost));
    }
    let tree = KdTree::new(tgt_flat.clone(), d);
    let k = SPARSE_CANDIDATES.min(n);
    let candidates: Vec<Vec<usize>> = ref_flat
        .par_chunks_exact(d)
        .map(|q| tree.knn(q, k).into_iter().map(|(j, _)| j).collect())
        .collect();
    let raw_r: Vec<f64> = reference
        .y()
        .iter()
        .zip(reference.x())
        .flat_map(|(y, x)| y.iter().chain(x.iter()).copied())
        .collect();
    let raw_t: Vec<f64> = target
        .y()
        .iter()
        .zip(target.x())
        .flat_map(|(y, x)| y.iter().chain(x.iter()).copied())
        .collect();
    let spec = *spec;
    let cost = move |i: usize, j: usize| {
        let (r, t) = (&raw_r[i * d..(i + 1) * d], &raw_t[j * d..(j + 1) * d]);
        spec.eval(&r[..dy], &r[dy..], &t[..dy], &t[dy..])
    };
    let a = solve_assignment_sparse(n, candidates, cost, SparseAssignmentOptions::default())?;
    Ok((a.plan(), a.cost))
}

const SPARSE_CANDIDATES: usize = 12;
const LIFTED_CANDIDATES: usize = 48;
const COARSENING: usize = 4;

/// Points `(p_i, √(top − w_i))`: squared distance to `(q, 0)` is
/// `‖p_i − q‖² − w_i + top`, so nearest neighbours minimize `‖p_i − q‖² − w_i`.
fn lifted_tree(points: &[f64], d: usize, w: &[f64]) -> KdTree {
    let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut coords = Vec::with_capacity(w.len() * (d + 1));
    for (p, wi) in points.chunks_exact(d).zip(w) {
        coords.extend_from_slice(p);
        coords.push((top - wi).max(0.0).sqrt());
    }
    KdTree::new(coords, d + 1)
}

fn lifted_query(q: &[f64]) -> Vec<f64> {
    let mut out = q.to_vec();
    out.push(0.0);
    out
}

/// Assignment for `c(i, j) = ‖p_i − q_j‖²`. A strided quarter of the problem is
/// solved first; its row potentials, c-transformed onto all columns, seed the
/// column potentials, and each row's candidates are its columns of smallest
/// reduced cost. The sparse solver then certifies optimality on all pairs.
fn multiscale_quadratic(p: &[f64], q: &[f64], d: usize) -> Result<crate::ot::Assignment> {
    let n = p.len() / d;
    let cost = |i: usize, j: usize| sq_dist(&p[i * d..(i + 1) * d], &q[j * d..(j + 1) * d]);
    if n <= DENSE_ASSIGNMENT_LIMIT {
        return Ok(solve_assignment(&CostMatrix::from_fn(n, n, cost)?)?);
    }
    let pick = |x: &[f64]| -> Vec<f64> {
        x.chunks_exact(d)
            .step_by(COARSENING)
            .flatten()
            .copied()
            .collect()
    };
    let (pc, qc) = (pick(p), pick(q));
    let coarse = multiscale_quadratic(&pc, &qc, d)?;
    // v_j = min_i c(i, j) − u_i over the coarse rows
    let rows = lifted_tree(&pc, d, &coarse.row_potentials);
    let v0: Vec<f64> = q
        .par_chunks_exact(d)
        .map(|qj| {
            let (i, _) = rows.knn(&lifted_query(qj), 1)[0];
            sq_dist(&pc[i * d..(i + 1) * d], qj) - coarse.row_potentials[i]
        })
        .collect();
    let cols = lifted_tree(q, d, &v0);
    let plain = KdTree::new(q.to_vec(), d);
    let k = LIFTED_CANDIDATES.min(n);
    let candidates: Vec<Vec<usize>> = p
        .par_chunks_exact(d)
        .map(|pi| {
            let mut c: Vec<usize> = cols
                .knn(&lifted_query(pi), k)
                .into_iter()
                .map(|(j, _)| j)
                .collect();
            c.extend(plain.knn(pi, k / 3).into_iter().map(|(j, _)| j));
            c
        })
        .collect();
    Ok(solve_assignment_sparse_warm(
        n,
        candidates,
        cost,
        v0,
        SparseAssignmentOptions::default(),
    )?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub plan: TransportPlan,
    /// Weighted L² distance between the maps `i ↦ (y, u)` induced by the
    /// ε-plan and by the conditional solution.
    pub distance: f64,
}

/// Solves the perturbed problem for each `ε` and measures how far its induced
/// map is from the conditional optimum (quadratic costs throughout).
pub fn epsilon_sweep(
    reference: &JointMeasure,
    target: &JointMeasure,
    eps_list: &[f64],
) -> Result<Vec<SweepEntry>> {
    let (dec, _) = solve_conditional_kantorovich(reference, target, &quadratic_cost)?;
    let n = reference.len();
    let tau = dec.pairing(n).ok_or_else(|| {
        ConditionalError::Unsupported("epsilon sweep needs uniform equal-size measures".into())
    })?;
    let joint = |j: usize| target.y()[j].concat(&target.x()[j]);
    eps_list
        .par_iter()
        .map(|&epsilon| {
            let (plan, _) = solve_perturbed(reference, target, &PerturbedCostSpec::new(epsilon)?)?;
            let sigma = plan
                .as_permutation()
                .expect("assignment plans are permutations");
            let d2: KahanSum = (0..n)
                .map(|i| {
                    if sigma[i] == tau[i] {
                        0.0
                    } else {
                        reference.weights()[i] * sq_dist(&joint(sigma[i]), &joint(tau[i]))
                    }
                })
                .collect();
            Ok(SweepEntry {
                epsilon,
                plan,
                distance: d2.value().sqrt(),
            })
        })
        .collect()
}

fn slice_indices(m: &JointMeasure, y: &Point) -> Vec<usize> {
    (0..m.len()).filter(|&i| m.y()[i].same_atom(y)).collect()
}

/// `ψ^c(u) = min_v ψ(v) + c(v, u)` over the reference atoms in the slice of
/// `y_atom`. `psi` is indexed by reference atom; the result lists the target
/// atoms of the slice in index order.
pub fn partial_c_transform_psi(
    reference: &JointMeasure,
    target: &JointMeasure,
    psi: &[f64],
    vu_cost: VuCost,
    y_atom: &Point,
) -> Result<Vec<(usize, f64)>> {
    let ri = slice_indices(reference, y_atom);
    if ri.is_empty() {
        return Err(ConditionalError::EmptySlice);
    }
    Ok(slice_indices(target, y_atom)
        .into_iter()
        .map(|j| {
            let u = &target.x()[j];
            let val = ri
                .iter()
                .map(|&i| psi[i] + vu_cost(&reference.x()[i], u))
                .fold(f64::INFINITY, f64::min);
            (j, val)
        })
        .collect())
}

/// `φ^c(v) = max_u φ(u) − c(v, u)` over the target atoms in the slice of
/// `y_atom`. `phi` is indexed by target atom; the result lists the reference
/// atoms of the slice in index order.
pub fn partial_c_transform_phi(
    reference: &JointMeasure,
    target: &JointMeasure,
    phi: &[f64],
    vu_cost: VuCost,
    y_atom: &Point,
) -> Result<Vec<(usize, f64)>> {
    let tj = slice_indices(target, y_atom);
    if tj.is_empty() {
        return Err(ConditionalError::EmptySlice);
    }
    Ok(slice_indices(reference, y_atom)
        .into_iter()
        .map(|i| {
            let v = &reference.x()[i];
            let val = tj
                .iter()
                .map(|&j| phi[j] - vu_cost(v, &target.x()[j]))
                .fold(f64::NEG_INFINITY, f64::max);
            (i, val)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    /// Potentials on the full index sets, `φ` replaced by `ψ^c` slice by slice.
    pub potentials: DualPotentials,
    /// Largest `|φ(j) − ψ(i) − c(i, j)|` over the plan support.
    pub max_slackness: f64,
    /// Largest `φ(j) − ψ(i) − c(i, j)` over same-slice pairs.
    pub max_infeasibility: f64,
}

/// Primal optimum of the conditional problem against the dual value of
/// potentials recovered slice by slice.
pub fn conditional_duality_gap(
    reference: &JointMeasure,
    target: &JointMeasure,
    vu_cost: VuCost,
) -> Result<DualityReport> {
    let (dec, primal) = solve_conditional_kantorovich(reference, target, vu_cost)?;
    let mut psi = vec![0.0; reference.len()];
    let mut phi = vec![0.0; target.len()];
    let mut max_slackness: f64 = 0.0;
    let mut max_infeasibility = f64::NEG_INFINITY;
    for (g, plan) in dec.groups.iter().zip(&dec.slice_plans) {
        let s = slice_problem(reference, target, g, vu_cost)?;
        let d = extract_duals(&s.cost, plan)?;
        for (a, &i) in g.ref_indices.iter().enumerate() {
            psi[i] = d.psi[a];
        }
        // tighten φ to ψ^c on the slice
        let tightened = partial_c_transform_psi(reference, target, &psi, vu_cost, &g.y)?;
        for (j, val) in tightened {
            phi[j] = val;
        }
        let local = DualPotentials {
            psi: g.ref_indices.iter().map(|&i| psi[i]).collect(),
            phi: g.tgt_indices.iter().map(|&j| phi[j]).collect(),
        };
        max_slackness = max_slackness.max(local.slackness_violation(&s.cost, plan));
        max_infeasibility = max_infeasibility.max(local.max_infeasibility(&s.cost));
    }
    let potentials = DualPotentials { psi, phi };
    let dual = potentials.dual_value(reference.weights(), target.weights());
    Ok(DualityReport {
        primal,
        dual,
        gap: primal - dual,
        potentials,
        max_slackness,
        max_infeasibility,
    })
}

/// Cost of coupling `v` and `u` independently within each slice, an upper
/// bound on the conditional optimum.
pub fn independence_coupling_cost(
    reference: &JointMeasure,
    target: &JointMeasure,
    vu_cost: VuCost,
) -> Result<f64> {
    let groups = group_by_y(reference, target)?;
    let mut total = KahanSum::new();
    for g in &groups {
        let s = slice_problem(reference, target, g, vu_cost)?;
        for (a, wa) in s.a.iter().enumerate() {
            for (b, wb) in s.b.iter().enumerate() {
                total.add(s.mass * wa * wb * s.cost.get(a, b));
            }
        }
    }
    Ok(total.value())
}

/// Result of the two-stage triangular construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriangularMap {
    /// Stage 1: reference atom `i` takes target `y`-atom `y_{y_assignment[i]}`.
    pub y_assignment: Vec<usize>,
    /// Composite pairing, reference atom → target atom.
    pub pairing: Vec<usize>,
    /// Mean `‖z_i − y_{σ(i)}‖²` of stage 1.
    pub stage1_cost: f64,
    /// Conditional cost of stage 2.
    pub stage2_cost: f64,
}

/// Transports the `y`-marginal first (quadratic OT), then solves the conditional
/// problem with the relabelled reference.
pub fn triangular_compose(
    reference: &JointMeasure,
    target: &JointMeasure,
    vu_cost: VuCost,
) -> Result<TriangularMap> {
    check_dims(reference, target)?;
    let n = reference.len();
    if target.len() != n || !reference.is_uniform() || !target.is_uniform() {
        return Err(ConditionalError::Unsupported(
            "triangular composition needs two uniform measures of equal size".into(),
        ));
    }
    let cy = CostMatrix::from_fn(n, n, |i, j| sq_dist(&reference.y()[i], &target.y()[j]))?;
    let stage1 = solve_assignment(&cy)?;
    let relabelled = reference.with_y(
        stage1
            .sigma
            .iter()
            .map(|&j| target.y()[j].clone())
            .collect(),
    )?;
    let (dec, stage2_cost) = solve_conditional_kantorovich(&relabelled, target, vu_cost)?;
    let pairing = dec
        .pairing(n)
        .expect("uniform equal-size slices give permutations");
    Ok(TriangularMap {
        y_assignment: stage1.sigma,
        pairing,
        stage1_cost: stage1.cost,
        stage2_cost,
    })
}
