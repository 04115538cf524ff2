//! Linear assignment by shortest augmenting paths.
//!
//! Both solvers maintain column prices `v` with reduced costs
//! `c(i, j) − u(i) − v(j) ≥ 0` and equality on the matching, so the returned
//! potentials certify optimality.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;

use super::{CostMatrix, DualPotentials, OtError, TransportPlan, FORBIDDEN};
use crate::numeric::KahanSum;

/// Optimal assignment together with its dual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Row `i` is matched to column `sigma[i]`.
    pub sigma: Vec<usize>,
    /// `(1/n) Σ_i c(i, σ(i))`.
    pub cost: f64,
    /// `u` with `c(i, j) − u(i) − v(j) ≥ 0`, in unnormalized cost units.
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
}

impl Assignment {
    pub fn plan(&self) -> TransportPlan {
        TransportPlan::permutation(self.sigma.clone())
    }

    /// Potentials in the `φ(j) − ψ(i) ≤ c(i, j)` convention.
    pub fn duals(&self) -> DualPotentials {
        DualPotentials {
            psi: self.row_potentials.iter().map(|u| -u).collect(),
            phi: self.col_potentials.clone(),
        }
    }
}

/// Minimum-cost perfect matching on a square cost matrix with uniform marginals.
///
/// Among equally optimal permutations the lexicographically smallest one is
/// returned.
pub fn solve_assignment(c: &CostMatrix) -> Result<Assignment, OtError> {
    let n = c.rows();
    if c.cols() != n {
        return Err(OtError::NonSquare {
            rows: n,
            cols: c.cols(),
        });
    }
    const INF: f64 = f64::INFINITY;
    // 1-based arrays; index 0 is the virtual column used to seed each search.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![INF; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = INF);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = c.row(i0 - 1);
            let mut delta = INF;
            let mut j1 = usize::MAX;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cij = row[j - 1];
                if cij != FORBIDDEN {
                    let cur = cij - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == usize::MAX {
                return Err(OtError::Infeasible);
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut sigma = vec![0; n];
    for j in 1..=n {
        sigma[p[j] - 1] = j - 1;
    }
    let u = u[1..].to_vec();
    let v = v[1..].to_vec();
    canonicalize(c, &mut sigma, &u, &v);
    let cost = permutation_cost(&sigma, |i, j| c.get(i, j));
    Ok(Assignment {
        sigma,
        cost,
        row_potentials: u,
        col_potentials: v,
    })
}

fn permutation_cost(sigma: &[usize], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let s: KahanSum = sigma.iter().enumerate().map(|(i, &j)| cost(i, j)).collect();
    s.value() / sigma.len() as f64
}

/// Rewrites an optimal matching into the lexicographically smallest optimal one.
///
/// All optimal matchings live on the tight edges of an optimal dual, so for each
/// row in turn we try to move it to a smaller tight column through an
/// alternating cycle over the rows that are not yet fixed. A rotation is kept
/// only when it does not increase the cost beyond rounding.
fn canonicalize(c: &CostMatrix, sigma: &mut [usize], u: &[f64], v: &[f64]) {
    let n = sigma.len();
    let scale = 1.0 + c.max_abs_finite();
    let tight_tol = 1e-9 * scale;
    let tight = |i: usize, j: usize| {
        let cij = c.get(i, j);
        cij != FORBIDDEN && cij - u[i] - v[j] <= tight_tol
    };
    let mut row_of_col = vec![0; n];
    for (i, &j) in sigma.iter().enumerate() {
        row_of_col[j] = i;
    }
    let mut parent = vec![usize::MAX; n];
    let mut visited = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        let cur = sigma[i];
        for j in 0..cur {
            if !tight(i, j) {
                continue;
            }
            let r0 = row_of_col[j];
            if r0 < i {
                continue;
            }
            // BFS over unfixed rows for an alternating path r0 -> ... -> column `cur`.
            visited.iter_mut().for_each(|x| *x = false);
            queue.clear();
            queue.push_back(r0);
            visited[r0] = true;
            parent[r0] = usize::MAX;
            let mut last = None;
            'bfs: while let Some(r) = queue.pop_front() {
                for k in 0..n {
                    if k == sigma[r] || !tight(r, k) {
                        continue;
                    }
                    if k == cur {
                        last = Some(r);
                        break 'bfs;
                    }
                    let o = row_of_col[k];
                    if o <= i || visited[o] {
                        continue;
                    }
                    visited[o] = true;
                    parent[o] = r;
                    queue.push_back(o);
                }
            }
            let Some(last) = last else { continue };
            // path rows r0 = path[0], ..., path[k] = last
            let mut path = vec![last];
            while parent[*path.last().unwrap()] != usize::MAX {
                path.push(parent[*path.last().unwrap()]);
            }
            path.reverse();
            let mut moves: Vec<(usize, usize)> = vec![(i, j)];
            for w in path.windows(2) {
                moves.push((w[0], sigma[w[1]]));
            }
            moves.push((last, cur));
            let old: KahanSum = moves.iter().map(|&(r, _)| c.get(r, sigma[r])).collect();
            let new: KahanSum = moves.iter().map(|&(r, k)| c.get(r, k)).collect();
            let tie_tol = 64.0 * f64::EPSILON * scale * moves.len() as f64;
            if new.value() - old.value() <= tie_tol {
                for &(r, k) in &moves {
                    sigma[r] = k;
                    row_of_col[k] = r;
                }
                break;
            }
        }
    }
}

/// Options for [`solve_assignment_sparse`].
#[derive(Debug, Clone, Copy)]
pub struct SparseAssignmentOptions {
    /// A pair violates dual feasibility when its reduced cost is below
    /// `−tol · (1 + max matched cost)`.
    pub tol: f64,
    /// Cap on add-edges-and-resolve rounds.
    pub max_rounds: usize,
}

impl Default for SparseAssignmentOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_rounds: 50,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on column index
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NONE: usize = usize::MAX;

struct SparseState<'a, F> {
    n: usize,
    cost: &'a F,
    adj: Vec<Vec<(usize, f64)>>,
    v: Vec<f64>,
    owner: Vec<usize>,
    assigned: Vec<usize>,
    acost: Vec<f64>,
    dist: Vec<f64>,
    scanned: Vec<bool>,
    pred: Vec<usize>,
    pred_cost: Vec<f64>,
    touched: Vec<usize>,
}

impl<'a, F: Fn(usize, usize) -> f64 + Sync> SparseState<'a, F> {
    /// Dijkstra from a free row to the nearest free column in reduced costs.
    /// Returns `false` when no free column is reachable on the current graph.
    fn augment(&mut self, start: usize) -> bool {
        let mut heap = BinaryHeap::new();
        let mut scanned_list = Vec::new();
        let u_start = self.adj[start]
            .iter()
            .map(|&(j, c)| c - self.v[j])
            .fold(f64::INFINITY, f64::min);
        for &(j, c) in &self.adj[start] {
            let d = c - self.v[j] - u_start;
            if d < self.dist[j] {
                if self.dist[j] == f64::INFINITY {
                    self.touched.push(j);
                }
                self.dist[j] = d;
                self.pred[j] = start;
                self.pred_cost[j] = c;
                heap.push(HeapItem(d, j));
            }
        }
        let mut end = NONE;
        while let Some(HeapItem(d, j)) = heap.pop() {
            if self.scanned[j] || d > self.dist[j] {
                continue;
            }
            self.scanned[j] = true;
            scanned_list.push(j);
            let r = self.owner[j];
            if r == NONE {
                end = j;
                break;
            }
            let base = d - (self.acost[r] - self.v[j]);
            for &(k, c) in &self.adj[r] {
                if self.scanned[k] {
                    continue;
                }
                let nd = base + c - self.v[k];
                if nd < self.dist[k] {
                    if self.dist[k] == f64::INFINITY {
                        self.touched.push(k);
                    }
                    self.dist[k] = nd;
                    self.pred[k] = r;
                    self.pred_cost[k] = c;
                    heap.push(HeapItem(nd, k));
                }
            }
        }
        let ok = end != NONE;
        if ok {
            let big_d = self.dist[end];
            for &j in &scanned_list {
                self.v[j] += self.dist[j] - big_d;
            }
            let mut j = end;
            loop {
                let r = self.pred[j];
                let prev = self.assigned[r];
                self.assigned[r] = j;
                self.acost[r] = self.pred_cost[j];
                self.owner[j] = r;
                if r == start {
                    break;
                }
                j = prev;
            }
        }
        for &j in &self.touched {
            self.dist[j] = f64::INFINITY;
            self.scanned[j] = false;
        }
        self.touched.clear();
        ok
    }

    fn densify_row(&mut self, i: usize) {
        self.adj[i] = (0..self.n)
            .filter_map(|j| {
                let c = (self.cost)(i, j);
                (c != FORBIDDEN).then_some((j, c))
            })
            .collect();
    }

    /// All pairs with negative reduced cost, grouped by row.
    fn violations(&self, tol: f64) -> Vec<(usize, Vec<(usize, f64)>)> {
        let scale = 1.0 + self.acost.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        let thr = tol * scale;
        (0..self.n)
            .into_par_iter()
            .filter_map(|i| {
                let ui = self.acost[i] - self.v[self.assigned[i]];
                let bad: Vec<(usize, f64)> = (0..self.n)
                    .filter_map(|j| {
                        let c = (self.cost)(i, j);
                        (c != FORBIDDEN && c - self.v[j] - ui < -thr).then_some((j, c))
                    })
                    .collect();
                (!bad.is_empty()).then_some((i, bad))
            })
            .collect()
    }
}

/// Assignment on an `n × n` problem whose costs are produced on demand.
///
/// The augmenting-path solver runs on the candidate graph `candidates[i]`
/// (columns considered for row `i`). Once a perfect matching is found, every
/// pair is checked for dual feasibility; violating pairs are added to the graph,
/// their rows are released and re-augmented, until the certificate holds for
/// the full problem. The result is exactly optimal whatever the candidates, as
/// long as the candidate graph is reasonable the check passes after one or two
/// rounds.
pub fn solve_assignment_sparse<F>(
    n: usize,
    candidates: Vec<Vec<usize>>,
    cost: F,
    opts: SparseAssignmentOptions,
) -> Result<Assignment, OtError>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    solve_assignment_sparse_warm(n, candidates, cost, vec![0.0; n], opts)
}

/// [`solve_assignment_sparse`] started from column potentials `v0`, e.g. those
/// of a coarser problem. Good potentials make the greedy start nearly optimal.
pub fn solve_assignment_sparse_warm<F>(
    n: usize,
    candidates: Vec<Vec<usize>>,
    cost: F,
    v0: Vec<f64>,
    opts: SparseAssignmentOptions,
) -> Result<Assignment, OtError>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    if v0.len() != n || v0.iter().any(|x| !x.is_finite()) {
        return Err(OtError::Dimension(format!(
            "{} finite column potentials needed",
            n
        )));
    }
    if candidates.len() != n {
        return Err(OtError::Dimension(format!(
            "{} candidate lists for {n} rows",
            candidates.len()
        )));
    }
    let adj: Vec<Vec<(usize, f64)>> = candidates
        .into_iter()
        .enumerate()
        .map(|(i, cols)| {
            let mut cols = cols;
            cols.sort_unstable();
            cols.dedup();
            cols.into_iter()
                .filter(|&j| j < n)
                .filter_map(|j| {
                    let c = cost(i, j);
                    (c != FORBIDDEN).then_some((j, c))
                })
                .collect()
        })
        .collect();
    let mut st = SparseState {
        n,
        cost: &cost,
        adj,
        v: v0,
        owner: vec![NONE; n],
        assigned: vec![NONE; n],
        acost: vec![0.0; n],
        dist: vec![f64::INFINITY; n],
        scanned: vec![false; n],
        pred: vec![NONE; n],
        pred_cost: vec![0.0; n],
        touched: Vec::new(),
    };
    // greedy start: a row takes its cheapest candidate in reduced cost when
    // that column is free
    for i in 0..n {
        let v = &st.v;
        let best = st.adj[i].iter().copied().min_by(|a, b| {
            (a.1 - v[a.0])
                .total_cmp(&(b.1 - v[b.0]))
                .then(a.0.cmp(&b.0))
        });
        if let Some((j, c)) = best {
            if st.owner[j] == NONE {
                st.owner[j] = i;
                st.assigned[i] = j;
                st.acost[i] = c;
            }
        }
    }
    for round in 0..=opts.max_rounds {
        for i in 0..n {
            if st.assigned[i] != NONE {
                continue;
            }
            if !st.augment(i) {
                st.densify_row(i);
                if !st.augment(i) {
                    return Err(OtError::Infeasible);
                }
            }
        }
        let bad = st.violations(opts.tol);
        if bad.is_empty() {
            let u: Vec<f64> = (0..n).map(|i| st.acost[i] - st.v[st.assigned[i]]).collect();
            let sigma = st.assigned.clone();
            let cost_val = permutation_cost(&sigma, |i, _| st.acost[i]);
            return Ok(Assignment {
                sigma,
                cost: cost_val,
                row_potentials: u,
                col_potentials: st.v,
            });
        }
        if round == opts.max_rounds {
            break;
        }
        for (i, extra) in bad {
            st.adj[i].extend(extra);
            st.adj[i].sort_unstable_by_key(|e| e.0);
            st.adj[i].dedup_by_key(|e| e.0);
            let j = st.assigned[i];
            st.owner[j] = NONE;
            st.assigned[i] = NONE;
        }
    }
    Err(OtError::NotOptimal { gap: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn all_perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_perms(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn enumerate_min(c: &CostMatrix) -> f64 {
        all_perms(c.rows())
            .into_iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum::<f64>() / c.rows() as f64)
            .fold(f64::INFINITY, f64::min)
    }

    fn random_cost(rng: &mut impl Rng, n: usize) -> CostMatrix {
        CostMatrix::from_fn(n, n, |_, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn diagonal_and_antidiagonal() {
        let a =
            solve_assignment(&CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap())
                .unwrap();
        assert_eq!(a.sigma, vec![0, 1]);
        assert_eq!(a.cost, 0.0);
        let b =
            solve_assignment(&CostMatrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap())
                .unwrap();
        assert_eq!(b.sigma, vec![1, 0]);
        assert_eq!(b.cost, 0.0);
    }

    #[test]
    fn six_by_six_matches_enumeration() {
        let mut rng = rng_from_seed(42);
        for _ in 0..20 {
            let c = random_cost(&mut rng, 6);
            let a = solve_assignment(&c).unwrap();
            assert!((a.cost - enumerate_min(&c)).abs() <= 1e-12);
        }
    }

    #[test]
    fn ties_resolve_to_lexicographically_smallest() {
        let zero = CostMatrix::new(5, 5, vec![0.0; 25]).unwrap();
        assert_eq!(solve_assignment(&zero).unwrap().sigma, vec![0, 1, 2, 3, 4]);
        // rows 0 and 1 are interchangeable, the anti-identity on them is not preferred
        let c = CostMatrix::from_rows(&[
            vec![1.0, 1.0, 9.0],
            vec![1.0, 1.0, 9.0],
            vec![9.0, 9.0, 0.0],
        ])
        .unwrap();
        assert_eq!(solve_assignment(&c).unwrap().sigma, vec![0, 1, 2]);
        // brute-force check on random integer costs with many ties
        let mut rng = rng_from_seed(3);
        for _ in 0..30 {
            let c = CostMatrix::from_fn(5, 5, |_, _| rng.random_range(0..3) as f64).unwrap();
            let best = enumerate_min(&c);
            let mut perms = all_perms(5);
            perms.sort();
            let lex = perms
                .into_iter()
                .find(|p| {
                    (p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum::<f64>() / 5.0 - best)
                        .abs()
                        < 1e-12
                })
                .unwrap();
            assert_eq!(solve_assignment(&c).unwrap().sigma, lex);
        }
    }

    #[test]
    fn forbidden_entries() {
        let c = CostMatrix::from_rows(&[vec![1.0, FORBIDDEN], vec![0.0, 3.0]]).unwrap();
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.sigma, vec![0, 1]);
        assert_eq!(a.cost, 2.0);
        let bad = CostMatrix::from_rows(&[vec![1.0, FORBIDDEN], vec![0.0, FORBIDDEN]]).unwrap();
        assert_eq!(solve_assignment(&bad), Err(OtError::Infeasible));
        let ns = CostMatrix::new(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(
            solve_assignment(&ns),
            Err(OtError::NonSquare { .. })
        ));
    }

    #[test]
    fn potentials_are_a_certificate() {
        let mut rng = rng_from_seed(8);
        let c = random_cost(&mut rng, 12);
        let a = solve_assignment(&c).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert!(c.get(i, j) - a.row_potentials[i] - a.col_potentials[j] >= -1e-12);
            }
            let j = a.sigma[i];
            assert!((c.get(i, j) - a.row_potentials[i] - a.col_potentials[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn sparse_agrees_with_dense() {
        let mut rng = rng_from_seed(17);
        for trial in 0..10 {
            let n = 40 + trial;
            let pts: Vec<(f64, f64)> = (0..2 * n).map(|_| (rng.random(), rng.random())).collect();
            let cost = |i: usize, j: usize| {
                let (a, b) = (pts[i], pts[n + j]);
                (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
            };
            let dense = solve_assignment(&CostMatrix::from_fn(n, n, cost).unwrap()).unwrap();
            // deliberately poor candidates: three arbitrary columns per row
            let cands: Vec<Vec<usize>> =
                (0..n).map(|i| vec![i, (i + 7) % n, (i * 3) % n]).collect();
            let sparse = solve_assignment_sparse(n, cands, cost, Default::default()).unwrap();
            assert!(
                (dense.cost - sparse.cost).abs() < 1e-12,
                "{} vs {}",
                dense.cost,
                sparse.cost
            );
        }
    }

    #[test]
    fn sparse_infeasible() {
        let cost = |_: usize, j: usize| if j == 0 { 1.0 } else { FORBIDDEN };
        let r = solve_assignment_sparse(3, vec![vec![0]; 3], cost, Default::default());
        assert_eq!(r, Err(OtError::Infeasible));
    }
}
