//! Network simplex on the bipartite transportation graph.
//!
//! Arcs run from source `i` to sink `j`, arc index `i * m + j`. The basis is a
//! spanning tree of `n + m − 1` arcs, started from the north-west corner rule.
//! Forbidden arcs are driven out in a first phase that minimizes the mass they
//! carry; in the second phase they may stay basic at zero flow but never enter
//! and never receive flow.

use super::{check_weights, CostMatrix, DualPotentials, OtError, TransportPlan, FORBIDDEN};
use crate::numeric::KahanSum;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub plan: TransportPlan,
    pub cost: f64,
    /// Potentials of the final basis (`φ(j) − ψ(i) ≤ c(i, j)`, tight on basic arcs).
    pub duals: DualPotentials,
    pub pivots: usize,
}

const RC_TOL: f64 = 1e-12;
// Dantzig pricing until this many consecutive degenerate pivots, then Bland.
const DEGENERATE_STREAK: usize = 64;

struct Tree {
    potential: Vec<f64>,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
}

struct Simplex<'a> {
    n: usize,
    m: usize,
    c: &'a CostMatrix,
    flow: Vec<f64>,
    basic: Vec<bool>,
    basis: Vec<usize>,
    phase_one: bool,
    bland: bool,
    pivots: usize,
}

impl Simplex<'_> {
    fn arc_nodes(&self, k: usize) -> (usize, usize) {
        (k / self.m, self.n + k % self.m)
    }

    fn arc_cost(&self, k: usize) -> f64 {
        let c = self.c.get(k / self.m, k % self.m);
        match (self.phase_one, c == FORBIDDEN) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            (false, true) => 0.0,
            (false, false) => c,
        }
    }

    fn build_tree(&self) -> Tree {
        let nodes = self.n + self.m;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for &k in &self.basis {
            let (s, t) = self.arc_nodes(k);
            adj[s].push(k);
            adj[t].push(k);
        }
        let mut tree = Tree {
            potential: vec![0.0; nodes],
            parent: vec![usize::MAX; nodes],
            parent_arc: vec![usize::MAX; nodes],
            depth: vec![0; nodes],
        };
        let mut seen = vec![false; nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &k in &adj[x] {
                let (s, t) = self.arc_nodes(k);
                let y = if s == x { t } else { s };
                if seen[y] {
                    continue;
                }
                seen[y] = true;
                tree.parent[y] = x;
                tree.parent_arc[y] = k;
                tree.depth[y] = tree.depth[x] + 1;
                // basic arcs are tight: π(t) = π(s) + c
                let c = self.arc_cost(k);
                tree.potential[y] = if y == t {
                    tree.potential[x] + c
                } else {
                    tree.potential[x] - c
                };
                stack.push(y);
            }
        }
        debug_assert!(seen.iter().all(|&s| s), "basis is not spanning");
        tree
    }

    fn entering(&self, tree: &Tree) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..self.n * self.m {
            if self.basic[k] {
                continue;
            }
            if !self.phase_one && self.c.get(k / self.m, k % self.m) == FORBIDDEN {
                continue;
            }
            let (s, t) = self.arc_nodes(k);
            let rc = self.arc_cost(k) + tree.potential[s] - tree.potential[t];
            if rc < -RC_TOL {
                if self.bland {
                    return Some(k);
                }
                if best.is_none_or(|(_, b)| rc < b) {
                    best = Some((k, rc));
                }
            }
        }
        best.map(|(k, _)| k)
    }

    /// Pivots arc `e` into the basis. Returns whether the pivot was degenerate.
    fn pivot(&mut self, e: usize, tree: &Tree) -> bool {
        let (s, t) = self.arc_nodes(e);
        // cycle: e forward (s -> t), then the tree path from t back to s
        let mut cycle: Vec<(usize, bool)> = Vec::new(); // (arc, forward)
        let (mut a, mut b) = (t, s);
        let mut up_from_s = Vec::new();
        while a != b {
            if tree.depth[a] >= tree.depth[b] {
                let k = tree.parent_arc[a];
                // walking a -> parent(a); forward iff arc is oriented a -> parent(a)
                let (ks, _) = self.arc_nodes(k);
                cycle.push((k, ks == a));
                a = tree.parent[a];
            } else {
                let k = tree.parent_arc[b];
                // the cycle walks parent(b) -> b
                let (ks, _) = self.arc_nodes(k);
                up_from_s.push((k, ks != b));
                b = tree.parent[b];
            }
        }
        cycle.extend(up_from_s.into_iter().rev());

        let mut theta = f64::INFINITY;
        for &(k, fwd) in &cycle {
            let room = if fwd {
                if !self.phase_one && self.c.get(k / self.m, k % self.m) == FORBIDDEN {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                self.flow[k]
            };
            theta = theta.min(room);
        }
        let leave;
        if theta.is_finite() {
            let tie = theta + 1e-15;
            let mut cand = usize::MAX;
            for &(k, fwd) in &cycle {
                let room = if fwd { 0.0 } else { self.flow[k] };
                let blocks = if fwd {
                    !self.phase_one && self.c.get(k / self.m, k % self.m) == FORBIDDEN
                } else {
                    room <= tie
                };
                if blocks && k < cand {
                    cand = k;
                }
            }
            leave = cand;
        } else {
            // unbounded direction cannot occur: costs are bounded below and
            // every cycle contains a backward arc
            unreachable!("transportation cycle without a backward arc");
        }
        let theta = theta.max(0.0);
        self.flow[e] += theta;
        for &(k, fwd) in &cycle {
            if fwd {
                self.flow[k] += theta;
            } else {
                self.flow[k] = (self.flow[k] - theta).max(0.0);
            }
        }
        self.flow[leave] = 0.0;
        self.basic[leave] = false;
        self.basic[e] = true;
        let pos = self
            .basis
            .iter()
            .position(|&k| k == leave)
            .expect("leaving arc is basic");
        self.basis[pos] = e;
        self.pivots += 1;
        theta <= 0.0
    }

    fn run(&mut self) {
        let mut streak = 0;
        loop {
            let tree = self.build_tree();
            let Some(e) = self.entering(&tree) else { break };
            if self.pivot(e, &tree) {
                streak += 1;
                if streak > DEGENERATE_STREAK {
                    self.bland = true;
                }
            } else {
                streak = 0;
            }
        }
    }
}

/// Exact discrete OT between weights `a` (rows) and `b` (columns).
pub fn solve_lp(c: &CostMatrix, a: &[f64], b: &[f64]) -> Result<LpSolution, OtError> {
    let (n, m) = (c.rows(), c.cols());
    check_weights(a, n, "row weights")?;
    check_weights(b, m, "column weights")?;
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    if (sa - sb).abs() > 1e-12 {
        return Err(OtError::InvalidWeights(format!(
            "unbalanced marginals: {sa} vs {sb}"
        )));
    }
    for i in 0..n {
        if a[i] > 0.0 && c.row(i).iter().all(|x| *x == FORBIDDEN) {
            return Err(OtError::Infeasible);
        }
    }

    let mut flow = vec![0.0; n * m];
    let mut basic = vec![false; n * m];
    let mut basis = Vec::with_capacity(n + m - 1);
    let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        let x = ra[i].min(rb[j]);
        let k = i * m + j;
        flow[k] = x;
        basic[k] = true;
        basis.push(k);
        ra[i] -= x;
        rb[j] -= x;
        if i == n - 1 {
            j += 1;
        } else if j == m - 1 || ra[i] <= rb[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(basis.len(), n + m - 1);

    let any_forbidden = c.data().iter().any(|x| *x == FORBIDDEN);
    let mut sx = Simplex {
        n,
        m,
        c,
        flow,
        basic,
        basis,
        phase_one: any_forbidden,
        bland: false,
        pivots: 0,
    };
    if any_forbidden {
        sx.run();
        let bad: f64 = (0..n * m)
            .filter(|&k| c.get(k / m, k % m) == FORBIDDEN)
            .map(|k| sx.flow[k])
            .sum();
        if bad > 1e-12 {
            return Err(OtError::Infeasible);
        }
        for k in 0..n * m {
            if c.get(k / m, k % m) == FORBIDDEN {
                sx.flow[k] = 0.0;
            }
        }
        sx.phase_one = false;
        sx.bland = false;
    }
    sx.run();

    let tree = sx.build_tree();
    let duals = DualPotentials {
        psi: tree.potential[..n].to_vec(),
        phi: tree.potential[n..].to_vec(),
    };
    let data = sx.flow;
    let cost = (0..n * m)
        .filter(|&k| data[k] > 0.0)
        .map(|k| data[k] * c.get(k / m, k % m))
        .collect::<KahanSum>()
        .value();
    Ok(LpSolution {
        plan: TransportPlan::matrix(n, m, data, a.to_vec(), b.to_vec()),
        cost,
        duals,
        pivots: sx.pivots,
    })
}
