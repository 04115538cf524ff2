//! Exhaustive OT oracle for tiny instances.

use super::{check_weights, CostMatrix, OtError, FORBIDDEN};
use crate::numeric::KahanSum;

const MAX_PERMUTATION_N: usize = 8;
const MAX_VERTEX_SUBSETS: u128 = 2_000_000;

/// Exact optimum by exhaustive search.
///
/// Square problems with uniform marginals enumerate all permutations
/// (`n ≤ 8`). Anything else enumerates the vertices of the transportation
/// polytope: every set of `n + m − 1` allowed arcs that forms a spanning tree
/// determines a unique flow, and the optimum is attained at one of the
/// nonnegative ones.
pub fn brute_force_ot(c: &CostMatrix, a: &[f64], b: &[f64]) -> Result<f64, OtError> {
    let (n, m) = (c.rows(), c.cols());
    check_weights(a, n, "row weights")?;
    check_weights(b, m, "column weights")?;
    let uniform_square = n == m
        && a.iter()
            .chain(b)
            .all(|w| (w - 1.0 / n as f64).abs() <= 1e-15);
    if uniform_square && n <= MAX_PERMUTATION_N {
        return by_permutations(c);
    }
    by_vertices(c, a, b)
}

fn by_permutations(c: &CostMatrix) -> Result<f64, OtError> {
    let n = c.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    loop {
        if perm
            .iter()
            .enumerate()
            .all(|(i, &j)| c.get(i, j) != FORBIDDEN)
        {
            let s: KahanSum = perm.iter().enumerate().map(|(i, &j)| c.get(i, j)).collect();
            best = best.min(s.value() / n as f64);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(OtError::Infeasible)
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

fn by_vertices(c: &CostMatrix, a: &[f64], b: &[f64]) -> Result<f64, OtError> {
    let (n, m) = (c.rows(), c.cols());
    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| c.get(i, j) != FORBIDDEN)
        .collect();
    let k = n + m - 1;
    let subsets = binomial(arcs.len() as u128, k as u128);
    if subsets > MAX_VERTEX_SUBSETS {
        return Err(OtError::TooLarge(format!("{subsets} candidate bases")));
    }
    if arcs.len() < k {
        return Err(OtError::Infeasible);
    }
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    let mut parent = vec![0; n + m];
    loop {
        // spanning tree check
        parent.iter_mut().enumerate().for_each(|(x, p)| *p = x);
        let mut tree = true;
        for &t in &idx {
            let (i, j) = arcs[t];
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, n + j));
            if ri == rj {
                tree = false;
                break;
            }
            parent[ri] = rj;
        }
        if tree {
            if let Some(cost) =
                tree_flow_cost(c, a, b, &idx.iter().map(|&t| arcs[t]).collect::<Vec<_>>())
            {
                best = best.min(cost);
            }
        }
        // next k-combination of arcs
        let mut p = k;
        while p > 0 && idx[p - 1] == arcs.len() - k + p - 1 {
            p -= 1;
        }
        if p == 0 {
            break;
        }
        idx[p - 1] += 1;
        for q in p..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(OtError::Infeasible)
    }
}

/// Flow on a spanning tree by leaf peeling; `None` if some flow is negative.
fn tree_flow_cost(c: &CostMatrix, a: &[f64], b: &[f64], tree: &[(usize, usize)]) -> Option<f64> {
    let n = a.len();
    let nodes = n + b.len();
    let mut supply: Vec<f64> = a.iter().copied().chain(b.iter().map(|x| -x)).collect();
    let mut degree = vec![0usize; nodes];
    for &(i, j) in tree {
        degree[i] += 1;
        degree[n + j] += 1;
    }
    let mut done = vec![false; tree.len()];
    let mut cost = KahanSum::new();
    for _ in 0..tree.len() {
        let (e, leaf) = tree.iter().enumerate().find_map(|(e, &(i, j))| {
            if done[e] {
                None
            } else if degree[i] == 1 {
                Some((e, i))
            } else if degree[n + j] == 1 {
                Some((e, n + j))
            } else {
                None
            }
        })?;
        let (i, j) = tree[e];
        // flow from source i to sink j
        let flow = if leaf == i { supply[i] } else { -supply[n + j] };
        if flow < -1e-12 {
            return None;
        }
        supply[i] -= flow;
        supply[n + j] += flow;
        degree[i] -= 1;
        degree[n + j] -= 1;
        done[e] = true;
        cost.add(flow.max(0.0) * c.get(i, j));
    }
    Some(cost.value())
}

#[cfg(test)]
mod tests {
    use super::super::{solve_assignment, solve_lp, uniform};
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn trivial_cases() {
        let zero = CostMatrix::new(4, 4, vec![0.0; 16]).unwrap();
        assert_eq!(
            brute_force_ot(&zero, &uniform(4), &uniform(4)).unwrap(),
            0.0
        );
        // forbidding (0,1) leaves the identity as the only permutation
        let c = CostMatrix::from_rows(&[vec![2.0, FORBIDDEN], vec![0.0, 4.0]]).unwrap();
        assert_eq!(brute_force_ot(&c, &uniform(2), &uniform(2)).unwrap(), 3.0);
    }

    #[test]
    fn agrees_with_assignment_on_5x5() {
        let mut rng = rng_from_seed(77);
        for _ in 0..50 {
            let c = CostMatrix::from_fn(5, 5, |_, _| rng.random::<f64>()).unwrap();
            let bf = brute_force_ot(&c, &uniform(5), &uniform(5)).unwrap();
            assert!((bf - solve_assignment(&c).unwrap().cost).abs() <= 1e-12);
        }
    }

    #[test]
    fn vertex_enumeration_matches_simplex() {
        let mut rng = rng_from_seed(5);
        let norm = |w: Vec<f64>| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        for (n, m) in [(2, 3), (3, 3), (3, 4), (4, 3)] {
            for _ in 0..10 {
                let c = CostMatrix::from_fn(n, m, |_, _| rng.random::<f64>()).unwrap();
                let a = norm((0..n).map(|_| rng.random::<f64>() + 0.05).collect());
                let b = norm((0..m).map(|_| rng.random::<f64>() + 0.05).collect());
                let bf = brute_force_ot(&c, &a, &b).unwrap();
                let lp = solve_lp(&c, &a, &b).unwrap().cost;
                assert!((bf - lp).abs() < 1e-10, "{n}x{m}: {bf} vs {lp}");
            }
        }
    }

    #[test]
    fn too_large() {
        let c = CostMatrix::new(9, 9, vec![0.0; 81]).unwrap();
        assert!(matches!(
            brute_force_ot(&c, &uniform(9), &uniform(9)),
            Err(OtError::TooLarge(_))
        ));
    }
}
