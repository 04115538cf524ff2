//! k-d tree over points of any fixed dimension, for k-nearest-neighbor queries.
//!
//! Distances are squared Euclidean. Results are ordered by `(distance, index)`,
//! so equidistant points come back in index order.

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// `coords` holds `coords.len() / dim` points back to back.
    pub fn new(coords: Vec<f64>, dim: usize) -> Self {
        assert!(
            dim > 0 && coords.len() % dim == 0,
            "coordinate buffer does not match dimension"
        );
        let n = coords.len() / dim;
        let mut tree = Self {
            dim,
            coords,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut coords = Vec::new();
        for r in rows {
            assert_eq!(r.len(), dim);
            coords.extend_from_slice(r);
        }
        Self::new(coords, dim)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the widest coordinate
        let mut best = (0, -1.0);
        for d in 0..self.dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let x = self.coords[i * self.dim + d];
                lo = lo.min(x);
                hi = hi.max(x);
            }
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        let d = best.0;
        if best.1 <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let (coords, dim) = (&self.coords, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + d].total_cmp(&coords[b * dim + d])
        });
        let value = coords[self.order[mid] * dim + d];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim: d,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest points to `q` as `(index, squared distance)`.
    pub fn knn(&self, q: &[f64], k: usize) -> Vec<(usize, f64)> {
        assert_eq!(q.len(), self.dim, "query dimension");
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        self.search(0, q, k, &mut best);
        best.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn search(&self, node: usize, q: &[f64], k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let p = self.point(i);
                    let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    let cand = (d, i);
                    if best.len() < k || lt(cand, best[best.len() - 1]) {
                        let pos = best.partition_point(|&x| lt(x, cand));
                        best.insert(pos, cand);
                        best.truncate(k);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, k, best);
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

fn lt(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Brute-force reference for [`KdTree::knn`].
pub fn knn_brute(coords: &[f64], dim: usize, q: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = coords
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|(d, i)| (i, d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn matches_brute_force() {
        let mut rng = rng_from_seed(3);
        for dim in [1, 2, 3, 5] {
            let n = 700;
            let coords: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>()).collect();
            let tree = KdTree::new(coords.clone(), dim);
            for _ in 0..50 {
                let q: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 1.2 - 0.1).collect();
                for k in [1, 2, 7] {
                    assert_eq!(tree.knn(&q, k), knn_brute(&coords, dim, &q, k));
                }
            }
        }
    }

    #[test]
    fn ties_come_back_in_index_order() {
        // many duplicates
        let coords: Vec<f64> = (0..100).map(|i| (i % 3) as f64).collect();
        let tree = KdTree::new(coords.clone(), 1);
        let got = tree.knn(&[1.0], 5);
        assert_eq!(got, knn_brute(&coords, 1, &[1.0], 5));
        assert_eq!(
            got.iter().map(|x| x.0).collect::<Vec<_>>(),
            vec![1, 4, 7, 10, 13]
        );
    }

    #[test]
    fn k_larger_than_n() {
        let tree = KdTree::new(vec![0.0, 1.0, 2.0], 1);
        assert_eq!(tree.knn(&[0.9], 10).len(), 3);
    }

    proptest! {
        #[test]
        fn prop_knn_equals_brute(pts in prop::collection::vec(-3i32..3, 2..200), q in (-4i32..4, -4i32..4), k in 1usize..6) {
            let coords: Vec<f64> = pts.iter().map(|&x| x as f64).collect();
            let coords = if coords.len() % 2 == 1 { coords[1..].to_vec() } else { coords };
            let tree = KdTree::new(coords.clone(), 2);
            let q = [q.0 as f64, q.1 as f64];
            prop_assert_eq!(tree.knn(&q, k), knn_brute(&coords, 2, &q, k));
        }
    }
}
