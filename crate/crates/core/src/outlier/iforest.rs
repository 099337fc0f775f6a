//! Isolation forest anomaly scores.
//!
//! Trees partition random subsamples with axis-aligned splits drawn
//! uniformly inside each node's value range; anomalies isolate in few
//! splits. The score is `2^(−E[h]/c(ψ))` with `h` the path length adjusted
//! by `c(leaf size)` and `ψ` the subsample size. Splits are drawn as
//! `min + u·(max−min)`, so scores are equivariant under positive affine
//! rescaling of any column.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stats::derive_seed;

struct Node {
    /// Split feature and threshold for internal nodes.
    split: Option<(usize, f64)>,
    left: usize,
    right: usize,
    /// Rows in this node at build time (leaves only).
    size: usize,
}

struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn build(
        x: &[f64],
        d: usize,
        rows: &mut [usize],
        max_depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        tree.grow(x, d, rows, 0, max_depth, rng);
        tree
    }

    fn grow(
        &mut self,
        x: &[f64],
        d: usize,
        rows: &mut [usize],
        depth: usize,
        max_depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node { split: None, left: 0, right: 0, size: rows.len() });
        if depth >= max_depth || rows.len() <= 1 {
            return idx;
        }
        // try a few features before giving up on a splittable one
        for _ in 0..8 {
            let feature = rng.gen_range(0..d);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &r in rows.iter() {
                let v = x[r * d + feature];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi <= lo {
                continue;
            }
            let threshold = lo + rng.gen::<f64>() * (hi - lo);
            let mid = partition(rows, |r| x[r * d + feature] < threshold);
            if mid == 0 || mid == rows.len() {
                continue;
            }
            let (left_rows, right_rows) = rows.split_at_mut(mid);
            let left = self.grow(x, d, left_rows, depth + 1, max_depth, rng);
            let right = self.grow(x, d, right_rows, depth + 1, max_depth, rng);
            self.nodes[idx].split = Some((feature, threshold));
            self.nodes[idx].left = left;
            self.nodes[idx].right = right;
            return idx;
        }
        idx
    }

    fn path_length(&self, x: &[f64], d: usize, row: usize) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node].split {
                Some((feature, threshold)) => {
                    depth += 1.0;
                    node = if x[row * d + feature] < threshold {
                        self.nodes[node].left
                    } else {
                        self.nodes[node].right
                    };
                }
                None => return depth + c_factor(self.nodes[node].size),
            }
        }
    }
}

/// Stable in-place partition; returns the count satisfying the predicate.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut sorted: Vec<usize> = Vec::with_capacity(rows.len());
    sorted.extend(rows.iter().copied().filter(|&r| pred(r)));
    let mid = sorted.len();
    sorted.extend(rows.iter().copied().filter(|&r| !pred(r)));
    rows.copy_from_slice(&sorted);
    mid
}

/// Average unsuccessful-search path length in a BST of n nodes.
fn c_factor(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    let harmonic = (nf - 1.0).ln() + 0.577_215_664_901_532_9;
    2.0 * harmonic - 2.0 * (nf - 1.0) / nf
}

/// Isolation scores for all rows of the row-major `x` (n×d).
/// Deterministic for a given seed; each tree draws its own stream.
pub fn iforest_scores(
    x: &[f64],
    n: usize,
    d: usize,
    trees: usize,
    subsample: usize,
    seed: u64,
) -> Vec<f64> {
    assert!(n >= 8, "need at least 8 rows");
    let psi = subsample.min(n);
    let max_depth = (psi as f64).log2().ceil() as usize;
    let denom = c_factor(psi);

    let forest: Vec<Tree> = (0..trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("tree/{t}")));
            // subsample without replacement via partial Fisher-Yates
            let mut pool: Vec<usize> = (0..n).collect();
            for i in 0..psi {
                let j = rng.gen_range(i..n);
                pool.swap(i, j);
            }
            let mut rows = pool[..psi].to_vec();
            Tree::build(x, d, &mut rows, max_depth, &mut rng)
        })
        .collect();

    (0..n)
        .map(|row| {
            let mean_path: f64 =
                forest.iter().map(|t| t.path_length(x, d, row)).sum::<f64>() / trees as f64;
            2.0_f64.powf(-mean_path / denom)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blob_with_far_point(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for j in 0..d {
            x[(n - 1) * d + j] = 25.0;
        }
        x
    }

    #[test]
    fn far_outlier_gets_the_top_score_in_most_seeds() {
        let n = 200;
        let d = 4;
        let mut hits = 0;
        for seed in 0..100 {
            let x = blob_with_far_point(n, d, seed);
            let scores = iforest_scores(&x, n, d, 100, 256, seed);
            let top = (0..n)
                .max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap())
                .unwrap();
            if top == n - 1 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "outlier topped the scores in only {hits}/100 seeds");
    }

    #[test]
    fn identical_rows_share_scores() {
        let n = 32;
        let d = 3;
        let mut x = vec![0.5; n * d];
        // half the rows at one point, half at another
        for i in n / 2..n {
            for j in 0..d {
                x[i * d + j] = -1.5;
            }
        }
        let scores = iforest_scores(&x, n, d, 50, 16, 9);
        for i in 1..n / 2 {
            assert!((scores[i] - scores[0]).abs() < 1e-12);
        }
        for i in n / 2 + 1..n {
            assert!((scores[i] - scores[n / 2]).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_seed_reproduces_scores() {
        let x = blob_with_far_point(100, 5, 4);
        let a = iforest_scores(&x, 100, 5, 64, 64, 11);
        let b = iforest_scores(&x, 100, 5, 64, 64, 11);
        assert_eq!(a, b);
    }
}
