//! Regression trees shared by the random forest and the gradient booster.
//!
//! Trees are grown breadth-first on gradient/hessian pairs with exact
//! greedy splits: one pass per feature per level over globally pre-sorted
//! instance lists. Leaf values are `−G/(H+λ)`; with `g = −y`, `h = 1`,
//! `λ = 0` this reduces to the plain mean-leaf variance-reduction tree the
//! forest uses, while the booster feeds squared-error gradients and a
//! positive leaf L2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stats::derive_seed;

#[derive(Debug, Clone, Copy)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Leaf L2 regularization.
    pub lambda: f64,
    /// Features tried per node; None means all.
    pub mtry: Option<usize>,
}

#[derive(Debug, Clone)]
struct Node {
    split: Option<(usize, f64)>,
    left: usize,
    right: usize,
    value: f64,
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

struct ScanState {
    g: f64,
    h: f64,
    count: usize,
    prev_value: f64,
    seen: bool,
    best_gain: f64,
    best_threshold: f64,
    best_left_count: usize,
}

impl Tree {
    /// Grow on `instances` (indices into rows of `x`), with per-instance
    /// gradients and hessians.
    #[allow(clippy::too_many_arguments)]
    pub fn grow(
        x: &[f64],
        d: usize,
        instances: &[usize],
        g: &[f64],
        h: &[f64],
        cfg: &TreeConfig,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let m = instances.len();
        // instance order per feature, sorted once
        let sorted: Vec<Vec<u32>> = (0..d)
            .map(|f| {
                let mut order: Vec<u32> = (0..m as u32).collect();
                order.sort_by(|&a, &b| {
                    let va = x[instances[a as usize] * d + f];
                    let vb = x[instances[b as usize] * d + f];
                    va.partial_cmp(&vb).unwrap().then(a.cmp(&b))
                });
                order
            })
            .collect();

        let total_g: f64 = (0..m).map(|i| g[i]).sum();
        let total_h: f64 = (0..m).map(|i| h[i]).sum();
        let mut tree = Tree {
            nodes: vec![Node {
                split: None,
                left: 0,
                right: 0,
                value: leaf_value(total_g, total_h, cfg.lambda),
            }],
        };
        let mut assignment: Vec<u32> = vec![0; m];
        let mut pending: Vec<usize> = vec![0];
        let mut node_stats: Vec<(f64, f64, usize)> = vec![(total_g, total_h, m)];

        for _depth in 0..cfg.max_depth {
            if pending.is_empty() {
                break;
            }
            let slot_of: std::collections::HashMap<usize, usize> =
                pending.iter().enumerate().map(|(s, &n)| (n, s)).collect();
            // candidate features per pending node
            let candidates: Vec<Vec<bool>> = pending
                .iter()
                .map(|_| match cfg.mtry {
                    None => vec![true; d],
                    Some(k) => {
                        let mut mask = vec![false; d];
                        let mut pool: Vec<usize> = (0..d).collect();
                        for i in 0..k.min(d) {
                            let j = rng.gen_range(i..d);
                            pool.swap(i, j);
                            mask[pool[i]] = true;
                        }
                        mask
                    }
                })
                .collect();

            let mut best: Vec<(f64, usize, f64, usize)> =
                vec![(0.0, usize::MAX, 0.0, 0); pending.len()];

            for f in 0..d {
                if !(0..pending.len()).any(|slot| candidates[slot][f]) {
                    continue;
                }
                let mut states: Vec<ScanState> = pending
                    .iter()
                    .map(|_| ScanState {
                        g: 0.0,
                        h: 0.0,
                        count: 0,
                        prev_value: 0.0,
                        seen: false,
                        best_gain: 0.0,
                        best_threshold: 0.0,
                        best_left_count: 0,
                    })
                    .collect();
                for &inst in &sorted[f] {
                    let inst = inst as usize;
                    let node = assignment[inst] as usize;
                    let Some(&slot) = slot_of.get(&node) else { continue };
                    if !candidates[slot][f] {
                        continue;
                    }
                    let value = x[instances[inst] * d + f];
                    let state = &mut states[slot];
                    if state.seen && value > state.prev_value {
                        let (gt, ht, ct) = node_stats[slot];
                        let gl = state.g;
                        let hl = state.h;
                        let cl = state.count;
                        if cl >= cfg.min_leaf && ct - cl >= cfg.min_leaf {
                            let gain = split_gain(gl, hl, gt - gl, ht - hl, gt, ht, cfg.lambda);
                            if gain > state.best_gain {
                                state.best_gain = gain;
                                state.best_threshold = 0.5 * (state.prev_value + value);
                                state.best_left_count = cl;
                            }
                        }
                    }
                    state.g += g[inst];
                    state.h += h[inst];
                    state.count += 1;
                    state.prev_value = value;
                    state.seen = true;
                }
                // features scan in ascending order, so ties keep the lowest
                for (slot, state) in states.iter().enumerate() {
                    if state.best_gain > best[slot].0 {
                        best[slot] = (
                            state.best_gain,
                            f,
                            state.best_threshold,
                            state.best_left_count,
                        );
                    }
                }
            }

            // materialize splits and reassign instances
            let mut next_pending = Vec::new();
            let mut next_stats = Vec::new();
            let mut split_nodes: Vec<Option<(usize, f64, usize, usize)>> =
                vec![None; pending.len()];
            for (slot, &node) in pending.iter().enumerate() {
                let (gain, f, threshold, _) = best[slot];
                if gain <= 1e-12 || f == usize::MAX {
                    continue;
                }
                let left = tree.nodes.len();
                let right = left + 1;
                tree.nodes.push(Node { split: None, left: 0, right: 0, value: 0.0 });
                tree.nodes.push(Node { split: None, left: 0, right: 0, value: 0.0 });
                tree.nodes[node].split = Some((f, threshold));
                tree.nodes[node].left = left;
                tree.nodes[node].right = right;
                split_nodes[slot] = Some((f, threshold, left, right));
                next_pending.push(left);
                next_pending.push(right);
                next_stats.push((0.0, 0.0, 0usize));
                next_stats.push((0.0, 0.0, 0usize));
            }
            if next_pending.is_empty() {
                break;
            }
            let next_slot_of: std::collections::HashMap<usize, usize> =
                next_pending.iter().enumerate().map(|(s, &n)| (n, s)).collect();
            for inst in 0..m {
                let node = assignment[inst] as usize;
                let Some(&slot) = slot_of.get(&node) else { continue };
                let Some((f, threshold, left, right)) = split_nodes[slot] else { continue };
                let child = if x[instances[inst] * d + f] <= threshold { left } else { right };
                assignment[inst] = child as u32;
                let s = next_slot_of[&child];
                next_stats[s].0 += g[inst];
                next_stats[s].1 += h[inst];
                next_stats[s].2 += 1;
            }
            for (slot, &node) in next_pending.iter().enumerate() {
                let (gn, hn, _) = next_stats[slot];
                tree.nodes[node].value = leaf_value(gn, hn, cfg.lambda);
            }
            pending = next_pending;
            node_stats = next_stats;
        }
        tree
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = 0;
        loop {
            match self.nodes[node].split {
                Some((f, threshold)) => {
                    node = if row[f] <= threshold {
                        self.nodes[node].left
                    } else {
                        self.nodes[node].right
                    };
                }
                None => return self.nodes[node].value,
            }
        }
    }
}

fn leaf_value(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda > 0.0 {
        -g / (h + lambda)
    } else {
        0.0
    }
}

#[allow(clippy::too_many_arguments)]
fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, gt: f64, ht: f64, lambda: f64) -> f64 {
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - gt * gt / (ht + lambda))
}

// ---------- random forest ----------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per node; None picks ⌈d/3⌉.
    pub mtry: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { trees: 300, max_depth: 14, min_leaf: 2, mtry: None }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit(x: &[f64], n: usize, d: usize, y: &[f64], cfg: &ForestConfig, seed: u64) -> RandomForest {
        let mtry = cfg.mtry.unwrap_or_else(|| (d + 2) / 3).max(1);
        let tree_cfg = TreeConfig {
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_leaf,
            lambda: 0.0,
            mtry: Some(mtry),
        };
        let trees: Vec<Tree> = (0..cfg.trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("rf/{t}")));
                let instances: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let g: Vec<f64> = instances.iter().map(|&r| -y[r]).collect();
                let h = vec![1.0; n];
                Tree::grow(x, d, &instances, &g, &h, &tree_cfg, &mut rng)
            })
            .collect();
        RandomForest { trees }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

// ---------- gradient boosting ----------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Leaf L2 regularization.
    pub lambda: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig { rounds: 500, learning_rate: 0.05, max_depth: 4, min_leaf: 5, lambda: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct GradBoost {
    base: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl GradBoost {
    /// Second-order boosting of squared error: per round the tree fits
    /// gradients `g_i = ŷ_i − y_i` with unit hessians and L2 on leaves.
    pub fn fit(x: &[f64], n: usize, d: usize, y: &[f64], cfg: &BoostConfig, seed: u64) -> GradBoost {
        let base = crate::stats::mean(y);
        let tree_cfg = TreeConfig {
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_leaf,
            lambda: cfg.lambda,
            mtry: None,
        };
        let instances: Vec<usize> = (0..n).collect();
        let h = vec![1.0; n];
        let mut pred = vec![base; n];
        let mut trees = Vec::with_capacity(cfg.rounds);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "boost"));
        for _ in 0..cfg.rounds {
            let g: Vec<f64> = (0..n).map(|i| pred[i] - y[i]).collect();
            let tree = Tree::grow(x, d, &instances, &g, &h, &tree_cfg, &mut rng);
            for i in 0..n {
                pred[i] += cfg.learning_rate * tree.predict_row(&x[i * d..(i + 1) * d]);
            }
            trees.push(tree);
        }
        GradBoost { base, learning_rate: cfg.learning_rate, trees }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base
            + self.learning_rate
                * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}
