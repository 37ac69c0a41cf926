//! Bagged regression trees.
//!
//! CART splits on squared error, a random subset of `mtry` features per node,
//! and one bootstrap resample per tree. Tree `t` draws from its own stream, so
//! the ensemble is identical whether trees are grown serially or in parallel.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::StreamKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(d / 3)`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_leaf: 5,
            mtry: None,
            bootstrap: true,
            max_depth: None,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    feature: u32,
    /// Split threshold for internal nodes, prediction for leaves.
    value: f64,
    left: u32,
    right: u32,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if x[n.feature as usize] <= n.value {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub(crate) fn fit(xs: &[Vec<f64>], ys: &[f64], params: &ForestParams, seed: u64) -> Forest {
        let d = xs[0].len();
        let mtry = params.mtry.unwrap_or(d.div_ceil(3)).clamp(1, d);
        let min_leaf = params.min_leaf.max(1);
        let root = StreamKey::new(seed);
        let trees = (0..params.n_trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = root.child(t as u64).rng();
                let n = xs.len();
                let idx: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                grow(xs, ys, idx, d, mtry, min_leaf, params.max_depth, &mut rng)
            })
            .collect();
        Forest { trees }
    }

    pub(crate) fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[allow(clippy::too_many_arguments)]
fn grow<R: Rng>(
    xs: &[Vec<f64>],
    ys: &[f64],
    idx: Vec<usize>,
    d: usize,
    mtry: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    rng: &mut R,
) -> Tree {
    let mut nodes = vec![Node {
        feature: LEAF,
        value: 0.0,
        left: 0,
        right: 0,
    }];
    // (node slot, sample indices, depth)
    let mut stack = vec![(0usize, idx, 0usize)];
    let mut order: Vec<usize> = Vec::new();
    while let Some((slot, ids, depth)) = stack.pop() {
        let n = ids.len();
        let sum: f64 = ids.iter().map(|&i| ys[i]).sum();
        let mean = sum / n as f64;
        let can_split = n >= 2 * min_leaf && max_depth.is_none_or(|m| depth < m);
        let best = if can_split {
            best_split(xs, ys, &ids, d, mtry, min_leaf, sum, rng, &mut order)
        } else {
            None
        };
        match best {
            None => {
                nodes[slot] = Node {
                    feature: LEAF,
                    value: mean,
                    left: 0,
                    right: 0,
                };
            }
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    ids.into_iter().partition(|&i| xs[i][feature] <= threshold);
                let li = nodes.len();
                let blank = Node {
                    feature: LEAF,
                    value: 0.0,
                    left: 0,
                    right: 0,
                };
                nodes.push(blank);
                nodes.push(blank);
                nodes[slot] = Node {
                    feature: feature as u32,
                    value: threshold,
                    left: li as u32,
                    right: li as u32 + 1,
                };
                stack.push((li + 1, r, depth + 1));
                stack.push((li, l, depth + 1));
            }
        }
    }
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn best_split<R: Rng>(
    xs: &[Vec<f64>],
    ys: &[f64],
    ids: &[usize],
    d: usize,
    mtry: usize,
    min_leaf: usize,
    total: f64,
    rng: &mut R,
    order: &mut Vec<usize>,
) -> Option<(usize, f64)> {
    let n = ids.len();
    let nf = n as f64;
    let parent = total * total / nf;
    // Maximising sum_l^2/n_l + sum_r^2/n_r minimises the child SSE.
    let mut best: Option<(f64, usize, f64)> = None;
    for feature in sample(rng, d, mtry).into_iter() {
        order.clear();
        order.extend_from_slice(ids);
        order.sort_by(|&a, &b| xs[a][feature].total_cmp(&xs[b][feature]));
        let mut left = 0.0;
        for k in 0..n - 1 {
            left += ys[order[k]];
            let nl = k + 1;
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let xa = xs[order[k]][feature];
            let xb = xs[order[k + 1]][feature];
            if xa == xb {
                continue;
            }
            let right = total - left;
            let score = left * left / nl as f64 + right * right / (n - nl) as f64;
            if best.is_none_or(|(s, _, _)| score > s) {
                // Adjacent floats can have a midpoint equal to the upper one.
                let mid = 0.5 * (xa + xb);
                best = Some((score, feature, if mid < xb { mid } else { xa }));
            }
        }
    }
    let (score, feature, threshold) = best?;
    let tol = 1e-12 * (parent.abs() + ids.iter().map(|&i| ys[i] * ys[i]).sum::<f64>());
    (score > parent + tol).then_some((feature, threshold))
}
