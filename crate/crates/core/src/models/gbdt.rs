//! Gradient boosting of depth-limited regression trees under absolute loss.
//!
//! Each round fits a tree to the signs of the current residuals on a random
//! subsample, using exact split search over per-feature quantile borders,
//! then replaces every leaf's output with the median residual of its samples
//! (the exact minimizer of absolute loss in that leaf), shrunk by
//! `n / (n + l2_leaf_reg)` and damped by the learning rate.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtParams {
    pub iterations: usize,
    pub depth: usize,
    pub learning_rate: f64,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub l2_leaf_reg: f64,
    /// Maximum number of split borders per feature.
    pub border_count: usize,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            iterations: 1000,
            depth: 6,
            learning_rate: 0.03,
            subsample: 0.8,
            l2_leaf_reg: 3.0,
            border_count: 254,
            seed: 228,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 16 {
            return Err(Error::Config(format!("depth must be in 1..=16, got {}", self.depth)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("learning_rate must lie in (0, 1]".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("subsample must lie in (0, 1]".into()));
        }
        if !(self.l2_leaf_reg >= 0.0) {
            return Err(Error::Config("l2_leaf_reg must be >= 0".into()));
        }
        if self.border_count == 0 || self.border_count > 254 {
            return Err(Error::Config("border_count must be in 1..=254".into()));
        }
        Ok(())
    }
}

pub(crate) const LEAF: u32 = u32::MAX;

/// Flat tree node; `feature == LEAF` marks a leaf carrying `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

impl Node {
    fn leaf(value: f64) -> Node {
        Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

/// Binary regression tree; rows with `x[feature] > threshold` go right.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut n = &self.nodes[0];
        while !n.is_leaf() {
            n = if x[n.feature as usize] > n.threshold {
                &self.nodes[n.right as usize]
            } else {
                &self.nodes[n.left as usize]
            };
        }
        n.value
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }
}

/// Inference layout: every tree padded to a complete binary tree of the
/// forest's maximum depth, with children of slot `i` at `2i + 1` and
/// `2i + 2`. A leaf above the bottom level becomes a chain of `+inf`
/// splits, which always route left, so predictions are unchanged.
#[derive(Debug, Clone, PartialEq, Default)]
struct Forest {
    depth: usize,
    features: Vec<u32>,
    thresholds: Vec<f64>,
    leaves: Vec<f64>,
}

impl Forest {
    fn pack(trees: &[Tree]) -> Forest {
        let depth = trees.iter().map(Tree::depth).max().unwrap_or(0);
        let inner = (1usize << depth) - 1;
        let mut f = Forest {
            depth,
            features: Vec::with_capacity(trees.len() * inner),
            thresholds: Vec::with_capacity(trees.len() * inner),
            leaves: Vec::with_capacity(trees.len() << depth),
        };
        fn fill(f: &mut Forest, tree: &Tree, node: usize, slot: usize, level: usize, base: (usize, usize)) {
            let n = &tree.nodes[node];
            if level == f.depth {
                f.leaves[base.1 + slot - ((1 << f.depth) - 1)] = n.value;
                return;
            }
            let (feature, threshold, left, right) = if n.is_leaf() {
                (0, f64::INFINITY, node, node)
            } else {
                (n.feature, n.threshold, n.left as usize, n.right as usize)
            };
            f.features[base.0 + slot] = feature;
            f.thresholds[base.0 + slot] = threshold;
            fill(f, tree, left, 2 * slot + 1, level + 1, base);
            fill(f, tree, right, 2 * slot + 2, level + 1, base);
        }
        for t in trees {
            let base = (f.features.len(), f.leaves.len());
            f.features.resize(base.0 + inner, 0);
            f.thresholds.resize(base.0 + inner, f64::INFINITY);
            f.leaves.resize(base.1 + (1 << depth), 0.0);
            fill(&mut f, t, 0, 0, 0, base);
        }
        f
    }

    #[inline]
    fn predict(&self, x: &[f64]) -> f64 {
        let inner = (1usize << self.depth) - 1;
        let mut sum = 0.0;
        if inner == 0 {
            return self.leaves.iter().sum();
        }
        for ((feats, thr), leaves) in self
            .features
            .chunks_exact(inner)
            .zip(self.thresholds.chunks_exact(inner))
            .zip(self.leaves.chunks_exact(inner + 1))
        {
            let mut i = 0;
            for _ in 0..self.depth {
                i = 2 * i + 1 + usize::from(x[feats[i] as usize] > thr[i]);
            }
            sum += leaves[i - inner];
        }
        sum
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub n_features: usize,
    /// Median of the training targets.
    pub base: f64,
    trees: Vec<Tree>,
    pub params: GbdtParams,
    forest: Forest,
}

impl GbdtModel {
    /// Trees must index features below `n_features`.
    pub fn new(n_features: usize, base: f64, trees: Vec<Tree>, params: GbdtParams) -> Self {
        let forest = Forest::pack(&trees);
        GbdtModel {
            n_features,
            base,
            trees,
            params,
            forest,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Shape(format!(
                "gbdt model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(self.base + self.forest.predict(x))
    }

    pub fn predict(&self, features: &Table) -> Result<Vec<f64>> {
        features.rows().map(|r| self.predict_row(r)).collect()
    }
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    debug_assert!(n > 0);
    let mid = n / 2;
    let (lower, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + m)
    }
}

/// Split borders from quantiles of the training column. A value `x` falls in
/// bin `#{borders < x}`, so `x > borders[b]` iff `bin(x) > b`.
fn quantile_borders(column: &[f64], count: usize) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() <= 1 {
        return Vec::new();
    }
    if sorted.len() <= count + 1 {
        return sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = sorted.len();
    let mut borders: Vec<f64> = (1..=count)
        .map(|b| {
            let i = (b * n / (count + 1)).min(n - 1).max(1);
            0.5 * (sorted[i - 1] + sorted[i])
        })
        .collect();
    borders.dedup();
    borders
}

struct Binned {
    n_cols: usize,
    /// Row-major bin indices.
    bins: Vec<u8>,
    borders: Vec<Vec<f64>>,
}

impl Binned {
    fn new(features: &Table, border_count: usize) -> Binned {
        let (n_rows, n_cols) = (features.n_rows(), features.n_cols());
        let borders: Vec<Vec<f64>> = (0..n_cols)
            .map(|j| quantile_borders(&features.column(j), border_count))
            .collect();
        let mut bins = Vec::with_capacity(n_rows * n_cols);
        for r in features.rows() {
            for (x, b) in r.iter().zip(&borders) {
                bins.push(b.partition_point(|&v| v < *x) as u8);
            }
        }
        Binned { n_cols, bins, borders }
    }

    #[inline]
    fn row(&self, i: usize) -> &[u8] {
        &self.bins[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Training-time node with the split also expressed in bin space.
struct BuildNode {
    node: Node,
    bin: u8,
}

fn predict_binned(nodes: &[BuildNode], row: &[u8]) -> f64 {
    let mut n = &nodes[0];
    while !n.node.is_leaf() {
        n = if row[n.node.feature as usize] > n.bin {
            &nodes[n.node.right as usize]
        } else {
            &nodes[n.node.left as usize]
        };
    }
    n.node.value
}

struct TreeBuilder<'a> {
    data: &'a Binned,
    grad: &'a [f64],
    residual: &'a [f64],
    params: &'a GbdtParams,
    nodes: Vec<BuildNode>,
    hist_sum: Vec<f64>,
    hist_cnt: Vec<u32>,
}

const HIST_BINS: usize = 256;

impl<'a> TreeBuilder<'a> {
    fn score(&self, g: f64, n: f64) -> f64 {
        g * g / (n + self.params.l2_leaf_reg)
    }

    /// Best `(gain, feature, bin)` for the rows in `idx`.
    fn best_split(&mut self, idx: &[usize]) -> Option<(f64, usize, u8)> {
        let f = self.data.n_cols;
        self.hist_sum.iter_mut().for_each(|v| *v = 0.0);
        self.hist_cnt.iter_mut().for_each(|v| *v = 0);
        let mut g_total = 0.0;
        for &i in idx {
            let g = self.grad[i];
            g_total += g;
            for (j, &b) in self.data.row(i).iter().enumerate() {
                let h = j * HIST_BINS + b as usize;
                self.hist_sum[h] += g;
                self.hist_cnt[h] += 1;
            }
        }
        let n_total = idx.len() as f64;
        let parent = self.score(g_total, n_total);
        let mut best: Option<(f64, usize, u8)> = None;
        for j in 0..f {
            let n_borders = self.data.borders[j].len();
            let (mut gl, mut nl) = (0.0, 0u32);
            for b in 0..n_borders {
                let h = j * HIST_BINS + b;
                gl += self.hist_sum[h];
                nl += self.hist_cnt[h];
                let nr = idx.len() as u32 - nl;
                if nl == 0 || nr == 0 {
                    continue;
                }
                let gain = self.score(gl, nl as f64) + self.score(g_total - gl, nr as f64) - parent;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, j, b as u8));
                }
            }
        }
        best
    }

    fn leaf_value(&self, idx: &[usize]) -> f64 {
        if idx.is_empty() {
            return 0.0;
        }
        let mut r: Vec<f64> = idx.iter().map(|&i| self.residual[i]).collect();
        let n = r.len() as f64;
        let shrink = n / (n + self.params.l2_leaf_reg);
        self.params.learning_rate * shrink * median(&mut r)
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(BuildNode {
            node: Node::leaf(0.0),
            bin: 0,
        });
        let split = if depth < self.params.depth && idx.len() >= 2 {
            self.best_split(idx)
        } else {
            None
        };
        match split {
            None => {
                self.nodes[id as usize].node.value = self.leaf_value(idx);
            }
            Some((_, feature, bin)) => {
                let data = self.data;
                let mut split_at = 0;
                for k in 0..idx.len() {
                    if data.row(idx[k])[feature] <= bin {
                        idx.swap(k, split_at);
                        split_at += 1;
                    }
                }
                let (l, r) = idx.split_at_mut(split_at);
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                self.nodes[id as usize] = BuildNode {
                    node: Node {
                        feature: feature as u32,
                        threshold: data.borders[feature][bin as usize],
                        left,
                        right,
                        value: 0.0,
                    },
                    bin,
                };
            }
        }
        id
    }
}

fn check_inputs(features: &Table, targets: &[f64]) -> Result<()> {
    let n = features.n_rows();
    if targets.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} targets", targets.len())));
    }
    if n < 10 {
        return Err(Error::InvalidArgument(format!("gbdt needs >= 10 rows, got {n}")));
    }
    if targets.iter().chain(features.rows().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gbdt training data"));
    }
    Ok(())
}

fn mean_abs(targets: &[f64], pred: &[f64]) -> f64 {
    targets.iter().zip(pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / targets.len() as f64
}

pub fn train_gbdt(features: &Table, targets: &[f64], params: &GbdtParams) -> Result<GbdtModel> {
    train_gbdt_traced(features, targets, params).map(|(m, _)| m)
}

/// Trains and also returns the training-set MAE after every round.
pub fn train_gbdt_traced(features: &Table, targets: &[f64], params: &GbdtParams) -> Result<(GbdtModel, Vec<f64>)> {
    params.validate()?;
    check_inputs(features, targets)?;
    let n = features.n_rows();
    let data = Binned::new(features, params.border_count);
    let base = median(&mut targets.to_vec());
    let mut pred = vec![base; n];
    let mut residual = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sample_size = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(params.iterations);
    let mut trace = Vec::with_capacity(params.iterations);
    let mut hist_sum = vec![0.0; data.n_cols * HIST_BINS];
    let mut hist_cnt = vec![0u32; data.n_cols * HIST_BINS];

    for _ in 0..params.iterations {
        for i in 0..n {
            residual[i] = targets[i] - pred[i];
            grad[i] = if residual[i] > 0.0 {
                1.0
            } else if residual[i] < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        let mut idx: Vec<usize> = if sample_size == n {
            (0..n).collect()
        } else {
            let mut v = index::sample(&mut rng, n, sample_size).into_vec();
            v.sort_unstable();
            v
        };
        let mut builder = TreeBuilder {
            data: &data,
            grad: &grad,
            residual: &residual,
            params,
            nodes: Vec::new(),
            hist_sum: std::mem::take(&mut hist_sum),
            hist_cnt: std::mem::take(&mut hist_cnt),
        };
        builder.build(&mut idx, 0);
        hist_sum = builder.hist_sum;
        hist_cnt = builder.hist_cnt;
        let nodes = builder.nodes;

        for (i, p) in pred.iter_mut().enumerate() {
            *p += predict_binned(&nodes, data.row(i));
        }
        let loss = mean_abs(targets, &pred);
        if !loss.is_finite() {
            return Err(Error::NonFinite("gbdt training loss"));
        }
        trace.push(loss);
        trees.push(Tree {
            nodes: nodes.into_iter().map(|b| b.node).collect(),
        });
    }

    Ok((GbdtModel::new(features.n_cols(), base, trees, params.clone()), trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn borders_between_unique_values() {
        assert_eq!(quantile_borders(&[1.0, 1.0, 3.0, 5.0], 10), vec![2.0, 4.0]);
        assert!(quantile_borders(&[2.0; 5], 10).is_empty());
        let many: Vec<f64> = (0..10_000).map(f64::from).collect();
        let b = quantile_borders(&many, 254);
        assert!(b.len() <= 254 && b.len() > 200);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_model_predicts_base() {
        let m = GbdtModel::new(2, 1.25, vec![], GbdtParams::default());
        assert_eq!(m.predict_row(&[0.0, 9.0]).unwrap(), 1.25);
        assert!(m.predict_row(&[0.0]).is_err());
    }

    #[test]
    fn single_leaf_tree_shifts() {
        let m = GbdtModel::new(
            1,
            1.0,
            vec![Tree {
                nodes: vec![Node::leaf(0.5)],
            }],
            GbdtParams::default(),
        );
        assert_eq!(m.predict_row(&[-4.0]).unwrap(), 1.5);
        assert_eq!(m.predict_row(&[40.0]).unwrap(), 1.5);
    }

    #[test]
    fn rejects_tiny_or_non_finite_data() {
        let t = Table::from_rows(vec!["x".into()], &vec![vec![1.0]; 5]).unwrap();
        assert!(train_gbdt(&t, &[1.0; 5], &GbdtParams::default()).is_err());
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let t = Table::from_rows(vec!["x".into()], &rows).unwrap();
        let mut y = vec![1.0; 12];
        y[3] = f64::NAN;
        assert!(matches!(
            train_gbdt(&t, &y, &GbdtParams::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn trees_respect_depth_and_leaves_are_reachable() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 17) as f64, (i % 5) as f64 * 0.3]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].sin() + r[1]).collect();
        let t = Table::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
        let params = GbdtParams {
            iterations: 20,
            depth: 3,
            ..Default::default()
        };
        let m = train_gbdt(&t, &y, &params).unwrap();
        assert!(m.trees().len() <= 20);
        for tree in m.trees() {
            assert!(tree.depth() <= 3);
            for n in &tree.nodes {
                assert!(n.threshold.is_finite());
            }
            // Every leaf is hit by at least one training row.
            let mut hit = vec![false; tree.nodes.len()];
            for r in &rows {
                let mut i = 0;
                while !tree.nodes[i].is_leaf() {
                    let n = &tree.nodes[i];
                    i = if r[n.feature as usize] > n.threshold {
                        n.right
                    } else {
                        n.left
                    } as usize;
                }
                hit[i] = true;
            }
            for (i, n) in tree.nodes.iter().enumerate() {
                assert!(!n.is_leaf() || hit[i]);
            }
        }
    }
}
