//! CART-style decision tree with Gini impurity.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn at random for each split; `None` considers all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 32,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: usize,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub n_classes: usize,
    pub params: TreeParams,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Best `(feature, threshold, left indices, right indices)` by impurity
    /// decrease. Impure nodes accept zero-gain splits so that patterns such
    /// as XOR remain learnable.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64, Vec<usize>, Vec<usize>)> {
        let n_features = self.x[0].len();
        let features: Vec<usize> = match self.params.max_features {
            Some(m) if m < n_features => {
                let mut f = sample(&mut self.rng, n_features, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..n_features).collect(),
        };
        let total = idx.len();
        let parent = gini(&self.counts(idx), total);
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = vec![0usize; self.n_classes];
            let mut right = self.counts(idx);
            for pos in 0..total - 1 {
                let i = order[pos];
                left[self.y[i]] += 1;
                right[self.y[i]] -= 1;
                let v = self.x[i][f];
                let next = self.x[order[pos + 1]][f];
                if v == next {
                    continue;
                }
                let nl = pos + 1;
                let nr = total - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let child = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / total as f64;
                let gain = parent - child;
                if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    best = Some((gain, f, v));
                }
            }
        }
        let (gain, f, t) = best?;
        if gain < -1e-12 {
            return None;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][f] <= t);
        Some((f, t, l, r))
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let counts = self.counts(idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority(&counts) });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || idx.len() < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        if let Some((feature, threshold, l, r)) = self.best_split(idx) {
            let left = self.build(&l, depth + 1);
            let right = self.build(&r, depth + 1);
            self.nodes[id] = Node::Split {
                feature,
                threshold,
                left,
                right,
            };
        }
        id
    }
}

fn check_examples(x: &[Vec<f64>], y: &[usize]) -> Result<(usize, usize)> {
    if x.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "labels per example",
            expected: x.len(),
            got: y.len(),
        });
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::invalid("examples have no features"));
    }
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            context: "example width",
            expected: d,
            got: row.len(),
        });
    }
    if x.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN feature value"));
    }
    Ok((d, y.iter().max().map_or(0, |m| m + 1)))
}

/// Fits a tree on `x` (rows) with class indices `y`. `n_classes` may exceed
/// the classes present.
pub fn fit_tree(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: TreeParams, seed: u64) -> Result<DecisionTree> {
    let (d, seen) = check_examples(x, y)?;
    let n_classes = n_classes.max(seen);
    let idx: Vec<usize> = (0..x.len()).collect();
    let mut b = Builder {
        x,
        y,
        n_classes,
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    b.build(&idx, 0);
    Ok(DecisionTree {
        nodes: b.nodes,
        n_features: d,
        n_classes,
        params,
    })
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut n = 0;
        loop {
            match &self.nodes[n] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => n = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, n: usize) -> usize {
            match &t.nodes[n] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Features tested anywhere in the tree, ascending.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Classes reachable at some leaf, ascending.
    pub fn leaf_classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { class } => Some(*class),
                Node::Split { .. } => None,
            })
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}
