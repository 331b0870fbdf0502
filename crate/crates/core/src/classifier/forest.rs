use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, DecisionTree, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features per split; `None` uses `round(sqrt(d))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 32,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
    /// Per-tree seeds used for bootstrap and feature sampling.
    pub seeds: Vec<u64>,
}

/// Index of the most frequent vote; ties go to the smallest class index.
pub fn majority_vote(votes: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes.max(votes.iter().max().map_or(0, |m| m + 1))];
    for &v in votes {
        counts[v] += 1;
    }
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

impl RandomForest {
    pub fn from_trees(trees: Vec<DecisionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        let n_classes = trees.iter().map(|t| t.n_classes).max().unwrap_or(0);
        Ok(Self {
            seeds: vec![0; trees.len()],
            trees,
            n_classes,
        })
    }

    pub fn k(&self) -> usize {
        self.trees.len()
    }

    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        majority_vote(&self.votes(x), self.n_classes)
    }
}

pub fn fit_forest(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: ForestParams, seed: u64) -> Result<RandomForest> {
    if params.n_trees == 0 {
        return Err(Error::invalid("n_trees must be at least 1"));
    }
    if x.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let d = x[0].len();
    let max_features = params
        .max_features
        .unwrap_or_else(|| ((d as f64).sqrt().round() as usize).max(1));
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: Some(max_features),
    };
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.random()).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            if !params.bootstrap {
                return fit_tree(x, y, n_classes, tree_params, s);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let (bx, by): (Vec<Vec<f64>>, Vec<usize>) = (0..x.len())
                .map(|_| {
                    let i = rng.random_range(0..x.len());
                    (x[i].clone(), y[i])
                })
                .unzip();
            fit_tree(&bx, &by, n_classes, tree_params, rng.random())
        })
        .collect::<Result<Vec<_>>>()?;
    let n_classes = trees.iter().map(|t| t.n_classes).max().unwrap_or(n_classes);
    Ok(RandomForest {
        trees,
        n_classes,
        seeds,
    })
}
