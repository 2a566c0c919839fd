//! Subsampled random-forest ensembles with inclusion bookkeeping.
//!
//! Each tree trains on a size-k subsample drawn without replacement with
//! inclusion probability proportional to the given sampling weights
//! (exponential-key order sampling: draw Exp(1)/wᵢ per point, keep the k
//! smallest keys). The model records which points each tree saw; those
//! indicators are what the infinitesimal-jackknife directional derivatives
//! `Uᵢ'(x) = n·cov_b(N_{i,b}, T_b(x))` are computed from.
//!
//! Determinism: tree b draws its subsample and its splits from seeds derived
//! as `derive_seed(forest seed, b)`, so results are identical regardless of
//! the parallel schedule.

use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded_rng};
use crate::tree::{self, Tree, TreeError, TreeParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ForestError {
    #[error("length mismatch: {0} targets, {1} weights, {2} rows of data")]
    LengthMismatch(usize, usize, usize),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("a forest needs at least 2 trees, got {0}")]
    TooFewTrees(usize),
    #[error("sample_fraction must lie in (0, 1], got {0}")]
    InvalidSampleFraction(f64),
    #[error("non-positive or non-finite sampling weight at index {0}")]
    InvalidWeight(usize),
    #[error("subsample size {k} exceeds data size {n}")]
    SubsampleTooLarge { k: usize, n: usize },
    #[error("subsample size {k} below min_node_size {min_node_size}")]
    SubsampleTooSmall { k: usize, min_node_size: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("inconsistent model parts: {0}")]
    InconsistentParts(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    /// Number of trees B.
    pub n_trees: usize,
    /// Per-tree subsample share; k = ceil(fraction * n).
    pub sample_fraction: f64,
    /// Parameters shared by every tree. The `seed` field is ignored here:
    /// per-tree seeds are derived from the forest seed.
    pub tree: TreeParams,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(n_trees: usize, sample_fraction: f64, p: usize, seed: u64) -> Self {
        Self {
            n_trees,
            sample_fraction,
            tree: TreeParams::default_for(p),
            seed,
        }
    }
}

/// Proximity of a test point to one training point: the share of that
/// point's in-bag trees in which both land in the same leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proximity {
    pub score: f64,
    /// Trees whose subsample contained the training point; 0 means the
    /// score carries no information.
    pub in_bag_trees: usize,
}

/// A fitted ensemble: B trees plus the B x n inclusion record.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    /// Per tree, the sorted training-row indices of its subsample (length k).
    in_bag: Vec<Vec<u32>>,
    /// Per training row, in how many subsamples it appears.
    in_bag_count: Vec<u32>,
    k: usize,
    n: usize,
}

/// Size-k weighted sample without replacement via exponential keys:
/// the k smallest values of Exp(1)/wᵢ. Returned sorted ascending.
fn weighted_subsample(weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut keyed: Vec<(f64, u32)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random();
            // 1-u is in (0,1], so the key is finite
            (-(1.0 - u).ln() / w, i as u32)
        })
        .collect();
    keyed.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rows: Vec<u32> = keyed[..k].iter().map(|&(_, i)| i).collect();
    rows.sort_unstable();
    rows
}

/// Fit a forest of subsampled trees on pseudo-responses with sampling
/// weights.
pub fn fit(
    x: &Matrix,
    targets: &[f64],
    weights: &[f64],
    params: &ForestParams,
) -> Result<ForestModel, ForestError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    if targets.len() != n || weights.len() != n {
        return Err(ForestError::LengthMismatch(
            targets.len(),
            weights.len(),
            n,
        ));
    }
    if params.n_trees < 2 {
        return Err(ForestError::TooFewTrees(params.n_trees));
    }
    if !(params.sample_fraction > 0.0 && params.sample_fraction <= 1.0) {
        return Err(ForestError::InvalidSampleFraction(params.sample_fraction));
    }
    for (i, &w) in weights.iter().enumerate() {
        if w.is_nan() || w <= 0.0 || !w.is_finite() {
            return Err(ForestError::InvalidWeight(i));
        }
    }
    let k = ((params.sample_fraction * n as f64).ceil() as usize).min(n);
    if k > n {
        return Err(ForestError::SubsampleTooLarge { k, n });
    }
    if k < params.tree.min_node_size {
        return Err(ForestError::SubsampleTooSmall {
            k,
            min_node_size: params.tree.min_node_size,
        });
    }

    let fitted: Result<Vec<(Tree, Vec<u32>)>, ForestError> = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let base = derive_seed(params.seed, b as u64);
            let mut sample_rng = seeded_rng(derive_seed(base, 0));
            let rows = weighted_subsample(weights, k, &mut sample_rng);
            let tree_params = TreeParams {
                seed: derive_seed(base, 1),
                ..params.tree.clone()
            };
            let tree = tree::fit(x, &rows, targets, &tree_params)?;
            Ok((tree, rows))
        })
        .collect();
    let fitted = fitted?;

    let mut trees = Vec::with_capacity(params.n_trees);
    let mut in_bag = Vec::with_capacity(params.n_trees);
    let mut in_bag_count = vec![0u32; n];
    for (tree, rows) in fitted {
        for &r in &rows {
            in_bag_count[r as usize] += 1;
        }
        trees.push(tree);
        in_bag.push(rows);
    }
    Ok(ForestModel {
        trees,
        in_bag,
        in_bag_count,
        k,
        n,
    })
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn subsample_size(&self) -> usize {
        self.k
    }

    pub fn n_train(&self) -> usize {
        self.n
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Sorted training-row indices of tree b's subsample.
    pub fn in_bag(&self, b: usize) -> &[u32] {
        &self.in_bag[b]
    }

    pub fn is_in_bag(&self, b: usize, i: usize) -> bool {
        self.in_bag[b].binary_search(&(i as u32)).is_ok()
    }

    pub fn inclusion_count(&self, i: usize) -> u32 {
        self.in_bag_count[i]
    }

    /// Ensemble prediction: the mean of the per-tree predictions.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn per_tree_predictions(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// Mean prediction over the trees whose subsample did not contain
    /// training row `i`; falls back to the full-forest prediction when the
    /// point was in-bag everywhere.
    pub fn oob_prediction(&self, x: &[f64], i: usize) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (b, tree) in self.trees.iter().enumerate() {
            if !self.is_in_bag(b, i) {
                sum += tree.predict(x);
                count += 1;
            }
        }
        if count == 0 {
            self.predict(x)
        } else {
            sum / count as f64
        }
    }

    /// IJ directional derivatives n·cov_b(N_{i,b}, T_b(x)) for every
    /// training point (sample covariance over trees, divisor B-1).
    pub fn ij_derivatives(&self, x: &[f64]) -> Vec<f64> {
        self.ij_from_predictions(&self.per_tree_predictions(x))
    }

    /// Same, reusing already-computed per-tree predictions.
    pub fn ij_from_predictions(&self, preds: &[f64]) -> Vec<f64> {
        let b_count = preds.len();
        debug_assert_eq!(b_count, self.trees.len());
        let mean = preds.iter().sum::<f64>() / b_count as f64;
        // cov_b(N_i, T) = [Σ_{b: i in bag} (T_b - mean) - N̄_i Σ_b (T_b - mean)] / (B-1)
        let mut acc = vec![0.0f64; self.n];
        let mut dev_total = 0.0;
        for (b, &t) in preds.iter().enumerate() {
            let d = t - mean;
            dev_total += d;
            for &i in &self.in_bag[b] {
                acc[i as usize] += d;
            }
        }
        let scale = self.n as f64 / (b_count as f64 - 1.0);
        (0..self.n)
            .map(|i| {
                let incl_mean = self.in_bag_count[i] as f64 / b_count as f64;
                scale * (acc[i] - incl_mean * dev_total)
            })
            .collect()
    }

    /// Sample variance of the per-tree predictions (divisor B-1).
    pub fn tree_variance(&self, x: &[f64]) -> f64 {
        Self::variance_from_predictions(&self.per_tree_predictions(x))
    }

    pub fn variance_from_predictions(preds: &[f64]) -> f64 {
        let b = preds.len() as f64;
        let mean = preds.iter().sum::<f64>() / b;
        preds.iter().map(|&t| (t - mean) * (t - mean)).sum::<f64>() / (b - 1.0)
    }

    /// Proximity of `x` to training point `i`: the fraction of trees
    /// containing `i` in-bag in which `x` and `X_i` share a leaf. A point
    /// that is never in-bag yields score 0 with `in_bag_trees` = 0.
    pub fn proximity(&self, x_train: &Matrix, x: &[f64], i: usize) -> Proximity {
        let xi = x_train.row(i);
        let mut in_bag_trees = 0usize;
        let mut shared = 0usize;
        for (b, tree) in self.trees.iter().enumerate() {
            if self.is_in_bag(b, i) {
                in_bag_trees += 1;
                if tree.leaf_id(x) == tree.leaf_id(xi) {
                    shared += 1;
                }
            }
        }
        let score = if in_bag_trees == 0 {
            0.0
        } else {
            shared as f64 / in_bag_trees as f64
        };
        Proximity {
            score,
            in_bag_trees,
        }
    }

    /// Rebuild a model from stored parts, re-validating the bookkeeping.
    pub fn from_parts(
        trees: Vec<Tree>,
        in_bag: Vec<Vec<u32>>,
        k: usize,
        n: usize,
    ) -> Result<Self, ForestError> {
        if trees.len() < 2 {
            return Err(ForestError::TooFewTrees(trees.len()));
        }
        if in_bag.len() != trees.len() {
            return Err(ForestError::InconsistentParts(format!(
                "{} trees but {} in-bag rows",
                trees.len(),
                in_bag.len()
            )));
        }
        let mut in_bag_count = vec![0u32; n];
        for rows in &in_bag {
            if rows.len() != k {
                return Err(ForestError::InconsistentParts(format!(
                    "in-bag row of length {} but k={k}",
                    rows.len()
                )));
            }
            let sorted_unique = rows.windows(2).all(|w| w[0] < w[1]);
            if !sorted_unique {
                return Err(ForestError::InconsistentParts(
                    "in-bag rows must be sorted and unique".into(),
                ));
            }
            if rows.last().is_some_and(|&last| last as usize >= n) {
                return Err(ForestError::InconsistentParts(
                    "in-bag index out of range".into(),
                ));
            }
            for &r in rows {
                in_bag_count[r as usize] += 1;
            }
        }
        Ok(Self {
            trees,
            in_bag,
            in_bag_count,
            k,
            n,
        })
    }
}
