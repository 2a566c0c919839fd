//! CART-style regression trees.
//!
//! Trees minimise the sum of squared deviations of the pseudo-responses,
//! trying `mtry` randomly drawn features per node. Split thresholds sit at
//! midpoints of consecutive distinct feature values; impurity ties are
//! broken by lowest feature index, then lowest threshold, so a fit is a pure
//! function of (data, params, seed). Routing sends `x[feature] <= threshold`
//! to the left child.

use crate::matrix::Matrix;
use crate::rng::seeded_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TreeError {
    #[error("empty subsample")]
    EmptySubsample,
    #[error("non-finite pseudo-response at row {0}")]
    NonFiniteResponse(usize),
    #[error("mtry {mtry} out of range for {p} features")]
    InvalidMtry { mtry: usize, p: usize },
    #[error("min_node_size must be at least 1")]
    InvalidMinNodeSize,
    #[error("malformed node table: {0}")]
    MalformedNodes(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    /// Features tried per split.
    pub mtry: usize,
    /// Minimum samples per leaf; nodes below twice this size never split.
    pub min_node_size: usize,
    /// Maximum number of split levels; `None` grows until purity.
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl TreeParams {
    /// Common regression-forest defaults for `p` features:
    /// mtry = max(1, p/3), min_node_size = 5, no depth limit.
    pub fn default_for(p: usize) -> Self {
        Self {
            mtry: (p / 3).max(1),
            min_node_size: 5,
            max_depth: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
        id: u32,
    },
}

/// A fitted regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    n_leaves: u32,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> u32 {
        self.n_leaves
    }

    /// Rebuild a tree from a node table (used by model deserialisation).
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, TreeError> {
        if nodes.is_empty() {
            return Err(TreeError::MalformedNodes("no nodes".into()));
        }
        let mut n_leaves = 0;
        for node in &nodes {
            match node {
                Node::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => {
                    if *left as usize >= nodes.len() || *right as usize >= nodes.len() {
                        return Err(TreeError::MalformedNodes("child index out of range".into()));
                    }
                    if !threshold.is_finite() {
                        return Err(TreeError::MalformedNodes("non-finite threshold".into()));
                    }
                }
                Node::Leaf { .. } => n_leaves += 1,
            }
        }
        Ok(Self { nodes, n_leaves })
    }

    fn route(&self, x: &[f64]) -> &Node {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.route(x) {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn leaf_id(&self, x: &[f64]) -> u32 {
        match self.route(x) {
            Node::Leaf { id, .. } => *id,
            Node::Split { .. } => unreachable!(),
        }
    }
}

/// Fit a tree on the subsample `rows` (indices into `x` and `targets`).
pub fn fit(
    x: &Matrix,
    rows: &[u32],
    targets: &[f64],
    params: &TreeParams,
) -> Result<Tree, TreeError> {
    if rows.is_empty() {
        return Err(TreeError::EmptySubsample);
    }
    let p = x.n_cols();
    if params.mtry == 0 || params.mtry > p {
        return Err(TreeError::InvalidMtry {
            mtry: params.mtry,
            p,
        });
    }
    if params.min_node_size == 0 {
        return Err(TreeError::InvalidMinNodeSize);
    }
    for &r in rows {
        if !targets[r as usize].is_finite() {
            return Err(TreeError::NonFiniteResponse(r as usize));
        }
    }
    let mut builder = Builder {
        x,
        targets,
        params,
        rng: seeded_rng(params.seed),
        nodes: Vec::new(),
        n_leaves: 0,
        feature_pool: (0..p as u32).collect(),
    };
    builder.build(rows.to_vec(), 0);
    Ok(Tree {
        nodes: builder.nodes,
        n_leaves: builder.n_leaves,
    })
}

struct Builder<'a> {
    x: &'a Matrix,
    targets: &'a [f64],
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    n_leaves: u32,
    feature_pool: Vec<u32>,
}

struct BestSplit {
    score: f64,
    feature: u32,
    threshold: f64,
}

impl Builder<'_> {
    fn build(&mut self, rows: Vec<u32>, depth: usize) -> u32 {
        let me = self.nodes.len() as u32;
        // placeholder so the root lands at index 0
        self.nodes.push(Node::Leaf { value: 0.0, id: 0 });

        if let Some(split) = self.find_split(&rows, depth) {
            let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                .iter()
                .partition(|&&r| self.x.get(r as usize, split.feature as usize) <= split.threshold);
            debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
            let left = self.build(left_rows, depth + 1);
            let right = self.build(right_rows, depth + 1);
            self.nodes[me as usize] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
        } else {
            let sum: f64 = rows.iter().map(|&r| self.targets[r as usize]).sum();
            self.nodes[me as usize] = Node::Leaf {
                value: sum / rows.len() as f64,
                id: self.n_leaves,
            };
            self.n_leaves += 1;
        }
        me
    }

    fn find_split(&mut self, rows: &[u32], depth: usize) -> Option<BestSplit> {
        let m = rows.len();
        if m < 2 * self.params.min_node_size {
            return None;
        }
        if let Some(limit) = self.params.max_depth {
            if depth >= limit {
                return None;
            }
        }
        let first = self.targets[rows[0] as usize];
        if rows
            .iter()
            .all(|&r| self.targets[r as usize] == first)
        {
            return None;
        }

        let total: f64 = rows.iter().map(|&r| self.targets[r as usize]).sum();
        let parent_score = total * total / m as f64;

        // mtry features without replacement, evaluated in ascending index
        // order so that strict comparisons implement the documented
        // tie-break (lowest feature, then lowest threshold).
        let p = self.feature_pool.len();
        let mtry = self.params.mtry.min(p);
        for j in 0..mtry {
            let swap = j + self.rng.random_range(0..p - j);
            self.feature_pool.swap(j, swap);
        }
        let mut chosen: Vec<u32> = self.feature_pool[..mtry].to_vec();
        chosen.sort_unstable();

        let min_child = self.params.min_node_size;
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
        for &feature in &chosen {
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| {
                (
                    self.x.get(r as usize, feature as usize),
                    self.targets[r as usize],
                )
            }));
            pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let mut left_sum = 0.0;
            for i in 0..m - 1 {
                left_sum += pairs[i].1;
                let n_left = i + 1;
                let n_right = m - n_left;
                if n_left < min_child || n_right < min_child {
                    continue;
                }
                let (lo, hi) = (pairs[i].0, pairs[i + 1].0);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / n_right as f64;
                if score <= parent_score {
                    continue; // split must reduce impurity
                }
                if best.as_ref().is_none_or(|b| score > b.score) {
                    // midpoint, nudged back onto `lo` if rounding reached `hi`
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        score,
                        feature,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_rows(values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    fn params_1d(min_node_size: usize) -> TreeParams {
        TreeParams {
            mtry: 1,
            min_node_size,
            max_depth: None,
            seed: 7,
        }
    }

    #[test]
    fn constant_responses_yield_single_leaf() {
        let x = col(&[1.0, 2.0, 3.0]);
        let t = fit(&x, &[0, 1, 2], &[4.5, 4.5, 4.5], &params_1d(1)).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&[-100.0]), 4.5);
        assert_eq!(t.leaf_id(&[100.0]), 0);
    }

    #[test]
    fn step_fixture_splits_between_2_and_3() {
        let x = col(&[1.0, 2.0, 3.0, 4.0]);
        let r = [0.0, 0.0, 10.0, 10.0];
        let t = fit(&x, &[0, 1, 2, 3], &r, &params_1d(1)).unwrap();
        match &t.nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 2.5),
            other => panic!("expected root split, got {other:?}"),
        }
        assert_eq!(t.predict(&[1.5]), 0.0);
        assert_eq!(t.predict(&[3.7]), 10.0);
        // on-threshold point routes left (tie rule)
        assert_eq!(t.predict(&[2.5]), 0.0);
        // points separated by the root split get distinct leaf ids
        assert_ne!(t.leaf_id(&[1.0]), t.leaf_id(&[4.0]));
        assert_eq!(t.leaf_id(&[1.0]), t.leaf_id(&[2.0]));
    }

    #[test]
    fn training_points_predict_their_leaf_mean() {
        let x = col(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = [0.0, 1.0, 9.0, 10.0, 11.0, 2.0];
        let t = fit(&x, &[0, 1, 2, 3, 4, 5], &r, &params_1d(2)).unwrap();
        // group rows by leaf and compare leaf value with the group mean
        let mut groups: std::collections::HashMap<u32, Vec<f64>> = Default::default();
        for (i, &ri) in r.iter().enumerate() {
            groups.entry(t.leaf_id(x.row(i))).or_default().push(ri);
        }
        for (leaf, values) in groups {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let x_any = (0..6).find(|&i| t.leaf_id(x.row(i)) == leaf).unwrap();
            assert!((t.predict(x.row(x_any)) - mean).abs() < 1e-12);
            assert!(values.len() >= 2, "min_node_size violated");
        }
    }

    /// Exhaustive oracle: best (feature, threshold) at the root by scanning
    /// every midpoint of every feature.
    fn exhaustive_root_split(x: &Matrix, r: &[f64], min_node: usize) -> Option<(u32, f64)> {
        let m = x.n_rows();
        let mut best: Option<(f64, u32, f64)> = None;
        for feat in 0..x.n_cols() {
            let mut vals: Vec<f64> = (0..m).map(|i| x.get(i, feat)).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let thr = 0.5 * (w[0] + w[1]);
                let thr = if thr >= w[1] { w[0] } else { thr };
                let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
                for (i, &ri) in r.iter().enumerate() {
                    if x.get(i, feat) <= thr {
                        ls += ri;
                        ln += 1;
                    } else {
                        rs += ri;
                        rn += 1;
                    }
                }
                if ln < min_node || rn < min_node {
                    continue;
                }
                let total: f64 = r.iter().sum();
                let parent = total * total / m as f64;
                let score = ls * ls / ln as f64 + rs * rs / rn as f64;
                if score <= parent {
                    continue;
                }
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, feat as u32, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    #[test]
    fn root_split_matches_exhaustive_oracle() {
        let fixtures: Vec<(Matrix, Vec<f64>)> = vec![
            (
                Matrix::from_rows(vec![
                    vec![0.0, 5.0],
                    vec![1.0, 4.0],
                    vec![2.0, 3.0],
                    vec![3.0, 2.0],
                    vec![4.0, 1.0],
                    vec![5.0, 0.0],
                ])
                .unwrap(),
                vec![1.0, 2.0, 1.5, 8.0, 9.0, 8.5],
            ),
            (
                Matrix::from_rows(vec![
                    vec![1.0, 1.0],
                    vec![2.0, 1.0],
                    vec![3.0, 7.0],
                    vec![4.0, 7.0],
                    vec![5.0, 7.5],
                ])
                .unwrap(),
                vec![-1.0, 4.0, 4.0, 4.0, -2.0],
            ),
        ];
        for (x, r) in fixtures {
            let rows: Vec<u32> = (0..x.n_rows() as u32).collect();
            let params = TreeParams {
                mtry: x.n_cols(), // consider every feature, like the oracle
                min_node_size: 1,
                max_depth: None,
                seed: 3,
            };
            let t = fit(&x, &rows, &r, &params).unwrap();
            let oracle = exhaustive_root_split(&x, &r, 1).unwrap();
            match &t.nodes()[0] {
                Node::Split {
                    feature, threshold, ..
                } => assert_eq!((*feature, *threshold), oracle),
                other => panic!("expected split, got {other:?}"),
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let x = Matrix::from_rows(
            (0..30)
                .map(|i| vec![(i % 7) as f64, (i % 5) as f64, i as f64 * 0.3])
                .collect(),
        )
        .unwrap();
        let r: Vec<f64> = (0..30).map(|i| ((i * 13) % 11) as f64).collect();
        let rows: Vec<u32> = (0..30).collect();
        let params = TreeParams {
            mtry: 2,
            min_node_size: 2,
            max_depth: Some(4),
            seed: 99,
        };
        let a = fit(&x, &rows, &r, &params).unwrap();
        let b = fit(&x, &rows, &r, &params).unwrap();
        assert_eq!(a, b);
        let c = fit(
            &x,
            &rows,
            &r,
            &TreeParams {
                seed: 100,
                ..params
            },
        )
        .unwrap();
        // a different seed is allowed to produce a different tree; the
        // contract is only that equal seeds agree
        let _ = c;
    }

    #[test]
    fn max_depth_zero_means_a_stump_less_tree() {
        let x = col(&[1.0, 2.0, 3.0, 4.0]);
        let t = fit(
            &x,
            &[0, 1, 2, 3],
            &[0.0, 0.0, 10.0, 10.0],
            &TreeParams {
                max_depth: Some(0),
                ..params_1d(1)
            },
        )
        .unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&[0.0]), 5.0);
    }

    #[test]
    fn error_paths() {
        let x = col(&[1.0, 2.0]);
        assert_eq!(
            fit(&x, &[], &[1.0, 2.0], &params_1d(1)),
            Err(TreeError::EmptySubsample)
        );
        assert_eq!(
            fit(&x, &[0, 1], &[1.0, f64::NAN], &params_1d(1)),
            Err(TreeError::NonFiniteResponse(1))
        );
        assert!(matches!(
            fit(
                &x,
                &[0, 1],
                &[1.0, 2.0],
                &TreeParams {
                    mtry: 5,
                    ..params_1d(1)
                }
            ),
            Err(TreeError::InvalidMtry { .. })
        ));
    }

    /// Mass conservation: at every internal node, the size-weighted mean of
    /// the child predictions over in-node training rows equals the node mean.
    #[test]
    fn node_means_are_conserved() {
        let x = Matrix::from_rows(
            (0..40)
                .map(|i| vec![((i * 7) % 13) as f64, ((i * 3) % 11) as f64])
                .collect(),
        )
        .unwrap();
        let r: Vec<f64> = (0..40).map(|i| ((i * 29) % 17) as f64 - 8.0).collect();
        let rows: Vec<u32> = (0..40).collect();
        let t = fit(
            &x,
            &rows,
            &r,
            &TreeParams {
                mtry: 2,
                min_node_size: 3,
                max_depth: None,
                seed: 11,
            },
        )
        .unwrap();

        // recover the per-node sample sets by routing every training row
        fn descend(
            tree: &Tree,
            node: usize,
            x: &Matrix,
            r: &[f64],
            rows: &[u32],
        ) -> (f64, usize) {
            match &tree.nodes()[node] {
                Node::Leaf { value, .. } => {
                    let sum: f64 = rows.iter().map(|&i| r[i as usize]).sum();
                    let mean = sum / rows.len() as f64;
                    assert!((mean - value).abs() < 1e-10, "leaf mean mismatch");
                    (sum, rows.len())
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let (l, rr): (Vec<u32>, Vec<u32>) = rows
                        .iter()
                        .partition(|&&i| x.get(i as usize, *feature as usize) <= *threshold);
                    let (ls, ln) = descend(tree, *left as usize, x, r, &l);
                    let (rs, rn) = descend(tree, *right as usize, x, r, &rr);
                    let node_sum: f64 = rows.iter().map(|&i| r[i as usize]).sum();
                    assert!(((ls + rs) - node_sum).abs() < 1e-9);
                    assert_eq!(ln + rn, rows.len());
                    (node_sum, rows.len())
                }
            }
        }
        descend(&t, 0, &x, &r, &rows);
    }
}
