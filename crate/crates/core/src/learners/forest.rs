//! Random forest classifier with bootstrap bookkeeping for out-of-bag
//! prediction.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, LearnerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Fraction of positive labels among the in-bag samples reaching the leaf.
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Bootstrap draw for each tree as a sorted multiset of training row indices.
    pub bootstrap_in_bag: Vec<Vec<u32>>,
    pub params: ForestParams,
    pub n_train: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Mean over all trees.
    Regular,
    /// Mean over trees whose bootstrap excluded the training row.
    Oob,
}

/// Grows `params.n_trees` trees, each on its own bootstrap of the rows, with
/// Gini splits over `⌊√d⌋` features drawn per node. Tree `t` uses a generator
/// seeded by `(params.seed, t)`, so the result does not depend on scheduling.
pub fn fit_forest(x: ArrayView2<f64>, y: &[f64], params: &ForestParams) -> Result<ForestModel, LearnerError> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(LearnerError::Shape(format!("{} labels for {n} rows", y.len())));
    }
    if n < 2 {
        return Err(LearnerError::Input("forest needs at least 2 samples".into()));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(LearnerError::Input("n_trees and min_leaf must be >= 1".into()));
    }
    if d == 0 {
        return Err(LearnerError::Input("forest needs at least one feature".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::Input("NaN or infinite value in design".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(LearnerError::Input("labels must be 0 or 1".into()));
    }
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let labels: Vec<bool> = y.iter().map(|&v| v == 1.0).collect();
    let max_features = ((d as f64).sqrt().floor() as usize).max(1);

    let built: Vec<(Tree, Vec<u32>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let mut bag: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            bag.sort_unstable();
            let builder = TreeBuilder {
                rows: &rows,
                labels: &labels,
                max_depth: params.max_depth.unwrap_or(usize::MAX),
                min_leaf: params.min_leaf,
                max_features,
            };
            let tree = builder.build(bag.iter().map(|&i| i as usize).collect(), &mut rng);
            (tree, bag)
        })
        .collect();
    let (trees, bootstrap_in_bag) = built.into_iter().unzip();
    Ok(ForestModel {
        trees,
        bootstrap_in_bag,
        params: *params,
        n_train: n,
        n_features: d,
    })
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [bool],
    max_depth: usize,
    min_leaf: usize,
    max_features: usize,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn build(&self, samples: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stack = vec![(0usize, samples, 0usize)];
        while let Some((slot, samples, depth)) = stack.pop() {
            let positives = samples.iter().filter(|&&i| self.labels[i]).count();
            let value = positives as f64 / samples.len() as f64;
            let pure = positives == 0 || positives == samples.len();
            if pure || depth >= self.max_depth || samples.len() < 2 * self.min_leaf {
                nodes[slot] = Node::Leaf { value };
                continue;
            }
            match self.best_split(&samples, positives, rng) {
                None => nodes[slot] = Node::Leaf { value },
                Some(split) => {
                    let (left, right): (Vec<usize>, Vec<usize>) = samples
                        .into_iter()
                        .partition(|&i| self.rows[i][split.feature] <= split.threshold);
                    let l = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[slot] = Node::Split {
                        feature: split.feature,
                        threshold: split.threshold,
                        left: l,
                        right: l + 1,
                    };
                    stack.push((l + 1, right, depth + 1));
                    stack.push((l, left, depth + 1));
                }
            }
        }
        Tree { nodes }
    }

    /// Visits features in random order until `max_features` non-constant ones
    /// have been evaluated, keeping the split with the largest Gini decrease.
    fn best_split(&self, samples: &[usize], positives: usize, rng: &mut ChaCha8Rng) -> Option<SplitChoice> {
        let d = self.rows[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let total = samples.len() as f64;
        let parent = gini(positives as f64, total);
        let mut best: Option<SplitChoice> = None;
        let mut evaluated = 0;
        let mut column: Vec<(f64, bool)> = Vec::with_capacity(samples.len());
        for f in features {
            if evaluated >= self.max_features {
                break;
            }
            column.clear();
            column.extend(samples.iter().map(|&i| (self.rows[i][f], self.labels[i])));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            if column[0].0 == column[column.len() - 1].0 {
                continue;
            }
            evaluated += 1;
            let mut left_pos = 0.0;
            for k in 0..column.len() - 1 {
                if column[k].1 {
                    left_pos += 1.0;
                }
                if column[k].0 == column[k + 1].0 {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = total - nl;
                if (k + 1) < self.min_leaf || column.len() - (k + 1) < self.min_leaf {
                    continue;
                }
                let child = (nl * gini(left_pos, nl) + nr * gini(positives as f64 - left_pos, nr)) / total;
                let gain = parent - child;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = 0.5 * (column[k].0 + column[k + 1].0);
                    if threshold >= column[k + 1].0 {
                        threshold = column[k].0;
                    }
                    best = Some(SplitChoice { feature: f, threshold, gain });
                }
            }
        }
        best
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

impl ForestModel {
    /// Per-tree in-bag masks over the training rows.
    fn in_bag_masks(&self) -> Vec<Vec<bool>> {
        self.bootstrap_in_bag
            .iter()
            .map(|bag| {
                let mut mask = vec![false; self.n_train];
                for &i in bag {
                    mask[i as usize] = true;
                }
                mask
            })
            .collect()
    }

    /// Number of trees whose bootstrap excluded each training row.
    pub fn oob_tree_counts(&self) -> Vec<usize> {
        let mut counts = vec![self.trees.len(); self.n_train];
        for mask in self.in_bag_masks() {
            for (c, in_bag) in counts.iter_mut().zip(mask) {
                if in_bag {
                    *c -= 1;
                }
            }
        }
        counts
    }

    /// Out-of-bag mean for rows of `x` that are training rows `train_index[r]`.
    /// Rows whose every tree saw them in-bag get `None`.
    pub fn predict_oob(&self, x: ArrayView2<f64>, train_index: &[usize]) -> Result<Vec<Option<f64>>, LearnerError> {
        if train_index.len() != x.nrows() {
            return Err(LearnerError::Shape(format!(
                "{} training indices for {} rows",
                train_index.len(),
                x.nrows()
            )));
        }
        if let Some(&bad) = train_index.iter().find(|&&i| i >= self.n_train) {
            return Err(LearnerError::UnknownTrainingRow(bad));
        }
        let masks = self.in_bag_masks();
        Ok(x.rows()
            .into_iter()
            .zip(train_index)
            .map(|(row, &idx)| {
                let row = row.to_vec();
                let (sum, count) = self
                    .trees
                    .iter()
                    .zip(&masks)
                    .filter(|(_, mask)| !mask[idx])
                    .fold((0.0, 0usize), |(s, c), (tree, _)| (s + tree.predict_row(&row), c + 1));
                (count > 0).then(|| sum / count as f64)
            })
            .collect())
    }
}

impl Classifier for ForestModel {
    fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let n_trees = self.trees.len() as f64;
        x.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() / n_trees
            })
            .collect()
    }
}

/// Forest predictions in either mode; regular predictions are never missing.
pub fn predict_forest(
    forest: &ForestModel,
    x: ArrayView2<f64>,
    mode: PredictionMode,
    train_index: Option<&[usize]>,
) -> Result<Vec<Option<f64>>, LearnerError> {
    match mode {
        PredictionMode::Regular => Ok(forest.predict_proba(x).into_iter().map(Some).collect()),
        PredictionMode::Oob => {
            let idx = train_index.ok_or_else(|| {
                LearnerError::Input("out-of-bag prediction needs training row indices".into())
            })?;
            forest.predict_oob(x, idx)
        }
    }
}
