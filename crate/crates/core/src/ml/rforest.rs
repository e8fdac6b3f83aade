// SPDX-License-Identifier: Apache-2.0

//! Random-forest classifier for binary occupancy.
//!
//! Trees are grown on bootstrap samples; each node draws `floor(sqrt(d))`
//! candidate features without replacement and takes the threshold that
//! minimizes the weighted Gini impurity of the children. Prediction is a
//! majority vote with ties going to class 0.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::iforest::check_rows;
use super::ModelError;
use crate::seed;

pub const N_ESTIMATORS_GRID: [usize; 3] = [50, 100, 200];
pub const MAX_DEPTH_GRID: [Option<usize>; 3] = [Some(5), Some(10), None];
pub const MIN_SAMPLES_SPLIT_GRID: [usize; 3] = [2, 5, 10];

/// `1 - Σ p_c²` over class counts.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomForestParams {
    pub n_estimators: usize,
    /// `None` grows until purity or `min_samples_split`.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for RandomForestParams {
    fn default() -> Self {
        Self { n_estimators: 100, max_depth: Some(10), min_samples_split: 2 }
    }
}

impl RandomForestParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_estimators == 0 {
            return Err(ModelError::InvalidParameter("n_estimators must be positive".into()));
        }
        if self.max_depth == Some(0) {
            return Err(ModelError::InvalidParameter("max_depth must be positive".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ModelError::InvalidParameter("min_samples_split must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { counts: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTree {
    nodes: Vec<TreeNode>,
}

impl ClassificationTree {
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::InvalidParameter("tree has no nodes".into()));
        }
        for n in &nodes {
            match n {
                TreeNode::Split { left, right, .. } if *left >= nodes.len() || *right >= nodes.len() => {
                    return Err(ModelError::InvalidParameter("dangling child index".into()));
                }
                TreeNode::Leaf { counts } if counts[0] + counts[1] == 0 => {
                    return Err(ModelError::InvalidParameter("empty leaf".into()));
                }
                _ => {}
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_counts(&self, row: &[f64]) -> [usize; 2] {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                TreeNode::Split { feature, threshold, left, right } => {
                    idx = if row[feature] <= threshold { left } else { right };
                }
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    /// Leaf majority; ties go to class 0.
    pub fn vote(&self, row: &[f64]) -> u8 {
        let c = self.leaf_counts(row);
        u8::from(c[1] > c[0])
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Per-column standardization applied before the trees see a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 { var.sqrt() } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub params: RandomForestParams,
    pub feature_count: usize,
    pub class_labels: [u8; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Standardizer>,
    pub trees: Vec<ClassificationTree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    /// Mean over trees of the leaf's class-1 frequency.
    pub probability: f64,
}

impl RandomForestModel {
    pub fn fit(rows: &[Vec<f64>], labels: &[u8], params: RandomForestParams, rng_seed: u64) -> Result<Self, ModelError> {
        params.validate()?;
        let d = check_rows(rows)?;
        if rows.len() != labels.len() {
            return Err(ModelError::LengthMismatch(rows.len(), labels.len()));
        }
        if rows.len() < 2 {
            return Err(ModelError::InvalidParameter("need at least 2 rows".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(ModelError::InvalidParameter(format!("label {bad} is not 0/1")));
        }
        if labels.iter().all(|&l| l == labels[0]) {
            log::warn!("random forest: single-class training data, trees will be single leaves");
        }
        let n = rows.len();
        let mtry = ((d as f64).sqrt().floor() as usize).max(1);
        let trees = (0..params.n_estimators)
            .map(|t| {
                let mut rng = seed::rng(seed::derive_indexed(rng_seed, "rforest/tree", t));
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut b = Builder { rows, labels, params: &params, mtry, rng, nodes: Vec::new() };
                b.grow(sample, 0);
                ClassificationTree { nodes: b.nodes }
            })
            .collect();
        Ok(Self { params, feature_count: d, class_labels: [0, 1], scaling: None, trees })
    }

    /// Fits on standardized columns and keeps the standardizer for prediction.
    pub fn fit_standardized(rows: &[Vec<f64>], labels: &[u8], params: RandomForestParams, rng_seed: u64) -> Result<Self, ModelError> {
        check_rows(rows)?;
        let scaler = Standardizer::fit(rows);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| scaler.apply(r)).collect();
        let mut model = Self::fit(&scaled, labels, params, rng_seed)?;
        model.scaling = Some(scaler);
        Ok(model)
    }

    pub fn from_trees(trees: Vec<ClassificationTree>, feature_count: usize, params: RandomForestParams) -> Self {
        Self { params, feature_count, class_labels: [0, 1], scaling: None, trees }
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction, ModelError> {
        if row.len() != self.feature_count {
            return Err(ModelError::DimensionMismatch { expected: self.feature_count, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        let scaled;
        let x = match &self.scaling {
            Some(s) => {
                scaled = s.apply(row);
                &scaled[..]
            }
            None => row,
        };
        let mut votes = 0usize;
        let mut prob = 0.0;
        for t in &self.trees {
            let c = t.leaf_counts(x);
            votes += usize::from(c[1] > c[0]);
            prob += c[1] as f64 / (c[0] + c[1]) as f64;
        }
        let n = self.trees.len();
        Ok(Prediction {
            label: u8::from(2 * votes > n),
            probability: prob / n as f64,
        })
    }
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [u8],
    params: &'a RandomForestParams,
    mtry: usize,
    rng: seed::Rng,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let ones = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        [idx.len() - ones, ones]
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_reached = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || idx.len() < self.params.min_samples_split || depth_reached {
            return id;
        }
        let d = self.rows[0].len();
        let features = index::sample(&mut self.rng, d, self.mtry.min(d)).into_vec();
        let Some((feature, threshold)) = self.best_split(&idx, &features) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.rows[i][feature] <= threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = TreeNode::Split { feature, threshold, left: l, right: r };
        id
    }

    /// Lowest weighted child Gini over candidate features; thresholds sit
    /// between consecutive distinct values. Earlier candidates win ties.
    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<(usize, f64)> {
        let total = self.counts(idx);
        let n = idx.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let mut left = [0usize; 2];
            for k in 0..order.len() - 1 {
                left[usize::from(self.labels[order[k]])] += 1;
                let (a, b) = (self.rows[order[k]][f], self.rows[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let nl = (k + 1) as f64;
                let score = (nl * gini(&left) + (n - nl) * gini(&right)) / n;
                if best.map_or(true, |(s, _, _)| score < s) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
