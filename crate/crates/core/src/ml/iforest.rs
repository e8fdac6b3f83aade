// SPDX-License-Identifier: Apache-2.0

//! Isolation forest.
//!
//! Each tree is grown on a uniform subsample of size `ψ` by choosing a random
//! feature and a split value uniform in the node's range on that feature,
//! until the height limit `ceil(log2 ψ)` or a single row remains. The anomaly
//! score of `x` is `2^(-E[h(x)] / c(ψ))` where `h` is the path length plus
//! the `c(leaf_size)` adjustment and `c(n)` is the average unsuccessful-search
//! path length of a binary search tree.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::seed;

pub const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Average path length of an unsuccessful BST search over `n` items.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolationForestParams {
    pub n_estimators: usize,
    pub max_samples_fraction: f64,
    pub contamination: f64,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        Self { n_estimators: 100, max_samples_fraction: 0.8, contamination: 0.05 }
    }
}

impl IsolationForestParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_estimators == 0 {
            return Err(ModelError::InvalidParameter("n_estimators must be positive".into()));
        }
        if !(self.max_samples_fraction > 0.0 && self.max_samples_fraction <= 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "max_samples_fraction must be in (0, 1], got {}",
                self.max_samples_fraction
            )));
        }
        if !(self.contamination > 0.0 && self.contamination < 0.5) {
            return Err(ModelError::InvalidParameter(format!(
                "contamination must be in (0, 0.5), got {}",
                self.contamination
            )));
        }
        Ok(())
    }

    /// `ψ = max(2, round(fraction · n))`.
    pub fn subsample_size(&self, n_rows: usize) -> usize {
        ((self.max_samples_fraction * n_rows as f64).round() as usize).max(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum IsolationNode {
    Split { feature: usize, value: f64, left: usize, right: usize },
    Leaf { size: usize },
}

/// Arena of nodes; index 0 is the root. Rows with `x[feature] < value` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    nodes: Vec<IsolationNode>,
}

impl IsolationTree {
    /// Builds a tree from explicit nodes, checking child links.
    pub fn from_nodes(nodes: Vec<IsolationNode>) -> Result<Self, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::InvalidParameter("tree has no nodes".into()));
        }
        for n in &nodes {
            if let IsolationNode::Split { left, right, .. } = n {
                if *left >= nodes.len() || *right >= nodes.len() {
                    return Err(ModelError::InvalidParameter("dangling child index".into()));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[IsolationNode] {
        &self.nodes
    }

    /// Path length for `row`, including the leaf-size adjustment.
    pub fn path_length(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[idx] {
                IsolationNode::Split { feature, value, left, right } => {
                    idx = if row[feature] < value { left } else { right };
                    depth += 1;
                }
                IsolationNode::Leaf { size } => return depth as f64 + average_path_length(size),
            }
        }
    }

    pub fn height(&self) -> usize {
        fn walk(nodes: &[IsolationNode], i: usize) -> usize {
            match nodes[i] {
                IsolationNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                IsolationNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    fn grow(rows: &[Vec<f64>], sample: Vec<usize>, height_limit: usize, rng: &mut seed::Rng) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.grow_node(rows, sample, 0, height_limit, rng);
        tree
    }

    fn grow_node(
        &mut self,
        rows: &[Vec<f64>],
        sample: Vec<usize>,
        depth: usize,
        height_limit: usize,
        rng: &mut seed::Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(IsolationNode::Leaf { size: sample.len() });
        if depth >= height_limit || sample.len() <= 1 {
            return id;
        }
        // Only features that actually vary inside the node can split it.
        let n_features = rows[sample[0]].len();
        let ranges: Vec<(usize, f64, f64)> = (0..n_features)
            .filter_map(|f| {
                let (lo, hi) = sample.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(rows[i][f]), hi.max(rows[i][f]))
                });
                (lo < hi).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let mut value = rng.random_range(lo..hi);
        if value <= lo {
            // keeps both sides non-empty
            value = lo + (hi - lo) * 0.5;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = sample.into_iter().partition(|&i| rows[i][feature] < value);
        let l = self.grow_node(rows, left, depth + 1, height_limit, rng);
        let r = self.grow_node(rows, right, depth + 1, height_limit, rng);
        self.nodes[id] = IsolationNode::Split { feature, value, left: l, right: r };
        id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    Anomaly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub params: IsolationForestParams,
    pub feature_count: usize,
    /// Subsample size ψ each tree was grown on.
    pub subsample_size: usize,
    /// `(1 - contamination)` quantile of the training scores.
    pub score_threshold: f64,
    pub trees: Vec<IsolationTree>,
}

impl IsolationForestModel {
    pub fn fit(rows: &[Vec<f64>], params: IsolationForestParams, rng_seed: u64) -> Result<Self, ModelError> {
        params.validate()?;
        let feature_count = check_rows(rows)?;
        let n = rows.len();
        let psi = params.subsample_size(n);
        let height_limit = (psi as f64).log2().ceil() as usize;

        let trees = (0..params.n_estimators)
            .map(|t| {
                let mut rng = seed::rng(seed::derive_indexed(rng_seed, "iforest/tree", t));
                let sample: Vec<usize> = if psi <= n {
                    index::sample(&mut rng, n, psi).into_vec()
                } else {
                    (0..psi).map(|_| rng.random_range(0..n)).collect()
                };
                IsolationTree::grow(rows, sample, height_limit, &mut rng)
            })
            .collect();

        let mut model = Self {
            params,
            feature_count,
            subsample_size: psi,
            score_threshold: 0.5,
            trees,
        };
        let scores: Vec<f64> = rows.iter().map(|r| model.score_unchecked(r)).collect();
        if scores.windows(2).all(|w| w[0] == w[1]) {
            log::warn!("isolation forest: all training scores are equal; threshold is degenerate");
        }
        model.score_threshold = quantile(&scores, 1.0 - params.contamination);
        Ok(model)
    }

    /// Builds a model from explicit trees (threshold supplied by the caller).
    pub fn from_trees(
        trees: Vec<IsolationTree>,
        feature_count: usize,
        subsample_size: usize,
        params: IsolationForestParams,
        score_threshold: f64,
    ) -> Self {
        Self { params, feature_count, subsample_size, score_threshold, trees }
    }

    pub fn mean_path_length(&self, row: &[f64]) -> Result<f64, ModelError> {
        self.check(row)?;
        Ok(self.mean_path_unchecked(row))
    }

    fn mean_path_unchecked(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(row)).sum::<f64>() / self.trees.len() as f64
    }

    fn score_unchecked(&self, row: &[f64]) -> f64 {
        let c = average_path_length(self.subsample_size);
        2f64.powf(-self.mean_path_unchecked(row) / c)
    }

    /// Anomaly score in (0, 1); higher is more anomalous.
    pub fn score(&self, row: &[f64]) -> Result<f64, ModelError> {
        self.check(row)?;
        Ok(self.score_unchecked(row))
    }

    /// Anomaly iff the score is strictly above the fitted threshold.
    pub fn classify(&self, row: &[f64]) -> Result<Verdict, ModelError> {
        Ok(if self.score(row)? > self.score_threshold { Verdict::Anomaly } else { Verdict::Normal })
    }

    fn check(&self, row: &[f64]) -> Result<(), ModelError> {
        if row.len() != self.feature_count {
            return Err(ModelError::DimensionMismatch { expected: self.feature_count, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        Ok(())
    }
}

pub(crate) fn check_rows(rows: &[Vec<f64>]) -> Result<usize, ModelError> {
    let first = rows.first().ok_or(ModelError::EmptyData)?;
    let d = first.len();
    if d == 0 {
        return Err(ModelError::InvalidParameter("rows need at least one feature".into()));
    }
    for r in rows {
        if r.len() != d {
            return Err(ModelError::DimensionMismatch { expected: d, got: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
    }
    Ok(d)
}

/// Linearly interpolated quantile of unsorted values, `q` in [0, 1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
