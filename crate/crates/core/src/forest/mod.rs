//! Random-forest attack classifier: CART trees on class-weighted Gini,
//! cost-complexity pruning, and a fixed-point inference form.
//!
//! Trees are stored as flat node arrays in preorder: an internal node's left
//! child is always the next node, its right child is referenced by index.
//! Samples with `x[feature] <= threshold` go left.

mod io;
mod prune;
mod quantize;
mod train;

pub use io::{load_forest, load_forest_for_schema, load_quantized, load_scorer, save_forest, save_quantized};
pub use prune::{prune, prune_with_alpha, DEFAULT_ALPHA_GRID};
pub use quantize::{quantize, QNode, QTree, QuantizedForest, LEAF_MARK};
pub use train::{train, Dataset};

use crate::error::{Error, Result};

pub const BENIGN: usize = 0;
pub const ATTACK: usize = 1;

/// Anything that maps a feature vector to an attack probability.
pub trait AttackScorer: Send + Sync {
    fn n_features(&self) -> usize;
    fn attack_probability(&self, x: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// `None` means `ceil(sqrt(n_features))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub prune_alpha: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 5,
            features_per_split: None,
            bootstrap: true,
            prune_alpha: 0.0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig(
                "n_trees, max_depth and min_samples_leaf must be >= 1".into(),
            ));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidConfig("features_per_split must be >= 1".into()));
        }
        if !(self.prune_alpha >= 0.0) {
            return Err(Error::InvalidConfig("prune_alpha must be >= 0".into()));
        }
        Ok(())
    }

    pub fn split_features(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Index of the right child; the left child is the next node.
        right: usize,
    },
    Leaf {
        /// Training sample counts as `[benign, attack]`.
        counts: [u32; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(counts: [u32; 2]) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { counts }],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_for(&self, x: &[f64]) -> [u32; 2] {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    i = if x[feature] <= threshold { i + 1 } else { right };
                }
            }
        }
    }

    /// Checks the preorder layout and feature bounds.
    pub(crate) fn check(&self, n_features: usize) -> std::result::Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        fn walk(t: &Tree, i: usize, n_features: usize, depth: usize) -> std::result::Result<usize, String> {
            if depth > 4096 {
                return Err("tree too deep".into());
            }
            match t.nodes.get(i) {
                None => Err(format!("node index {i} out of range")),
                Some(TreeNode::Leaf { counts }) => {
                    if counts[0] == 0 && counts[1] == 0 {
                        return Err("leaf with no samples".into());
                    }
                    Ok(i + 1)
                }
                Some(TreeNode::Split {
                    feature, right, threshold, ..
                }) => {
                    if *feature >= n_features {
                        return Err(format!("feature {feature} >= {n_features}"));
                    }
                    if !threshold.is_finite() {
                        return Err("non-finite threshold".into());
                    }
                    let left_end = walk(t, i + 1, n_features, depth + 1)?;
                    if left_end != *right {
                        return Err(format!("node {i}: right child {right} is not at {left_end}"));
                    }
                    walk(t, *right, n_features, depth + 1)
                }
            }
        }
        let end = walk(self, 0, n_features, 0)?;
        if end != self.nodes.len() {
            return Err("unreachable trailing nodes".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub schema_version: u16,
    pub params: ForestParams,
    pub training_seed: u64,
    /// Training-set class sizes, `[benign, attack]`.
    pub class_counts: [u64; 2],
    /// Gini and pruning weights, inverse to class frequency.
    pub class_weights: [f64; 2],
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
}

impl ForestModel {
    /// Training saw only one class, so the model can only ever predict it.
    pub fn is_degenerate(&self) -> bool {
        self.class_counts.contains(&0)
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(Tree::node_count).sum()
    }

    /// Attack frequency among the training samples that reached a leaf.
    pub(crate) fn leaf_probability(&self, counts: [u32; 2]) -> f64 {
        let total = counts[BENIGN] + counts[ATTACK];
        if total > 0 {
            counts[ATTACK] as f64 / total as f64
        } else {
            0.0
        }
    }

    pub fn tree_probability(&self, tree: usize, x: &[f64]) -> f64 {
        self.leaf_probability(self.trees[tree].leaf_for(x))
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::FeatureSchemaMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Mean over trees of the attack frequency in the leaf reached by `x`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.check_width(x)?;
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| self.leaf_probability(t.leaf_for(x)))
            .sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict(&self, x: &[f64], threshold: f64) -> Result<bool> {
        Ok(self.predict_proba(x)? >= threshold)
    }
}

impl AttackScorer for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn attack_probability(&self, x: &[f64]) -> Result<f64> {
        self.predict_proba(x)
    }
}
