//! Minimal cost-complexity pruning.
//!
//! For a penalty `alpha`, a subtree `T_t` rooted at `t` collapses into a leaf
//! when `R(t) - R(T_t) <= alpha * (|leaves(T_t)| - 1)`, where `R` is the
//! class-weighted training misclassification mass divided by the tree's
//! total weighted mass. Applied bottom-up this yields the smallest subtree
//! minimizing `R(T) + alpha * |leaves(T)|`.

use rayon::prelude::*;

use super::{Dataset, ForestModel, Tree, TreeNode, ATTACK, BENIGN};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA_GRID: [f64; 8] = [0.0, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2];

const RISK_EPS: f64 = 1e-12;

struct Sub {
    /// Subtree in preorder with indices relative to its own root.
    nodes: Vec<TreeNode>,
    counts: [u32; 2],
    risk: f64,
    leaves: usize,
}

struct Pruner {
    weights: [f64; 2],
    total: f64,
    alpha: f64,
}

impl Pruner {
    fn leaf_risk(&self, counts: [u32; 2]) -> f64 {
        let b = self.weights[BENIGN] * counts[BENIGN] as f64;
        let a = self.weights[ATTACK] * counts[ATTACK] as f64;
        b.min(a) / self.total
    }

    fn walk(&self, tree: &Tree, i: usize) -> Sub {
        match tree.nodes[i] {
            TreeNode::Leaf { counts } => Sub {
                nodes: vec![TreeNode::Leaf { counts }],
                counts,
                risk: self.leaf_risk(counts),
                leaves: 1,
            },
            TreeNode::Split {
                feature,
                threshold,
                right,
            } => {
                let l = self.walk(tree, i + 1);
                let r = self.walk(tree, right);
                let counts = [
                    l.counts[BENIGN] + r.counts[BENIGN],
                    l.counts[ATTACK] + r.counts[ATTACK],
                ];
                let sub_risk = l.risk + r.risk;
                let leaves = l.leaves + r.leaves;
                let node_risk = self.leaf_risk(counts);
                if node_risk - sub_risk <= self.alpha * (leaves - 1) as f64 + RISK_EPS {
                    return Sub {
                        nodes: vec![TreeNode::Leaf { counts }],
                        counts,
                        risk: node_risk,
                        leaves: 1,
                    };
                }
                let right_at = 1 + l.nodes.len();
                let mut nodes = Vec::with_capacity(right_at + r.nodes.len());
                nodes.push(TreeNode::Split {
                    feature,
                    threshold,
                    right: right_at,
                });
                nodes.extend(l.nodes.into_iter().map(|n| shift(n, 1)));
                nodes.extend(r.nodes.into_iter().map(|n| shift(n, right_at)));
                Sub {
                    nodes,
                    counts,
                    risk: sub_risk,
                    leaves,
                }
            }
        }
    }
}

fn shift(n: TreeNode, by: usize) -> TreeNode {
    match n {
        TreeNode::Split {
            feature,
            threshold,
            right,
        } => TreeNode::Split {
            feature,
            threshold,
            right: right + by,
        },
        leaf => leaf,
    }
}

fn root_counts(tree: &Tree) -> [u32; 2] {
    tree.nodes.iter().fold([0, 0], |acc, n| match n {
        TreeNode::Leaf { counts } => [acc[0] + counts[0], acc[1] + counts[1]],
        TreeNode::Split { .. } => acc,
    })
}

/// Prunes every tree at a fixed penalty. `alpha == 0` returns the model
/// unchanged.
pub fn prune_with_alpha(model: &ForestModel, alpha: f64) -> ForestModel {
    let mut out = model.clone();
    out.params.prune_alpha = alpha;
    if alpha <= 0.0 {
        return out;
    }
    out.trees = model
        .trees
        .par_iter()
        .map(|t| {
            let c = root_counts(t);
            let total = model.class_weights[BENIGN] * c[BENIGN] as f64
                + model.class_weights[ATTACK] * c[ATTACK] as f64;
            let p = Pruner {
                weights: model.class_weights,
                total,
                alpha,
            };
            Tree {
                nodes: p.walk(t, 0).nodes,
            }
        })
        .collect();
    out
}

fn validation_errors(model: &ForestModel, validation: &Dataset) -> Result<usize> {
    let mut errors = 0;
    for i in 0..validation.len() {
        if model.predict(validation.row(i), 0.5)? != validation.label(i) {
            errors += 1;
        }
    }
    Ok(errors)
}

/// Picks the penalty from `alpha_grid` with the fewest validation errors,
/// preferring the larger penalty on ties, and returns the model pruned at
/// it.
pub fn prune(model: &ForestModel, validation: &Dataset, alpha_grid: &[f64]) -> Result<ForestModel> {
    if validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    if validation.n_features() != model.n_features {
        return Err(Error::FeatureSchemaMismatch {
            expected: model.n_features,
            found: validation.n_features(),
        });
    }
    let mut grid: Vec<f64> = alpha_grid.iter().copied().filter(|a| *a >= 0.0).collect();
    if grid.is_empty() {
        return Err(Error::InvalidConfig("alpha grid has no non-negative value".into()));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut best: Option<(usize, ForestModel)> = None;
    for alpha in grid {
        let candidate = prune_with_alpha(model, alpha);
        let errors = validation_errors(&candidate, validation)?;
        if best.as_ref().is_none_or(|(e, _)| errors <= *e) {
            best = Some((errors, candidate));
        }
    }
    Ok(best.expect("grid is non-empty").1)
}
