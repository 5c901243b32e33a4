//! Fixed-point forest: 16-bit affine threshold codes per feature and 8-bit
//! leaf probabilities. An input vector is encoded once; traversal then only
//! compares integers.

use super::{AttackScorer, ForestModel, TreeNode};
use crate::error::{Error, Result};

/// `QNode::feature` value marking a leaf.
pub const LEAF_MARK: u8 = u8::MAX;

const CODE_MAX: f64 = u16::MAX as f64;
const PROB_MAX: f64 = u8::MAX as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QNode {
    /// Feature index, or `LEAF_MARK`.
    pub feature: u8,
    /// Threshold code for splits, probability code (low byte) for leaves.
    pub code: u16,
    pub right: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTree {
    pub nodes: Vec<QNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedForest {
    pub n_features: usize,
    pub schema_version: u16,
    /// Per-feature affine map: `value ≈ offset + code * scale`.
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    pub trees: Vec<QTree>,
}

impl QuantizedForest {
    pub fn encode(&self, feature: usize, v: f64) -> u16 {
        ((v - self.offset[feature]) / self.scale[feature])
            .round()
            .clamp(0.0, CODE_MAX) as u16
    }

    pub fn decode(&self, feature: usize, code: u16) -> f64 {
        self.offset[feature] + code as f64 * self.scale[feature]
    }

    pub fn decode_probability(code: u16) -> f64 {
        code as f64 / PROB_MAX
    }

    /// Encodes an input vector; values outside the training range land on
    /// the nearest edge code.
    pub fn encode_vector(&self, x: &[f64]) -> Result<Vec<u16>> {
        if x.len() != self.n_features {
            return Err(Error::FeatureSchemaMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(x.iter().enumerate().map(|(f, &v)| self.encode(f, v)).collect())
    }

    /// Sum of leaf probability codes over trees for an encoded input.
    pub fn vote_codes(&self, codes: &[u16]) -> u32 {
        let mut sum = 0u32;
        for tree in &self.trees {
            let nodes = &tree.nodes;
            let mut i = 0usize;
            loop {
                let n = nodes[i];
                if n.feature == LEAF_MARK {
                    sum += u32::from(n.code);
                    break;
                }
                i = if codes[n.feature as usize] <= n.code {
                    i + 1
                } else {
                    n.right as usize
                };
            }
        }
        sum
    }

    pub fn predict_quantized(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::FeatureSchemaMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut codes = [0u16; LEAF_MARK as usize];
        for (f, &v) in x.iter().enumerate() {
            codes[f] = self.encode(f, v);
        }
        Ok(self.vote_codes(&codes[..x.len()]) as f64 / (PROB_MAX * self.trees.len() as f64))
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}

impl AttackScorer for QuantizedForest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn attack_probability(&self, x: &[f64]) -> Result<f64> {
        self.predict_quantized(x)
    }
}

/// Scale is `(max - min) / 65535` over the training range of each feature; a
/// constant feature gets scale 1 so every value encodes to code 0.
pub fn quantize(model: &ForestModel) -> Result<QuantizedForest> {
    if model.n_features >= LEAF_MARK as usize {
        return Err(Error::InvalidConfig(format!(
            "quantized trees address at most {} features",
            LEAF_MARK
        )));
    }
    let offset = model.feature_min.clone();
    let scale: Vec<f64> = model
        .feature_min
        .iter()
        .zip(&model.feature_max)
        .map(|(lo, hi)| {
            let s = (hi - lo) / CODE_MAX;
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut q = QuantizedForest {
        n_features: model.n_features,
        schema_version: model.schema_version,
        offset,
        scale,
        trees: Vec::with_capacity(model.trees.len()),
    };
    for t in &model.trees {
        let nodes = t
            .nodes
            .iter()
            .map(|n| match *n {
                TreeNode::Split {
                    feature,
                    threshold,
                    right,
                } => QNode {
                    feature: feature as u8,
                    code: q.encode(feature, threshold),
                    right: right as u32,
                },
                TreeNode::Leaf { counts } => QNode {
                    feature: LEAF_MARK,
                    code: (model.leaf_probability(counts) * PROB_MAX).round() as u16,
                    right: 0,
                },
            })
            .collect();
        q.trees.push(QTree { nodes });
    }
    Ok(q)
}
