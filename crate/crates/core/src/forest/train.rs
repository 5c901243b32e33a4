use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ForestModel, ForestParams, Tree, TreeNode, ATTACK, BENIGN};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_SCHEMA_VERSION};

/// Impurity decreases closer than this are treated as equal, and the
/// earlier candidate (lower feature index, then lower threshold) wins.
pub(crate) const TIE_EPS: f64 = 1e-12;

/// Row-major training matrix with binary labels (`true` = attack).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    values: Vec<f64>,
    labels: Vec<bool>,
}

impl Dataset {
    pub fn new(rows: &[Vec<f64>], labels: &[bool]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        let n_features = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for r in rows {
            if r.len() != n_features {
                return Err(Error::FeatureSchemaMismatch {
                    expected: n_features,
                    found: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::ContractViolation("non-finite feature value".into()));
            }
            values.extend_from_slice(r);
        }
        Ok(Dataset {
            n_features,
            values,
            labels: labels.to_vec(),
        })
    }

    /// Every vector must carry a label.
    pub fn from_vectors(vectors: &[FeatureVector]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.to_vec()).collect();
        let labels = vectors
            .iter()
            .map(|v| {
                v.label.map(|l| l.is_attack()).ok_or_else(|| {
                    Error::ContractViolation(format!(
                        "unlabeled window {}@{}",
                        v.device, v.window_start
                    ))
                })
            })
            .collect::<Result<Vec<bool>>>()?;
        Dataset::new(&rows, &labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> bool {
        self.labels[i]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    fn value(&self, i: usize, f: usize) -> f64 {
        self.values[i * self.n_features + f]
    }

    pub fn class_counts(&self) -> [u64; 2] {
        let a = self.labels.iter().filter(|&&l| l).count() as u64;
        [self.len() as u64 - a, a]
    }
}

/// Weights inverse to class frequency, normalized so a balanced set gets 1.
pub(crate) fn class_weights(counts: [u64; 2]) -> [f64; 2] {
    if counts.contains(&0) {
        return [1.0, 1.0];
    }
    let n = (counts[0] + counts[1]) as f64;
    [n / (2.0 * counts[0] as f64), n / (2.0 * counts[1] as f64)]
}

pub(crate) fn gini(wb: f64, wa: f64) -> f64 {
    let w = wb + wa;
    if w <= 0.0 {
        return 0.0;
    }
    1.0 - (wb * wb + wa * wa) / (w * w)
}

/// Midpoint of two adjacent distinct values that still sends `lo` left and
/// `hi` right.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

pub(crate) fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

struct Builder<'a> {
    data: &'a Dataset,
    params: &'a ForestParams,
    weights: [f64; 2],
    k: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    buf: Vec<(f64, bool)>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [u32; 2] {
        let a = idx.iter().filter(|&&i| self.data.label(i)).count() as u32;
        [idx.len() as u32 - a, a]
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) {
        let counts = self.counts(idx);
        let pure = counts[BENIGN] == 0 || counts[ATTACK] == 0;
        let too_small = idx.len() < 2 * self.params.min_samples_leaf;
        let split = if depth >= self.params.max_depth || pure || too_small {
            None
        } else {
            self.best_split(idx, counts)
        };
        let Some((feature, threshold)) = split else {
            self.nodes.push(TreeNode::Leaf { counts });
            return;
        };

        let me = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature,
            threshold,
            right: 0,
        });
        let mut n_left = 0;
        for j in 0..idx.len() {
            if self.data.value(idx[j], feature) <= threshold {
                idx.swap(n_left, j);
                n_left += 1;
            }
        }
        let (left, right) = idx.split_at_mut(n_left);
        self.build(left, depth + 1);
        let right_at = self.nodes.len();
        if let TreeNode::Split { right, .. } = &mut self.nodes[me] {
            *right = right_at;
        }
        self.build(right, depth + 1);
    }

    /// Best (feature, threshold) over a random feature subset, or `None`
    /// when no admissible split lowers the weighted Gini impurity.
    fn best_split(&mut self, idx: &[usize], counts: [u32; 2]) -> Option<(usize, f64)> {
        let d = self.data.n_features();
        let mut features = index::sample(&mut self.rng, d, self.k).into_vec();
        features.sort_unstable();

        let [wb, wa] = self.weights;
        let total_b = wb * counts[BENIGN] as f64;
        let total_a = wa * counts[ATTACK] as f64;
        let total = total_b + total_a;
        let parent = gini(total_b, total_a);
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf;

        let mut best: Option<(f64, usize, f64)> = None;
        for f in features {
            self.buf.clear();
            self.buf
                .extend(idx.iter().map(|&i| (self.data.value(i, f), self.data.label(i))));
            self.buf.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left = [0u32; 2];
            for i in 0..n - 1 {
                left[usize::from(self.buf[i].1)] += 1;
                let n_left = i + 1;
                if n_left < min_leaf {
                    continue;
                }
                if n - n_left < min_leaf {
                    break;
                }
                let (lo, hi) = (self.buf[i].0, self.buf[i + 1].0);
                if lo >= hi {
                    continue;
                }
                let lb = wb * left[BENIGN] as f64;
                let la = wa * left[ATTACK] as f64;
                let rb = total_b - lb;
                let ra = total_a - la;
                let wl = lb + la;
                let wr = rb + ra;
                let decrease = parent - (wl / total) * gini(lb, la) - (wr / total) * gini(rb, ra);
                let better = match best {
                    None => decrease > TIE_EPS,
                    Some((b, _, _)) => decrease > b + TIE_EPS,
                };
                if better {
                    best = Some((decrease, f, midpoint(lo, hi)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn grow_tree(data: &Dataset, params: &ForestParams, weights: [f64; 2], seed: u64, t: usize) -> Tree {
    let mut rng = tree_rng(seed, t);
    let n = data.len();
    let mut idx: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut b = Builder {
        data,
        params,
        weights,
        k: params.split_features(data.n_features()),
        rng,
        nodes: Vec::new(),
        buf: Vec::with_capacity(n),
    };
    b.build(&mut idx, 0);
    Tree { nodes: b.nodes }
}

/// Grows `params.n_trees` CART trees. Each tree draws from its own ChaCha
/// stream (`seed`, tree index), so the result does not depend on how the
/// trees are scheduled across threads.
pub fn train(data: &Dataset, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let d = data.n_features();
    if d == 0 {
        return Err(Error::FeatureSchemaMismatch {
            expected: 1,
            found: 0,
        });
    }
    let class_counts = data.class_counts();
    let weights = class_weights(class_counts);

    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(data, params, weights, seed, t))
        .collect();

    let mut feature_min = vec![f64::INFINITY; d];
    let mut feature_max = vec![f64::NEG_INFINITY; d];
    for i in 0..data.len() {
        for (f, &v) in data.row(i).iter().enumerate() {
            feature_min[f] = feature_min[f].min(v);
            feature_max[f] = feature_max[f].max(v);
        }
    }

    Ok(ForestModel {
        trees,
        n_features: d,
        schema_version: FEATURE_SCHEMA_VERSION,
        params: params.clone(),
        training_seed: seed,
        class_counts,
        class_weights: weights,
        feature_min,
        feature_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(points: &[(f64, bool)]) -> Dataset {
        let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.0]).collect();
        let labels: Vec<bool> = points.iter().map(|p| p.1).collect();
        Dataset::new(&rows, &labels).unwrap()
    }

    fn stump() -> ForestParams {
        ForestParams {
            n_trees: 1,
            max_depth: 1,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: false,
            prune_alpha: 0.0,
        }
    }

    #[test]
    fn separable_stump() {
        let data = one_d(&[(0.1, false), (0.2, false), (0.8, true), (0.9, true)]);
        let m = train(&data, &stump(), 1).unwrap();
        match m.trees[0].nodes[0] {
            TreeNode::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, 0);
                assert!(threshold > 0.2 && threshold < 0.8, "{threshold}");
            }
            ref other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(m.predict_proba(&[0.15]).unwrap(), 0.0);
        assert_eq!(m.predict_proba(&[0.85]).unwrap(), 1.0);
    }

    #[test]
    fn single_class_collapses() {
        let data = one_d(&[(0.1, false), (0.5, false), (0.7, false)]);
        let m = train(&data, &ForestParams::default(), 3).unwrap();
        assert!(m.is_degenerate());
        for x in [-1.0, 0.3, 9.0] {
            assert_eq!(m.predict_proba(&[x]).unwrap(), 0.0);
        }
    }

    #[test]
    fn deterministic() {
        let pts: Vec<(f64, bool)> = (0..200)
            .map(|i| ((i as f64 * 0.37).sin(), i % 3 == 0))
            .collect();
        let data = one_d(&pts);
        let p = ForestParams {
            n_trees: 10,
            min_samples_leaf: 1,
            ..ForestParams::default()
        };
        assert_eq!(train(&data, &p, 5).unwrap(), train(&data, &p, 5).unwrap());
        assert_ne!(train(&data, &p, 5).unwrap(), train(&data, &p, 6).unwrap());
    }

    #[test]
    fn empty_and_ragged_inputs() {
        let empty = Dataset::new(&[], &[]).unwrap();
        assert!(matches!(
            train(&empty, &ForestParams::default(), 0),
            Err(Error::EmptyTrainingSet)
        ));
        assert!(matches!(
            Dataset::new(&[vec![1.0, 2.0], vec![1.0]], &[true, false]),
            Err(Error::FeatureSchemaMismatch { .. })
        ));
    }

    #[test]
    fn min_samples_leaf_respected() {
        let pts: Vec<(f64, bool)> = (0..40).map(|i| (i as f64, i % 2 == 0)).collect();
        let p = ForestParams {
            n_trees: 1,
            min_samples_leaf: 5,
            bootstrap: false,
            ..ForestParams::default()
        };
        let m = train(&one_d(&pts), &p, 0).unwrap();
        for n in &m.trees[0].nodes {
            if let TreeNode::Leaf { counts } = n {
                assert!(counts[0] + counts[1] >= 5);
            }
        }
    }

    #[test]
    fn midpoint_of_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
    }
}
