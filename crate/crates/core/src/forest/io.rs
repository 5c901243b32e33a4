//! Forest payload encoding inside the model container.
//!
//! Float forest payload (section 1):
//!
//! ```text
//! n_features u16
//! params: n_trees u32, max_depth u32, min_samples_leaf u32,
//!         features_per_split u32 (0 = default), bootstrap u8, prune_alpha f64
//! training_seed u64
//! class_counts 2 x u64, class_weights 2 x f64
//! feature_min n_features x f64, feature_max n_features x f64
//! tree count u32, then per tree: node count u32 followed by nodes
//!   split: 0x00, feature u16, threshold f64, right u32   (15 bytes)
//!   leaf:  0x01, benign u32, attack u32                   (9 bytes)
//! ```
//!
//! Quantized payload (section 2):
//!
//! ```text
//! n_features u16
//! offset n_features x f64, scale n_features x f64
//! tree count u32, then per tree: node count u32 followed by nodes
//!   split: feature u8, code u16, right u32               (7 bytes)
//!   leaf:  0xFF, probability code u8                      (2 bytes)
//! ```

use std::path::Path;

use super::quantize::{QNode, QTree, QuantizedForest, LEAF_MARK};
use super::{AttackScorer, ForestModel, ForestParams, Tree, TreeNode};
use crate::container::{self, Reader, Section, Writer};
use crate::error::{Error, Result};
use crate::features::FEATURE_SCHEMA_VERSION;

const TAG_SPLIT: u8 = 0;
const TAG_LEAF: u8 = 1;

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{what} {v} does not fit in 32 bits")))
}

pub(crate) fn encode_forest(m: &ForestModel) -> Result<Vec<u8>> {
    let n_features = u16::try_from(m.n_features)
        .map_err(|_| Error::InvalidConfig("too many features to serialize".into()))?;
    let mut w = Writer::default();
    w.u16(n_features);
    w.u32(u32_of(m.params.n_trees, "n_trees")?);
    w.u32(u32_of(m.params.max_depth, "max_depth")?);
    w.u32(u32_of(m.params.min_samples_leaf, "min_samples_leaf")?);
    w.u32(u32_of(m.params.features_per_split.unwrap_or(0), "features_per_split")?);
    w.u8(m.params.bootstrap as u8);
    w.f64(m.params.prune_alpha);
    w.u64(m.training_seed);
    w.u64(m.class_counts[0]);
    w.u64(m.class_counts[1]);
    w.f64s(&m.class_weights);
    w.f64s(&m.feature_min);
    w.f64s(&m.feature_max);
    w.u32(u32_of(m.trees.len(), "tree count")?);
    for t in &m.trees {
        w.u32(u32_of(t.nodes.len(), "node count")?);
        for n in &t.nodes {
            match *n {
                TreeNode::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    w.u8(TAG_SPLIT);
                    w.u16(feature as u16);
                    w.f64(threshold);
                    w.u32(u32_of(right, "node index")?);
                }
                TreeNode::Leaf { counts } => {
                    w.u8(TAG_LEAF);
                    w.u32(counts[0]);
                    w.u32(counts[1]);
                }
            }
        }
    }
    Ok(w.into_inner())
}

pub(crate) fn decode_forest(payload: &[u8], schema_version: u16) -> Result<ForestModel> {
    let mut r = Reader::new(payload);
    let n_features = r.u16()? as usize;
    let n_trees = r.u32()? as usize;
    let max_depth = r.u32()? as usize;
    let min_samples_leaf = r.u32()? as usize;
    let fps = r.u32()? as usize;
    let bootstrap = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(Error::CorruptModel(format!("bootstrap flag {b}"))),
    };
    let prune_alpha = r.f64()?;
    let params = ForestParams {
        n_trees,
        max_depth,
        min_samples_leaf,
        features_per_split: (fps != 0).then_some(fps),
        bootstrap,
        prune_alpha,
    };
    let training_seed = r.u64()?;
    let class_counts = [r.u64()?, r.u64()?];
    let class_weights = [r.f64()?, r.f64()?];
    let feature_min = r.f64s(n_features)?;
    let feature_max = r.f64s(n_features)?;
    let tree_count = r.count(4)?;
    if tree_count == 0 {
        return Err(Error::CorruptModel("forest has no trees".into()));
    }
    let mut trees = Vec::with_capacity(tree_count);
    for ti in 0..tree_count {
        let n_nodes = r.count(9)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(match r.u8()? {
                TAG_SPLIT => TreeNode::Split {
                    feature: r.u16()? as usize,
                    threshold: r.f64()?,
                    right: r.u32()? as usize,
                },
                TAG_LEAF => TreeNode::Leaf {
                    counts: [r.u32()?, r.u32()?],
                },
                t => return Err(Error::CorruptModel(format!("tree {ti}: node tag {t}"))),
            });
        }
        let tree = Tree { nodes };
        tree.check(n_features)
            .map_err(|e| Error::CorruptModel(format!("tree {ti}: {e}")))?;
        trees.push(tree);
    }
    r.finish()?;
    if class_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::CorruptModel("class weights must be positive".into()));
    }
    Ok(ForestModel {
        trees,
        n_features,
        schema_version,
        params,
        training_seed,
        class_counts,
        class_weights,
        feature_min,
        feature_max,
    })
}

pub(crate) fn encode_quantized(q: &QuantizedForest) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.u16(q.n_features as u16);
    w.f64s(&q.offset);
    w.f64s(&q.scale);
    w.u32(u32_of(q.trees.len(), "tree count")?);
    for t in &q.trees {
        w.u32(u32_of(t.nodes.len(), "node count")?);
        for n in &t.nodes {
            w.u8(n.feature);
            if n.feature == LEAF_MARK {
                w.u8(n.code as u8);
            } else {
                w.u16(n.code);
                w.u32(n.right);
            }
        }
    }
    Ok(w.into_inner())
}

fn check_qtree(t: &QTree, n_features: usize) -> std::result::Result<(), String> {
    let len = t.nodes.len();
    if len == 0 {
        return Err("empty tree".into());
    }
    for (i, n) in t.nodes.iter().enumerate() {
        if n.feature == LEAF_MARK {
            continue;
        }
        if n.feature as usize >= n_features {
            return Err(format!("feature {} >= {n_features}", n.feature));
        }
        let right = n.right as usize;
        if i + 1 >= len || right <= i + 1 || right >= len {
            return Err(format!("node {i}: bad child index {right}"));
        }
    }
    Ok(())
}

pub(crate) fn decode_quantized(payload: &[u8], schema_version: u16) -> Result<QuantizedForest> {
    let mut r = Reader::new(payload);
    let n_features = r.u16()? as usize;
    if n_features >= LEAF_MARK as usize {
        return Err(Error::CorruptModel(format!("{n_features} features")));
    }
    let offset = r.f64s(n_features)?;
    let scale = r.f64s(n_features)?;
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::CorruptModel("non-positive quantization scale".into()));
    }
    let tree_count = r.count(4)?;
    if tree_count == 0 {
        return Err(Error::CorruptModel("forest has no trees".into()));
    }
    let mut trees = Vec::with_capacity(tree_count);
    for ti in 0..tree_count {
        let n_nodes = r.count(2)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let feature = r.u8()?;
            nodes.push(if feature == LEAF_MARK {
                QNode {
                    feature,
                    code: u16::from(r.u8()?),
                    right: 0,
                }
            } else {
                QNode {
                    feature,
                    code: r.u16()?,
                    right: r.u32()?,
                }
            });
        }
        let tree = QTree { nodes };
        check_qtree(&tree, n_features).map_err(|e| Error::CorruptModel(format!("tree {ti}: {e}")))?;
        trees.push(tree);
    }
    r.finish()?;
    Ok(QuantizedForest {
        n_features,
        schema_version,
        offset,
        scale,
        trees,
    })
}

pub fn save_forest(model: &ForestModel, path: &Path) -> Result<()> {
    let bytes = container::encode(Section::Forest, model.schema_version, &encode_forest(model)?);
    container::write_file(path, &bytes)
}

/// Loads a float forest written for the current feature schema.
pub fn load_forest(path: &Path) -> Result<ForestModel> {
    load_forest_for_schema(path, FEATURE_SCHEMA_VERSION)
}

pub fn load_forest_for_schema(path: &Path, schema_version: u16) -> Result<ForestModel> {
    let bytes = container::read_file(path)?;
    let payload = container::open_expecting(&bytes, Section::Forest, schema_version)?;
    decode_forest(payload, schema_version)
}

pub fn save_quantized(model: &QuantizedForest, path: &Path) -> Result<()> {
    let bytes = container::encode(
        Section::QuantizedForest,
        model.schema_version,
        &encode_quantized(model)?,
    );
    container::write_file(path, &bytes)
}

pub fn load_quantized(path: &Path) -> Result<QuantizedForest> {
    let bytes = container::read_file(path)?;
    let payload = container::open_expecting(&bytes, Section::QuantizedForest, FEATURE_SCHEMA_VERSION)?;
    decode_quantized(payload, FEATURE_SCHEMA_VERSION)
}

/// Loads either forest form, whichever the file holds.
pub fn load_scorer(path: &Path) -> Result<Box<dyn AttackScorer>> {
    let bytes = container::read_file(path)?;
    let env = container::open(&bytes)?;
    if env.schema_version != FEATURE_SCHEMA_VERSION {
        return Err(Error::VersionMismatch {
            what: "feature schema",
            expected: FEATURE_SCHEMA_VERSION.into(),
            found: env.schema_version.into(),
        });
    }
    match env.section {
        Section::Forest => Ok(Box::new(decode_forest(env.payload, env.schema_version)?)),
        Section::QuantizedForest => Ok(Box::new(decode_quantized(env.payload, env.schema_version)?)),
        Section::Autoencoder => Err(Error::CorruptModel(
            "file holds an autoencoder, not a forest".into(),
        )),
    }
}
