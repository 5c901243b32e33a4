//! Fully-connected autoencoder scored by reconstruction error.
//!
//! Hidden layers use the rectifier, the output layer is linear. Training is
//! plain mini-batch gradient descent on the mean squared reconstruction
//! error, with a seeded shuffle so runs are reproducible.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::container::{self, Reader, Section, Writer};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, NormStats, FEATURE_SCHEMA_VERSION, N_FEATURES};

/// `[d, ceil(d/2), ceil(d/4), ceil(d/2), d]`.
pub fn layer_dims(d: usize) -> Vec<usize> {
    let half = d.div_ceil(2);
    let quarter = d.div_ceil(4);
    vec![d, half, quarter, half, d]
}

/// Dense layer; `weights` is row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.bias[o];
            out.push(z);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AEModel {
    pub layers: Vec<Layer>,
    /// Normalization the training vectors went through. Raw feature vectors
    /// are mapped with it before scoring.
    pub norm_stats: Option<NormStats>,
    pub schema_version: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AETrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AETrainConfig {
    fn default() -> Self {
        AETrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 42,
        }
    }
}

impl AETrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Loss gradients with the same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
    /// Batch loss at the parameters the gradient was taken at.
    pub loss: f64,
}

/// Mean training-set loss before the first epoch (index 0) and after each
/// epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

impl AEModel {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an autoencoder needs at least two layer sizes");
        AEModel {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            norm_stats: None,
            schema_version: FEATURE_SCHEMA_VERSION,
        }
    }

    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    /// Training then replaces the biases with data-centered ones.
    pub fn glorot<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        let mut m = Self::zeros(dims);
        for l in &mut m.layers {
            let limit = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            for w in &mut l.weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        m
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.n_out));
        d
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Pre-activations of every layer for one input.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(l.n_out);
            l.apply(&a, &mut z);
            a = if i == last {
                z.clone()
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
            zs.push(z);
        }
        zs
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.pre_activations(x).pop().expect("at least one layer")
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::SchemaMismatch(format!(
                "autoencoder expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Normalizes raw feature values with the captured stats and scores
    /// them.
    pub fn score_raw(&self, values: &[f64; N_FEATURES]) -> Result<f64> {
        match &self.norm_stats {
            Some(ns) => ae_score(self, &ns.apply_one(values)),
            None => ae_score(self, values),
        }
    }

    /// Smallest absolute hidden-layer pre-activation over a batch.
    /// Finite-difference checks need this bounded away from the rectifier
    /// kink.
    pub fn min_abs_hidden_preactivation<B: AsRef<[f64]>>(&self, batch: &[B]) -> f64 {
        let hidden = self.layers.len() - 1;
        batch
            .iter()
            .flat_map(|x| {
                self.pre_activations(x.as_ref())
                    .into_iter()
                    .take(hidden)
                    .flatten()
                    .map(f64::abs)
                    .collect::<Vec<_>>()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Mean squared difference between `x` and its reconstruction.
pub fn ae_score(model: &AEModel, x: &[f64]) -> Result<f64> {
    model.check_input(x)?;
    let y = model.reconstruct(x);
    Ok(mse(&y, x))
}

fn mse(y: &[f64], x: &[f64]) -> f64 {
    y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

/// Scores many vectors in parallel.
pub fn ae_score_batch<B: AsRef<[f64]> + Sync>(model: &AEModel, xs: &[B]) -> Result<Vec<f64>> {
    xs.par_iter().map(|x| ae_score(model, x.as_ref())).collect()
}

/// Mean over the batch of [`ae_score`], a plain loss evaluation.
pub fn batch_loss<B: AsRef<[f64]>>(model: &AEModel, batch: &[B]) -> f64 {
    batch
        .iter()
        .map(|x| mse(&model.reconstruct(x.as_ref()), x.as_ref()))
        .sum::<f64>()
        / batch.len() as f64
}

/// Gradient of the batch-mean reconstruction error by backpropagation.
///
/// Panics on an empty batch or on rows whose width differs from the input
/// layer.
pub fn ae_gradient<B: AsRef<[f64]>>(model: &AEModel, batch: &[B]) -> Gradients {
    assert!(!batch.is_empty(), "gradient of an empty batch");
    let mut g = Gradients {
        weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
        bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        loss: 0.0,
    };
    let last = model.layers.len() - 1;
    let b = batch.len() as f64;
    for x in batch {
        let x = x.as_ref();
        assert_eq!(x.len(), model.input_dim(), "row width differs from input layer");
        let zs = model.pre_activations(x);
        let d = x.len() as f64;
        let y = &zs[last];
        g.loss += mse(y, x) / b;
        let mut delta: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| 2.0 * (yi - xi) / (b * d)).collect();
        for li in (0..=last).rev() {
            let layer = &model.layers[li];
            let input: Vec<f64> = if li == 0 {
                x.to_vec()
            } else {
                zs[li - 1].iter().map(|v| v.max(0.0)).collect()
            };
            let gw = &mut g.weights[li];
            for o in 0..layer.n_out {
                if delta[o] == 0.0 {
                    continue;
                }
                g.bias[li][o] += delta[o];
                let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                for (w, a) in row.iter_mut().zip(&input) {
                    *w += delta[o] * a;
                }
            }
            if li > 0 {
                let z_prev = &zs[li - 1];
                delta = (0..layer.n_in)
                    .map(|i| {
                        if z_prev[i] <= 0.0 {
                            return 0.0;
                        }
                        (0..layer.n_out)
                            .map(|o| layer.weights[o * layer.n_in + i] * delta[o])
                            .sum()
                    })
                    .collect();
            }
        }
    }
    g
}

/// Hidden biases start this many pre-activation standard deviations above
/// the data-centered value.
pub const INIT_ACTIVE_MARGIN: f64 = 3.0;

/// Data-dependent bias initialization.
///
/// Inputs normalized to `[0, 1]` are all non-negative, so with zero biases
/// any rectifier whose initial weights lean negative never activates and
/// never receives a gradient. Each hidden unit's bias is set to
/// `-W · mean(input) + INIT_ACTIVE_MARGIN · std(pre-activation)`, which
/// makes it active on nearly every training row at the start; the output
/// bias is set so the initial reconstruction mean equals the data mean.
fn center_biases(model: &mut AEModel, rows: &[Vec<f64>]) {
    let n = rows.len() as f64;
    let last = model.layers.len() - 1;
    let target_mean = column_mean(rows.iter().map(Vec::as_slice), rows[0].len(), n);
    let mut acts: Vec<Vec<f64>> = rows.to_vec();
    for li in 0..=last {
        let layer = &mut model.layers[li];
        let mean_in = column_mean(acts.iter().map(Vec::as_slice), layer.n_in, n);
        for o in 0..layer.n_out {
            let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
            let drive: f64 = row.iter().zip(&mean_in).map(|(w, m)| w * m).sum();
            layer.bias[o] = if li == last { target_mean[o] - drive } else { -drive };
        }
        if li == last {
            break;
        }
        let mut zs: Vec<Vec<f64>> = acts
            .iter()
            .map(|a| {
                let mut z = Vec::with_capacity(layer.n_out);
                layer.apply(a, &mut z);
                z
            })
            .collect();
        for o in 0..layer.n_out {
            let std = (zs.iter().map(|z| z[o] * z[o]).sum::<f64>() / n).sqrt();
            let shift = INIT_ACTIVE_MARGIN * std;
            layer.bias[o] += shift;
            zs.iter_mut().for_each(|z| z[o] += shift);
        }
        for (a, z) in acts.iter_mut().zip(&zs) {
            a.clear();
            a.extend(z.iter().map(|v| v.max(0.0)));
        }
    }
}

fn column_mean<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize, n: f64) -> Vec<f64> {
    let mut m = vec![0.0; width];
    for r in rows {
        for (acc, v) in m.iter_mut().zip(r) {
            *acc += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    m
}

fn step(model: &mut AEModel, g: &Gradients, lr: f64) {
    for (li, l) in model.layers.iter_mut().enumerate() {
        for (w, dw) in l.weights.iter_mut().zip(&g.weights[li]) {
            *w -= lr * dw;
        }
        for (bb, db) in l.bias.iter_mut().zip(&g.bias[li]) {
            *bb -= lr * db;
        }
    }
}

/// Trains a network of the given layer sizes on raw rows.
pub fn ae_train_rows(dims: &[usize], rows: &[Vec<f64>], cfg: &AETrainConfig) -> Result<(AEModel, TrainLog)> {
    cfg.validate()?;
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidConfig(format!("bad layer sizes {dims:?}")));
    }
    if rows.len() < cfg.batch_size {
        return Err(Error::TooFewSamples {
            needed: cfg.batch_size,
            got: rows.len(),
        });
    }
    if let Some(r) = rows.iter().find(|r| r.len() != dims[0]) {
        return Err(Error::SchemaMismatch(format!(
            "row of width {} for an input layer of {}",
            r.len(),
            dims[0]
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = AEModel::glorot(dims, &mut rng);
    center_biases(&mut model, rows);
    let mut log = TrainLog {
        epoch_loss: vec![batch_loss(&model, rows)],
    };
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut batch: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| rows[i].as_slice()));
            let g = ae_gradient(&model, &batch);
            if !g.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            step(&mut model, &g, cfg.learning_rate);
        }
        let loss = batch_loss(&model, rows);
        if !loss.is_finite() || !model.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        log.epoch_loss.push(loss);
    }
    Ok((model, log))
}

/// Trains the standard 12-feature autoencoder on vectors already normalized
/// with `norm_stats`.
pub fn ae_train(
    normalized: &[FeatureVector],
    norm_stats: &NormStats,
    cfg: &AETrainConfig,
) -> Result<(AEModel, TrainLog)> {
    let rows: Vec<Vec<f64>> = normalized.iter().map(|v| v.values.to_vec()).collect();
    let (mut model, log) = ae_train_rows(&layer_dims(N_FEATURES), &rows, cfg)?;
    model.norm_stats = Some(norm_stats.clone());
    Ok((model, log))
}

// Payload layout (section 3):
//   layer count u32, then layer sizes (count + 1) x u32
//   per layer: weights n_out*n_in x f64 (row-major), bias n_out x f64
//   norm flag u8; when 1: min N_FEATURES x f64, max N_FEATURES x f64

pub(crate) fn encode_ae(m: &AEModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(m.layers.len() as u32);
    for d in m.dims() {
        w.u32(d as u32);
    }
    for l in &m.layers {
        w.f64s(&l.weights);
        w.f64s(&l.bias);
    }
    match &m.norm_stats {
        Some(ns) => {
            w.u8(1);
            w.f64s(&ns.min);
            w.f64s(&ns.max);
        }
        None => w.u8(0),
    }
    w.into_inner()
}

pub(crate) fn decode_ae(payload: &[u8], schema_version: u16) -> Result<AEModel> {
    let mut r = Reader::new(payload);
    let n_layers = r.count(8)?;
    if n_layers == 0 {
        return Err(Error::CorruptModel("autoencoder has no layers".into()));
    }
    let dims: Vec<usize> = (0..=n_layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
    if dims.contains(&0) {
        return Err(Error::CorruptModel("zero-width layer".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for w in dims.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let n_w = n_in
            .checked_mul(n_out)
            .filter(|n| n * 8 <= payload.len())
            .ok_or_else(|| Error::CorruptModel("layer larger than file".into()))?;
        layers.push(Layer {
            n_in,
            n_out,
            weights: r.f64s(n_w)?,
            bias: r.f64s(n_out)?,
        });
    }
    let norm_stats = match r.u8()? {
        0 => None,
        1 => {
            let min: Vec<f64> = r.f64s(N_FEATURES)?;
            let max: Vec<f64> = r.f64s(N_FEATURES)?;
            Some(NormStats {
                min: min.try_into().expect("N_FEATURES values"),
                max: max.try_into().expect("N_FEATURES values"),
            })
        }
        b => return Err(Error::CorruptModel(format!("norm flag {b}"))),
    };
    r.finish()?;
    let m = AEModel {
        layers,
        norm_stats,
        schema_version,
    };
    if !m.is_finite() {
        return Err(Error::CorruptModel("non-finite parameter".into()));
    }
    Ok(m)
}

pub fn save_ae(model: &AEModel, path: &Path) -> Result<()> {
    let bytes = container::encode(Section::Autoencoder, model.schema_version, &encode_ae(model));
    container::write_file(path, &bytes)
}

pub fn load_ae(path: &Path) -> Result<AEModel> {
    let bytes = container::read_file(path)?;
    let payload = container::open_expecting(&bytes, Section::Autoencoder, FEATURE_SCHEMA_VERSION)?;
    decode_ae(payload, FEATURE_SCHEMA_VERSION)
}
