//! Cross-entropy backprop, SGD-with-momentum finetuning and evaluation.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Split;
use super::engine;
use super::hook::QuantHook;
use super::model::{relu, LayerParams, ModelGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Seed for the per-epoch sample shuffle.
    pub shuffle_seed: u64,
    /// Re-quantize weights after every SGD step (default) or once per epoch.
    pub requantize_each_step: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            lr: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            shuffle_seed: 0,
            requantize_each_step: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneReport {
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Fraction of training samples classified correctly during the last
    /// epoch (measured on the fly, before each step's update).
    pub train_accuracy: f64,
}

/// Mean softmax cross-entropy over `labels` and its gradient with respect to
/// every parameter. Returns `(loss, gradients, correct_count)`.
pub fn loss_and_grad(
    model: &ModelGraph,
    inputs: &[f64],
    labels: &[usize],
    hook: Option<&dyn QuantHook>,
) -> Result<(f64, Vec<LayerParams>, usize)> {
    let weights = model.effective_weights(hook);
    batch_grad(model, &weights, inputs, labels, hook)
}

fn batch_grad(
    model: &ModelGraph,
    weights: &[Cow<'_, [f64]>],
    inputs: &[f64],
    labels: &[usize],
    hook: Option<&dyn QuantHook>,
) -> Result<(f64, Vec<LayerParams>, usize)> {
    let layers = model.layers();
    let in_len = model.input_len();
    if inputs.len() != labels.len() * in_len {
        return Err(Error::Shape("inputs do not match label count".into()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scale = 1.0 / labels.len() as f64;
    let mut grads: Vec<LayerParams> = layers.iter().map(LayerParams::zeros).collect();
    let mut total_loss = 0.0;
    let mut correct = 0;
    let last = layers.len() - 1;

    for (sample, &label) in inputs.chunks_exact(in_len).zip(labels) {
        // Forward, keeping each layer's raw input, quantized input and
        // pre-activation output.
        let mut raw_inputs = Vec::with_capacity(layers.len());
        let mut q_inputs = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(layers.len());
        let mut x = sample.to_vec();
        for (k, spec) in layers.iter().enumerate() {
            let mut xq = x.clone();
            if let Some(h) = hook {
                h.quantize_input(k, &mut xq);
            }
            let mut y = vec![0.0; spec.output_len()];
            engine::forward(spec, &weights[k], &model.params()[k].bias, &xq, &mut y);
            raw_inputs.push(x);
            q_inputs.push(xq);
            x = y.clone();
            if k < last {
                relu(&mut x);
            }
            pre.push(y);
        }

        let logits = &pre[last];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total_loss += log_z - logits[label];
        if argmax(logits) == label {
            correct += 1;
        }

        let mut gy: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let p = (z - log_z).exp();
                scale * (p - if i == label { 1.0 } else { 0.0 })
            })
            .collect();

        for k in (0..layers.len()).rev() {
            let spec = &layers[k];
            if k < last {
                for (g, z) in gy.iter_mut().zip(&pre[k]) {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let LayerParams { weights: gw, bias: gb } = &mut grads[k];
            if k == 0 {
                engine::backward(spec, &weights[k], &q_inputs[k], &gy, gw, gb, None);
                break;
            }
            let mut gx = vec![0.0; spec.input_len()];
            engine::backward(spec, &weights[k], &q_inputs[k], &gy, gw, gb, Some(&mut gx));
            if let Some((lo, hi)) = hook.and_then(|h| h.input_range(k)) {
                for (g, v) in gx.iter_mut().zip(&raw_inputs[k]) {
                    if *v < lo || *v > hi {
                        *g = 0.0;
                    }
                }
            }
            gy = gx;
        }
    }
    Ok((total_loss * scale, grads, correct))
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Minibatch SGD with momentum (`v = m*v + g; w -= lr*v`). With a hook the
/// forward pass is fake-quantized and updates land on the float weights.
pub fn finetune(
    model: &mut ModelGraph,
    data: &Split,
    cfg: &FinetuneConfig,
    hook: Option<&dyn QuantHook>,
) -> Result<FinetuneReport> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.sample_len() != model.input_len() {
        return Err(Error::Shape(format!(
            "dataset samples have {} values, model expects {}",
            data.sample_len(),
            model.input_len()
        )));
    }
    let batch_size = cfg.batch_size.max(1);
    let mut velocity: Vec<LayerParams> = model.layers().iter().map(LayerParams::zeros).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut train_accuracy = 0.0;
    let in_len = data.sample_len();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let epoch_weights: Option<Vec<Vec<f64>>> = (!cfg.requantize_each_step).then(|| {
            model
                .effective_weights(hook)
                .into_iter()
                .map(Cow::into_owned)
                .collect()
        });
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len() * in_len);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                inputs.extend_from_slice(data.sample(i));
                labels.push(data.labels[i]);
            }
            let (loss, grads, hits) = match &epoch_weights {
                Some(w) => {
                    let borrowed: Vec<Cow<'_, [f64]>> =
                        w.iter().map(|v| Cow::Borrowed(v.as_slice())).collect();
                    batch_grad(model, &borrowed, &inputs, &labels, hook)?
                }
                None => loss_and_grad(model, &inputs, &labels, hook)?,
            };
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite training loss {loss}")));
            }
            loss_sum += loss * chunk.len() as f64;
            correct += hits;
            for ((p, g), v) in model.params_mut().iter_mut().zip(&grads).zip(&mut velocity) {
                sgd_step(&mut p.weights, &g.weights, &mut v.weights, cfg.lr, cfg.momentum);
                sgd_step(&mut p.bias, &g.bias, &mut v.bias, cfg.lr, cfg.momentum);
            }
        }
        epoch_loss.push(loss_sum / data.len() as f64);
        train_accuracy = correct as f64 / data.len() as f64;
    }
    Ok(FinetuneReport {
        epoch_loss,
        train_accuracy,
    })
}

fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// Float training schedule for the baseline model: `epochs` at `lr`, then
/// `anneal_epochs` at `lr * anneal_factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub lr: f64,
    pub anneal_epochs: usize,
    pub anneal_factor: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            epochs: 14,
            lr: 0.02,
            anneal_epochs: 2,
            anneal_factor: 0.1,
            momentum: 0.9,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Trains `model` in float from its current parameters.
pub fn train_baseline(model: &mut ModelGraph, data: &Split, cfg: &BaselineConfig) -> Result<FinetuneReport> {
    let total = cfg.epochs + cfg.anneal_epochs;
    if total == 0 {
        return Err(Error::InvalidArgument("baseline needs at least one epoch".into()));
    }
    let mut epoch_loss = Vec::with_capacity(total);
    let mut train_accuracy = 0.0;
    for e in 0..total {
        let lr = if e < cfg.epochs { cfg.lr } else { cfg.lr * cfg.anneal_factor };
        let ft = FinetuneConfig {
            epochs: 1,
            lr,
            momentum: cfg.momentum,
            batch_size: cfg.batch_size,
            shuffle_seed: cfg.seed.wrapping_mul(1_000_003).wrapping_add(e as u64),
            requantize_each_step: true,
        };
        let r = finetune(model, data, &ft, None)?;
        epoch_loss.extend(r.epoch_loss);
        train_accuracy = r.train_accuracy;
    }
    Ok(FinetuneReport {
        epoch_loss,
        train_accuracy,
    })
}

/// Top-1 accuracy under argmax with ties resolved to the lower class index.
pub fn evaluate(model: &ModelGraph, data: &Split, hook: Option<&dyn QuantHook>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = model.num_classes();
    let chunk = 64 * data.sample_len();
    let mut correct = 0usize;
    let mut seen = 0usize;
    for batch in data.inputs.chunks(chunk) {
        let out = model.forward_with(batch, hook, false)?;
        for row in out.logits.chunks_exact(classes) {
            if argmax(row) == data.labels[seen] {
                correct += 1;
            }
            seen += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
