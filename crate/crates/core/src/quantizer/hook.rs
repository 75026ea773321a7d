use std::collections::HashMap;

use super::calib::{calibrate, Calibration, Histogram};
use super::kmeans::{kmeans_quantize, KMEANS_DEFAULT_ITERS};
use super::linear::{linear_quantize, linear_quantize_in_place, QuantMode, QuantParams};
use crate::netgraph::{ModelGraph, QuantHook, Split, StepKind};
use crate::{BitwidthPolicy, Error, Result, B_MAX, B_MIN};

#[derive(Debug, Clone, PartialEq)]
enum WeightQuant {
    Linear(QuantParams),
    Codebook(u32),
}

/// One row of the calibration report.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibRecord {
    pub layer: usize,
    pub target: StepKind,
    pub bits: u32,
    pub clip: f64,
    pub kl: f64,
}

/// Per-layer fake quantizer produced from a bitwidth policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerQuantizer {
    weights: Vec<WeightQuant>,
    inputs: Vec<QuantParams>,
    records: Vec<CalibRecord>,
}

impl LayerQuantizer {
    pub fn weight_params(&self, layer: usize) -> Option<&QuantParams> {
        match &self.weights[layer] {
            WeightQuant::Linear(q) => Some(q),
            WeightQuant::Codebook(_) => None,
        }
    }

    pub fn input_params(&self, layer: usize) -> &QuantParams {
        &self.inputs[layer]
    }

    pub fn records(&self) -> &[CalibRecord] {
        &self.records
    }

    /// Calibration report with columns `layer,target,bits,clip,kl`.
    pub fn report_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["layer", "target", "bits", "clip", "kl"])?;
        for r in &self.records {
            let target = match r.target {
                StepKind::Weight => "w",
                StepKind::Activation => "a",
            };
            w.write_record([
                r.layer.to_string(),
                target.to_string(),
                r.bits.to_string(),
                format!("{:.9}", r.clip),
                format!("{:.9e}", r.kl),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io {
            path: "<memory>".into(),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

impl QuantHook for LayerQuantizer {
    fn quantize_weights(&self, layer: usize, weights: &[f64]) -> Vec<f64> {
        match &self.weights[layer] {
            WeightQuant::Linear(q) => linear_quantize(weights, q),
            WeightQuant::Codebook(bits) => kmeans_quantize(weights, *bits, KMEANS_DEFAULT_ITERS)
                .map(|cb| cb.dequantize())
                .unwrap_or_else(|_| weights.to_vec()),
        }
    }

    fn quantize_input(&self, layer: usize, x: &mut [f64]) {
        linear_quantize_in_place(x, &self.inputs[layer]);
    }

    fn input_range(&self, layer: usize) -> Option<(f64, f64)> {
        Some(self.inputs[layer].range())
    }
}

/// Histograms of a float model's weights and calibration-set activations,
/// with memoised clip choices so that building quantizers for many
/// policies costs one calibration per (layer, target, bits).
#[derive(Debug, Clone)]
pub struct Calibrator {
    weight_hists: Vec<Histogram>,
    act_hists: Vec<Histogram>,
    cache: HashMap<(usize, StepKind, u32), Calibration>,
}

impl Calibrator {
    pub fn new(model: &ModelGraph, calib: &Split) -> Result<Self> {
        if calib.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let out = model.forward(&calib.inputs, true)?;
        let acts = out.activations.expect("captured");
        Ok(Self {
            weight_hists: model.params().iter().map(|p| Histogram::from_values(&p.weights)).collect(),
            act_hists: acts.iter().map(|a| Histogram::from_values(a)).collect(),
            cache: HashMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.weight_hists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight_hists.is_empty()
    }

    fn calibration(&mut self, layer: usize, target: StepKind, bits: u32) -> Result<Calibration> {
        if let Some(c) = self.cache.get(&(layer, target, bits)) {
            return Ok(*c);
        }
        let (hist, mode) = match target {
            StepKind::Weight => (&self.weight_hists[layer], QuantMode::Symmetric),
            StepKind::Activation => (&self.act_hists[layer], QuantMode::NonNegative),
        };
        let c = calibrate(hist, bits, mode)?;
        self.cache.insert((layer, target, bits), c);
        Ok(c)
    }

    fn checked_bits(&self, policy: &BitwidthPolicy) -> Result<Vec<(u32, u32)>> {
        if policy.len() != self.len() {
            return Err(Error::PolicyLength {
                policy: policy.len(),
                model: self.len(),
            });
        }
        (0..self.len())
            .map(|k| {
                if policy.is_pinned(k) {
                    return Ok((B_MAX, B_MAX));
                }
                let b = policy.layer(k);
                for bits in [b.w_bits, b.a_bits] {
                    if !(B_MIN..=B_MAX).contains(&bits) {
                        return Err(Error::UnsupportedBits { layer: k, bits });
                    }
                }
                Ok((b.w_bits, b.a_bits))
            })
            .collect()
    }

    fn input_quant(&mut self, k: usize, bits: u32, records: &mut Vec<CalibRecord>) -> Result<QuantParams> {
        let c = self.calibration(k, StepKind::Activation, bits)?;
        records.push(CalibRecord {
            layer: k,
            target: StepKind::Activation,
            bits,
            clip: c.clip,
            kl: c.kl,
        });
        QuantParams::new(bits, c.clip, QuantMode::NonNegative)
    }

    /// Linear quantizer for `policy`; pinned layers run at 8/8 bits.
    pub fn linear(&mut self, policy: &BitwidthPolicy) -> Result<LayerQuantizer> {
        let bits = self.checked_bits(policy)?;
        let mut records = Vec::with_capacity(2 * bits.len());
        let mut weights = Vec::with_capacity(bits.len());
        let mut inputs = Vec::with_capacity(bits.len());
        for (k, &(wb, ab)) in bits.iter().enumerate() {
            let c = self.calibration(k, StepKind::Weight, wb)?;
            records.push(CalibRecord {
                layer: k,
                target: StepKind::Weight,
                bits: wb,
                clip: c.clip,
                kl: c.kl,
            });
            weights.push(WeightQuant::Linear(QuantParams::new(wb, c.clip, QuantMode::Symmetric)?));
            inputs.push(self.input_quant(k, ab, &mut records)?);
        }
        Ok(LayerQuantizer {
            weights,
            inputs,
            records,
        })
    }

    /// Codebook weights (k-means with `2^w_bits` centroids) and 8-bit linear
    /// activations, as used by the model-size objective.
    pub fn codebook(&mut self, policy: &BitwidthPolicy) -> Result<LayerQuantizer> {
        let bits = self.checked_bits(policy)?;
        let mut records = Vec::with_capacity(bits.len());
        let mut weights = Vec::with_capacity(bits.len());
        let mut inputs = Vec::with_capacity(bits.len());
        for (k, &(wb, _)) in bits.iter().enumerate() {
            weights.push(WeightQuant::Codebook(wb));
            inputs.push(self.input_quant(k, B_MAX, &mut records)?);
        }
        Ok(LayerQuantizer {
            weights,
            inputs,
            records,
        })
    }
}

/// Calibrates a linear fake quantizer for `policy` from the model's weights
/// and one forward pass over `calib`.
pub fn quantize_model(model: &ModelGraph, policy: &BitwidthPolicy, calib: &Split) -> Result<LayerQuantizer> {
    Calibrator::new(model, calib)?.linear(policy)
}
