use crate::netgraph::{layer_features, LayerSpec, StepKind, FEATURE_DIM};
use crate::{round_half_away, B_MAX, B_MIN};

/// Feature columns rescaled by min-max; the remaining three (depthwise flag,
/// weight/activation flag, previous action) are already in [0, 1].
const SCALED: usize = 7;

/// Per-model min-max table for observation features.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsNormalizer {
    min: [f64; FEATURE_DIM],
    max: [f64; FEATURE_DIM],
}

impl ObsNormalizer {
    pub fn new(layers: &[LayerSpec]) -> Self {
        let mut min = [f64::INFINITY; FEATURE_DIM];
        let mut max = [f64::NEG_INFINITY; FEATURE_DIM];
        for l in layers {
            let f = layer_features(l, StepKind::Weight, 0.0);
            for d in 0..SCALED {
                min[d] = min[d].min(f[d]);
                max[d] = max[d].max(f[d]);
            }
        }
        Self { min, max }
    }

    /// Rescales a raw feature tuple; constant columns map to 0.
    pub fn normalize(&self, raw: &[f64; FEATURE_DIM]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(d, &v)| {
                if d >= SCALED {
                    return v;
                }
                let span = self.max[d] - self.min[d];
                if span > 0.0 {
                    ((v - self.min[d]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn encode(&self, layer: &LayerSpec, step: StepKind, prev_action: f64) -> Vec<f64> {
        self.normalize(&layer_features(layer, step, prev_action))
    }
}

/// Maps an action in [0, 1] to a bitwidth: `round(b_min - 0.5 + a (b_max -
/// b_min + 1))`, half away from zero, clamped to `[b_min, b_max]`.
pub fn action_to_bits(a: f64) -> u32 {
    let span = (B_MAX - B_MIN + 1) as f64;
    let b = round_half_away(B_MIN as f64 - 0.5 + a * span);
    b.clamp(B_MIN as f64, B_MAX as f64) as u32
}

/// Centre of the action interval that decodes to `bits`.
pub fn bits_to_action(bits: u32) -> f64 {
    let span = (B_MAX - B_MIN + 1) as f64;
    ((bits.clamp(B_MIN, B_MAX) - B_MIN) as f64 + 0.5) / span
}
