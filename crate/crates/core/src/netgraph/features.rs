use serde::{Deserialize, Serialize};

use super::layer::{LayerKind, LayerSpec};

/// Whether a search step assigns a layer's weight or activation bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Weight,
    Activation,
}

impl StepKind {
    /// Weight steps are encoded as 1, activation steps as 0.
    pub fn indicator(self) -> f64 {
        match self {
            StepKind::Weight => 1.0,
            StepKind::Activation => 0.0,
        }
    }
}

pub const FEATURE_DIM: usize = 10;

/// Raw (unnormalized) observation features of one layer:
/// `(k, c_in, c_out, s_kernel, s_stride, s_feat, n_params, i_dw, i_w/a, a_prev)`.
///
/// Fully-connected layers report `(k, h_in, h_out, 1, 0, s_feat, n_params,
/// 0, i_w/a, a_prev)`.
pub fn layer_features(layer: &LayerSpec, step: StepKind, prev_action: f64) -> [f64; FEATURE_DIM] {
    let (kernel, stride, i_dw) = match layer.kind {
        LayerKind::Fc => (1.0, 0.0, 0.0),
        _ => (layer.kernel as f64, layer.stride as f64, layer.i_dw() as f64),
    };
    [
        layer.index as f64,
        layer.c_in as f64,
        layer.c_out as f64,
        kernel,
        stride,
        layer.feat as f64,
        layer.n_params as f64,
        i_dw,
        step.indicator(),
        prev_action,
    ]
}
