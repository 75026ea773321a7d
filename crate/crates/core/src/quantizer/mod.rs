//! Linear fake quantization with KL-divergence clip calibration, k-means
//! codebooks and model-size accounting.

mod calib;
mod hook;
mod kmeans;
mod linear;

pub use calib::{
    calibrate, calibrate_clip, candidate_bins, kl_for_candidate, Calibration, Histogram, CLIP_CANDIDATES, HIST_BINS,
};
pub use hook::{quantize_model, CalibRecord, Calibrator, LayerQuantizer};
pub use kmeans::{kmeans_quantize, nearest, CodebookQuant, KMEANS_DEFAULT_ITERS};
pub use linear::{linear_quantize, linear_quantize_in_place, QuantMode, QuantParams};

use crate::netgraph::LayerSpec;
use crate::BitwidthPolicy;

/// Bits needed to store the weights under `policy`: `sum n_params * w_bits`,
/// plus a 32-bit float per centroid in codebook mode.
pub fn model_size(layers: &[LayerSpec], policy: &BitwidthPolicy, codebook_mode: bool) -> u64 {
    layers
        .iter()
        .zip(policy.bits())
        .map(|(l, b)| {
            let w = l.n_params as u64 * b.w_bits as u64;
            if codebook_mode {
                w + 32 * (1u64 << b.w_bits)
            } else {
                w
            }
        })
        .sum()
}
