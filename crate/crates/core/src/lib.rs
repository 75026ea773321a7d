//! Hardware-in-the-loop mixed-precision quantization search.
//!
//! The crate is organised around the search pipeline:
//!
//! * [`netgraph`] - a small feed-forward CNN engine (forward, backprop,
//!   finetuning, evaluation) and the synthetic desk-scale dataset.
//! * [`quantizer`] - linear fake quantization with KL clip calibration,
//!   k-means codebooks and model-size accounting.
//! * [`hwsim`] - analytical latency/energy models for bit-serial and
//!   fused-PE accelerators, roofline analytics and the BitOPs proxy.
//! * [`agent`] - a DDPG actor-critic on a hand-written MLP substrate.
//! * [`search`] - the quantization environment, budget enforcement,
//!   rewards and the DDPG / random / evolutionary search drivers.

pub mod agent;
pub mod error;
pub mod hwsim;
pub mod netgraph;
pub mod policy;
pub mod quantizer;
pub mod search;

pub use error::{Error, Result};
pub use policy::{BitwidthPolicy, LayerBits, B_MAX, B_MIN};

/// Round half away from zero. Used for every rounding step in the crate.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    // f64::round already rounds half-way cases away from zero.
    x.round()
}
