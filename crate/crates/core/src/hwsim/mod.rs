//! Analytical accelerator cost models.
//!
//! Latency per layer is `T = T_comp + T_stall + T_overhead`, with compute
//! and DRAM transfer fully overlapped so that the stall is whatever memory
//! time compute cannot hide. Energy is DRAM traffic times a per-bit cost plus
//! dynamic power times latency.

mod config;
mod cost;

pub use config::{Family, HardwareConfig};
pub use cost::{
    bitops, compute_time, cost_report, dram_bits, energy, latency, layer_cost, layer_workload, macs_per_cycle,
    op_intensity, peak_ops, pow2_bits, roofline_csv, roofline_point, CostReport, LayerCost, RooflinePoint, Workload,
};
