use serde::Serialize;

use super::config::{Family, HardwareConfig};
use crate::netgraph::{LayerKind, LayerSpec};
use crate::{BitwidthPolicy, Error, LayerBits, Result, B_MAX, B_MIN};

/// Analytic operation and tensor counts of one layer for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Workload {
    pub macs: u64,
    pub weights: u64,
    pub act_in: u64,
    pub act_out: u64,
}

pub fn layer_workload(layer: &LayerSpec, batch: u64) -> Workload {
    Workload {
        macs: batch * layer.macs_per_sample(),
        weights: layer.weight_count() as u64,
        act_in: batch * layer.input_len() as u64,
        act_out: batch * layer.output_len() as u64,
    }
}

/// Smallest power of two that is >= `b` and >= 2.
pub fn pow2_bits(b: u32) -> u32 {
    b.max(2).next_power_of_two()
}

fn check_bits(layer: usize, bits: LayerBits) -> Result<()> {
    for b in [bits.w_bits, bits.a_bits] {
        if !(B_MIN..=B_MAX).contains(&b) {
            return Err(Error::UnsupportedBits { layer, bits: b });
        }
    }
    Ok(())
}

/// MACs per cycle the whole array sustains at the given operand widths.
pub fn macs_per_cycle(hw: &HardwareConfig, bits: LayerBits) -> f64 {
    let pes = hw.pe_count() as f64;
    match hw.family {
        Family::Temporal => pes * hw.bit_lanes as f64 / (bits.w_bits * bits.a_bits) as f64,
        Family::Spatial => pes * fused_lanes(bits) as f64,
    }
}

fn fused_lanes(bits: LayerBits) -> u64 {
    (16 / pow2_bits(bits.w_bits) as u64) * (16 / pow2_bits(bits.a_bits) as u64)
}

/// Peak MAC throughput (MACs per second) at the given operand widths.
pub fn peak_ops(hw: &HardwareConfig, bits: LayerBits) -> f64 {
    macs_per_cycle(hw, bits) * hw.clock_hz
}

/// Compute time: work is spread over the PE array (rounded up to whole
/// per-PE slices), then each PE pays `w*a / bit_lanes` cycles per MAC
/// (temporal) or retires `(16/w2)(16/a2)` MACs per cycle (spatial).
pub fn compute_time(macs: u64, bits: LayerBits, hw: &HardwareConfig) -> f64 {
    let per_pe = macs.div_ceil(hw.pe_count()) as f64;
    let cycles = match hw.family {
        Family::Temporal => per_pe * (bits.w_bits * bits.a_bits) as f64 / hw.bit_lanes as f64,
        Family::Spatial => per_pe / fused_lanes(bits) as f64,
    };
    cycles / hw.clock_hz
}

/// DRAM traffic in bits. Weights that overflow the on-chip buffer are
/// refetched once per buffer-sized tile.
pub fn dram_bits(layer: &LayerSpec, bits: LayerBits, hw: &HardwareConfig) -> u64 {
    if hw.all_on_chip {
        return 0;
    }
    let w = layer_workload(layer, hw.batch);
    let weight_bits = w.weights * bits.w_bits as u64;
    let cap = hw.on_chip_bits();
    let weight_traffic = if weight_bits > cap {
        weight_bits * weight_bits.div_ceil(cap)
    } else {
        weight_bits
    };
    weight_traffic + (w.act_in + w.act_out) * bits.a_bits as u64
}

/// Per-layer cost breakdown. Times in seconds, energy in joules.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub layer: usize,
    pub kind: LayerKind,
    pub w_bits: u32,
    pub a_bits: u32,
    pub macs: u64,
    pub bitops: u64,
    pub dram_bits: u64,
    pub t_computation: f64,
    pub t_stall: f64,
    pub t_overhead: f64,
    pub latency: f64,
    pub energy: f64,
    /// MACs per DRAM byte; infinite without DRAM traffic.
    pub op_intensity: f64,
}

pub fn layer_cost(layer: &LayerSpec, bits: LayerBits, hw: &HardwareConfig) -> Result<LayerCost> {
    check_bits(layer.index, bits)?;
    let w = layer_workload(layer, hw.batch);
    let dram = dram_bits(layer, bits, hw);
    let t_comp = compute_time(w.macs, bits, hw);
    let t_mem = dram as f64 / (hw.dram_bus_bits as f64 * hw.clock_hz);
    let t_stall = (t_mem - t_comp).max(0.0);
    let t_overhead = hw.t_overhead_us * 1e-6;
    let latency = t_comp + t_stall + t_overhead;
    let energy = hw.e_mem_pj_per_bit * 1e-12 * dram as f64 + hw.p_dynamic_w * latency;
    Ok(LayerCost {
        layer: layer.index,
        kind: layer.kind,
        w_bits: bits.w_bits,
        a_bits: bits.a_bits,
        macs: w.macs,
        bitops: w.macs * (bits.w_bits * bits.a_bits) as u64,
        dram_bits: dram,
        t_computation: t_comp,
        t_stall,
        t_overhead,
        latency,
        energy,
        op_intensity: intensity(w.macs, dram),
    })
}

fn intensity(macs: u64, dram_bits: u64) -> f64 {
    if dram_bits == 0 {
        f64::INFINITY
    } else {
        macs as f64 / (dram_bits as f64 / 8.0)
    }
}

/// Latency and energy of every layer plus totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub hardware: String,
    pub layers: Vec<LayerCost>,
    pub total_latency: f64,
    pub total_energy: f64,
    pub total_dram_bits: u64,
    pub total_macs: u64,
    pub total_bitops: u64,
}

pub fn cost_report(layers: &[LayerSpec], policy: &BitwidthPolicy, hw: &HardwareConfig) -> Result<CostReport> {
    if policy.len() != layers.len() {
        return Err(Error::PolicyLength {
            policy: policy.len(),
            model: layers.len(),
        });
    }
    let per_layer = layers
        .iter()
        .zip(policy.bits())
        .map(|(l, b)| layer_cost(l, *b, hw))
        .collect::<Result<Vec<_>>>()?;
    Ok(CostReport {
        hardware: hw.name.clone(),
        total_latency: per_layer.iter().map(|c| c.latency).sum(),
        total_energy: per_layer.iter().map(|c| c.energy).sum(),
        total_dram_bits: per_layer.iter().map(|c| c.dram_bits).sum(),
        total_macs: per_layer.iter().map(|c| c.macs).sum(),
        total_bitops: per_layer.iter().map(|c| c.bitops).sum(),
        layers: per_layer,
    })
}

/// Total run latency in seconds.
pub fn latency(layers: &[LayerSpec], policy: &BitwidthPolicy, hw: &HardwareConfig) -> Result<f64> {
    cost_report(layers, policy, hw).map(|r| r.total_latency)
}

/// Total run energy in joules.
pub fn energy(layers: &[LayerSpec], policy: &BitwidthPolicy, hw: &HardwareConfig) -> Result<f64> {
    cost_report(layers, policy, hw).map(|r| r.total_energy)
}

pub fn op_intensity(layer: &LayerSpec, bits: LayerBits, hw: &HardwareConfig) -> f64 {
    let w = layer_workload(layer, hw.batch);
    intensity(w.macs, dram_bits(layer, bits, hw))
}

/// One roofline sample: attained MACs/s is the lesser of the compute roof
/// and the bandwidth slope at the layer's intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RooflinePoint {
    pub layer: usize,
    pub intensity: f64,
    pub attained: f64,
    pub peak: f64,
    pub bandwidth: f64,
}

pub fn roofline_point(layer: &LayerSpec, bits: LayerBits, hw: &HardwareConfig) -> RooflinePoint {
    let peak = peak_ops(hw, bits);
    let bandwidth = hw.bandwidth_bytes_per_s();
    let intensity = op_intensity(layer, bits, hw);
    RooflinePoint {
        layer: layer.index,
        intensity,
        attained: peak.min(intensity * bandwidth),
        peak,
        bandwidth,
    }
}

/// `sum macs * w_bits * a_bits` per image. Accepts any bitwidths.
pub fn bitops(layers: &[LayerSpec], policy: &BitwidthPolicy) -> u64 {
    layers
        .iter()
        .zip(policy.bits())
        .map(|(l, b)| l.macs_per_sample() * (b.w_bits * b.a_bits) as u64)
        .sum()
}

impl CostReport {
    /// Columns: layer, kind, w_bits, a_bits, macs, dram_bits, t_comp_us,
    /// t_stall_us, latency_us, energy_uj, intensity.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "layer",
            "kind",
            "w_bits",
            "a_bits",
            "macs",
            "dram_bits",
            "t_comp_us",
            "t_stall_us",
            "latency_us",
            "energy_uj",
            "intensity",
        ])?;
        for c in &self.layers {
            w.write_record([
                c.layer.to_string(),
                c.kind.as_str().to_string(),
                c.w_bits.to_string(),
                c.a_bits.to_string(),
                c.macs.to_string(),
                c.dram_bits.to_string(),
                fmt(c.t_computation * 1e6),
                fmt(c.t_stall * 1e6),
                fmt(c.latency * 1e6),
                fmt(c.energy * 1e6),
                fmt(c.op_intensity),
            ])?;
        }
        finish(w)
    }
}

/// Plot data, one row per layer: intensity, attained, peak, bandwidth.
pub fn roofline_csv(layers: &[LayerSpec], policy: &BitwidthPolicy, hw: &HardwareConfig) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", "intensity", "attained", "peak", "bandwidth"])?;
    for (l, b) in layers.iter().zip(policy.bits()) {
        let p = roofline_point(l, *b, hw);
        w.write_record([
            p.layer.to_string(),
            fmt(p.intensity),
            fmt(p.attained),
            fmt(p.peak),
            fmt(p.bandwidth),
        ])?;
    }
    finish(w)
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_examples() {
        let fc = LayerSpec::fc(0, 256, 10).unwrap();
        assert_eq!(layer_workload(&fc, 1).macs, 2560);
        let dw = LayerSpec::depthwise(0, 8, 3, 1, 8).unwrap();
        assert_eq!(layer_workload(&dw, 1).macs, 4608);
        let pw = LayerSpec::conv(0, 8, 16, 1, 1, 8).unwrap();
        let w = layer_workload(&pw, 2);
        assert_eq!((w.macs, w.weights, w.act_in, w.act_out), (16384, 128, 1024, 2048));
    }

    #[test]
    fn pow2_rounding() {
        let got: Vec<u32> = (1..=8).map(pow2_bits).collect();
        assert_eq!(got, vec![2, 2, 4, 4, 8, 8, 8, 8]);
    }

    #[test]
    fn temporal_compute_scales_with_bit_product() {
        let hw = HardwareConfig::edge();
        let t4 = compute_time(10_000, LayerBits::new(2, 3), &hw);
        let t16 = compute_time(10_000, LayerBits::new(4, 6), &hw);
        assert_eq!(t16, 4.0 * t4);
    }

    #[test]
    fn spatial_eight_vs_two_bit_ratio() {
        let hw = HardwareConfig::spatial();
        let t8 = compute_time(12_345, LayerBits::uniform(8), &hw);
        let t2 = compute_time(12_345, LayerBits::uniform(2), &hw);
        assert_eq!(t8 / t2, 16.0);
    }

    #[test]
    fn rejects_out_of_range_bits() {
        let l = LayerSpec::fc(3, 4, 2).unwrap();
        let err = layer_cost(&l, LayerBits::new(1, 8), &HardwareConfig::edge()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedBits { layer: 3, bits: 1 }));
    }
}
