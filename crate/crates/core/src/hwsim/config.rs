use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the accelerator trades bitwidth for throughput.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Bit-serial: every weight-bit x activation-bit pair takes one pass.
    Temporal,
    /// Fused 2-bit bricks: low-precision operands fuse into more MACs per PE.
    Spatial,
}

/// Parametric accelerator description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub name: String,
    pub family: Family,
    /// Images per run.
    pub batch: u64,
    pub pe_rows: u64,
    pub pe_cols: u64,
    /// Total DRAM port width, bits per cycle.
    pub dram_bus_bits: u64,
    pub clock_hz: f64,
    pub on_chip_kib: u64,
    pub e_mem_pj_per_bit: f64,
    pub p_dynamic_w: f64,
    pub t_overhead_us: f64,
    /// Temporal family: width of each PE's binary dot-product unit, i.e.
    /// one-bit products per PE per cycle. Unused by the spatial family.
    #[serde(default = "default_bit_lanes")]
    pub bit_lanes: u64,
    /// Hypothetical: everything already on chip, no DRAM traffic.
    #[serde(default)]
    pub all_on_chip: bool,
}

fn default_bit_lanes() -> u64 {
    1
}

impl HardwareConfig {
    /// Bit-serial edge accelerator: batch 1, 8x8 PEs, 4x64b port, 140 x
    /// 36 Kb block RAM.
    pub fn edge() -> Self {
        Self {
            name: "edge".into(),
            family: Family::Temporal,
            batch: 1,
            pe_rows: 8,
            pe_cols: 8,
            dram_bus_bits: 4 * 64,
            clock_hz: 100e6,
            on_chip_kib: 140 * 36 / 8,
            e_mem_pj_per_bit: 20.0,
            p_dynamic_w: 0.005 * 64.0,
            t_overhead_us: 0.05,
            bit_lanes: 128,
            all_on_chip: false,
        }
    }

    /// Bit-serial cloud accelerator: batch 16, 16x16 PEs, 4x256b port, 2160
    /// x 36 Kb block RAM.
    pub fn cloud() -> Self {
        Self {
            name: "cloud".into(),
            family: Family::Temporal,
            batch: 16,
            pe_rows: 16,
            pe_cols: 16,
            dram_bus_bits: 4 * 256,
            clock_hz: 250e6,
            on_chip_kib: 2160 * 36 / 8,
            e_mem_pj_per_bit: 20.0,
            p_dynamic_w: 0.005 * 256.0,
            t_overhead_us: 0.05,
            bit_lanes: 32,
            all_on_chip: false,
        }
    }

    /// Fused-PE spatial accelerator with the edge array and port.
    pub fn spatial() -> Self {
        Self {
            name: "spatial".into(),
            family: Family::Spatial,
            batch: 1,
            pe_rows: 8,
            pe_cols: 8,
            dram_bus_bits: 4 * 64,
            clock_hz: 100e6,
            on_chip_kib: 140 * 36 / 8,
            e_mem_pj_per_bit: 20.0,
            p_dynamic_w: 0.005 * 64.0,
            t_overhead_us: 0.05,
            bit_lanes: 1,
            all_on_chip: false,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "edge" => Some(Self::edge()),
            "cloud" => Some(Self::cloud()),
            "spatial" => Some(Self::spatial()),
            _ => None,
        }
    }

    /// A preset name or a path to a config JSON file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match Self::preset(spec) {
            Some(hw) => Ok(hw),
            None => Self::load(Path::new(spec)),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let hw: Self = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let ints = [
            ("batch", self.batch),
            ("pe_rows", self.pe_rows),
            ("pe_cols", self.pe_cols),
            ("dram_bus_bits", self.dram_bus_bits),
            ("on_chip_kib", self.on_chip_kib),
            ("bit_lanes", self.bit_lanes),
        ];
        for (name, v) in ints {
            if v == 0 {
                return Err(Error::Schema(format!("hardware {name} must be positive")));
            }
        }
        let floats = [
            ("clock_hz", self.clock_hz),
            ("e_mem_pj_per_bit", self.e_mem_pj_per_bit),
            ("p_dynamic_w", self.p_dynamic_w),
        ];
        for (name, v) in floats {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Schema(format!("hardware {name} must be positive")));
            }
        }
        if !(self.t_overhead_us >= 0.0 && self.t_overhead_us.is_finite()) {
            return Err(Error::Schema("hardware t_overhead_us must be non-negative".into()));
        }
        Ok(())
    }

    pub fn pe_count(&self) -> u64 {
        self.pe_rows * self.pe_cols
    }

    pub fn on_chip_bits(&self) -> u64 {
        self.on_chip_kib * 1024 * 8
    }

    /// DRAM bandwidth in bytes per second.
    pub fn bandwidth_bytes_per_s(&self) -> f64 {
        self.dram_bus_bits as f64 / 8.0 * self.clock_hz
    }
}
