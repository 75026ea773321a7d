use serde::{Deserialize, Serialize};

use crate::{round_half_away, Error, Result};

/// Symmetric grids quantize weights; non-negative grids quantize post-ReLU
/// activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantMode {
    Symmetric,
    NonNegative,
}

/// Linear quantizer parameters: `s = c / (2^(b-1) - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub bits: u32,
    pub clip: f64,
    pub mode: QuantMode,
}

impl QuantParams {
    pub fn new(bits: u32, clip: f64, mode: QuantMode) -> Result<Self> {
        if !(2..=8).contains(&bits) {
            return Err(Error::InvalidArgument(format!("linear bits must be in [2, 8], got {bits}")));
        }
        if !(clip > 0.0 && clip.is_finite()) {
            return Err(Error::InvalidArgument(format!("clip must be positive and finite, got {clip}")));
        }
        Ok(Self { bits, clip, mode })
    }

    /// Largest grid index, `2^(b-1) - 1`.
    pub fn max_level(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    pub fn scale(&self) -> f64 {
        self.clip / self.max_level() as f64
    }

    /// Number of distinct representable values.
    pub fn levels(&self) -> usize {
        match self.mode {
            QuantMode::Symmetric => 2 * self.max_level() as usize + 1,
            QuantMode::NonNegative => self.max_level() as usize + 1,
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self.mode {
            QuantMode::Symmetric => (-self.clip, self.clip),
            QuantMode::NonNegative => (0.0, self.clip),
        }
    }

    #[inline]
    pub fn quantize(&self, x: f64) -> f64 {
        let (lo, hi) = self.range();
        let s = self.scale();
        let level = round_half_away(x.clamp(lo, hi) / s);
        // Guards against the division landing a hair past the last level.
        let n = self.max_level() as f64;
        let level = match self.mode {
            QuantMode::Symmetric => level.clamp(-n, n),
            QuantMode::NonNegative => level.clamp(0.0, n),
        };
        level * s
    }
}

/// `round(clamp(x, c) / s) * s` elementwise.
pub fn linear_quantize(values: &[f64], q: &QuantParams) -> Vec<f64> {
    values.iter().map(|&v| q.quantize(v)).collect()
}

pub fn linear_quantize_in_place(values: &mut [f64], q: &QuantParams) {
    for v in values {
        *v = q.quantize(*v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_maps_to_zero() {
        for bits in 2..=8 {
            for mode in [QuantMode::Symmetric, QuantMode::NonNegative] {
                let q = QuantParams::new(bits, 0.37, mode).unwrap();
                assert_eq!(q.quantize(0.0), 0.0);
            }
        }
    }

    #[test]
    fn eight_bit_unit_clip_scale() {
        let q = QuantParams::new(8, 1.0, QuantMode::Symmetric).unwrap();
        assert_eq!(q.scale(), 1.0 / 127.0);
        assert_eq!(q.levels(), 255);
    }

    #[test]
    fn two_bit_half_rounds_away() {
        let q = QuantParams::new(2, 1.0, QuantMode::Symmetric).unwrap();
        assert_eq!(q.scale(), 1.0);
        assert_eq!(q.quantize(0.5), 1.0);
        assert_eq!(q.quantize(-0.5), -1.0);
        assert_eq!(q.quantize(0.49), 0.0);
    }

    #[test]
    fn non_negative_truncates_below_zero() {
        let q = QuantParams::new(4, 2.0, QuantMode::NonNegative).unwrap();
        assert_eq!(q.quantize(-3.0), 0.0);
        assert_eq!(q.quantize(5.0), 2.0);
        assert_eq!(q.levels(), 8);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(QuantParams::new(1, 1.0, QuantMode::Symmetric).is_err());
        assert!(QuantParams::new(9, 1.0, QuantMode::Symmetric).is_err());
        assert!(QuantParams::new(4, 0.0, QuantMode::Symmetric).is_err());
        assert!(QuantParams::new(4, f64::NAN, QuantMode::Symmetric).is_err());
    }
}
