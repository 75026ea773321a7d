use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    Fc,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise_conv",
            LayerKind::Fc => "fc",
        }
    }

    pub fn is_conv(self) -> bool {
        !matches!(self, LayerKind::Fc)
    }
}

/// Static description of one layer.
///
/// For fully-connected layers `c_in`/`c_out` hold the hidden sizes,
/// `kernel` is 1, `stride` is 0 and `feat` is the input vector length.
/// Convolutions use "same" padding, so the output side is `feat / stride`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    pub kind: LayerKind,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub feat: usize,
    pub bias: bool,
    pub n_params: usize,
}

impl LayerSpec {
    /// Builds and validates a layer. `kernel`/`stride` are ignored for fc.
    pub fn new(
        index: usize,
        kind: LayerKind,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        feat: usize,
        bias: bool,
    ) -> Result<Self> {
        let (kernel, stride) = match kind {
            LayerKind::Fc => (1, 0),
            _ => (kernel, stride),
        };
        let mut spec = Self {
            index,
            kind,
            c_in,
            c_out,
            kernel,
            stride,
            feat,
            bias,
            n_params: 0,
        };
        spec.validate()?;
        spec.n_params = spec.weight_count() + spec.bias_count();
        Ok(spec)
    }

    pub fn conv(index: usize, c_in: usize, c_out: usize, kernel: usize, stride: usize, feat: usize) -> Result<Self> {
        Self::new(index, LayerKind::Conv, c_in, c_out, kernel, stride, feat, true)
    }

    pub fn depthwise(index: usize, channels: usize, kernel: usize, stride: usize, feat: usize) -> Result<Self> {
        Self::new(index, LayerKind::DepthwiseConv, channels, channels, kernel, stride, feat, true)
    }

    pub fn fc(index: usize, h_in: usize, h_out: usize) -> Result<Self> {
        Self::new(index, LayerKind::Fc, h_in, h_out, 1, 0, h_in, true)
    }

    fn validate(&self) -> Result<()> {
        let k = self.index;
        if self.c_in == 0 || self.c_out == 0 || self.feat == 0 {
            return Err(Error::Schema(format!("layer {k}: zero-sized dimension")));
        }
        match self.kind {
            LayerKind::Fc => {
                if self.feat != self.c_in {
                    return Err(Error::Schema(format!(
                        "layer {k}: fc feat ({}) must equal c_in ({})",
                        self.feat, self.c_in
                    )));
                }
            }
            kind => {
                if !matches!(self.stride, 1 | 2) {
                    return Err(Error::Schema(format!("layer {k}: stride must be 1 or 2")));
                }
                if self.kernel == 0 || self.kernel % 2 == 0 {
                    return Err(Error::Schema(format!("layer {k}: kernel must be odd")));
                }
                if self.feat % self.stride != 0 {
                    return Err(Error::Schema(format!(
                        "layer {k}: feat {} not divisible by stride {}",
                        self.feat, self.stride
                    )));
                }
                if kind == LayerKind::DepthwiseConv && self.c_in != self.c_out {
                    return Err(Error::Schema(format!(
                        "layer {k}: depthwise conv needs c_in == c_out"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Binary depthwise indicator.
    pub fn i_dw(&self) -> u8 {
        u8::from(self.kind == LayerKind::DepthwiseConv)
    }

    pub fn out_feat(&self) -> usize {
        match self.kind {
            LayerKind::Fc => 1,
            _ => self.feat / self.stride,
        }
    }

    /// Number of input values per sample.
    pub fn input_len(&self) -> usize {
        match self.kind {
            LayerKind::Fc => self.c_in,
            _ => self.c_in * self.feat * self.feat,
        }
    }

    /// Number of output values per sample.
    pub fn output_len(&self) -> usize {
        match self.kind {
            LayerKind::Fc => self.c_out,
            _ => self.c_out * self.out_feat() * self.out_feat(),
        }
    }

    pub fn weight_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        match self.kind {
            LayerKind::Conv => self.c_in * self.c_out * k2,
            LayerKind::DepthwiseConv => self.c_in * k2,
            LayerKind::Fc => self.c_in * self.c_out,
        }
    }

    pub fn bias_count(&self) -> usize {
        if self.bias {
            self.c_out
        } else {
            0
        }
    }

    /// Multiply-accumulates for one sample.
    pub fn macs_per_sample(&self) -> u64 {
        let k2 = (self.kernel * self.kernel) as u64;
        let of = self.out_feat() as u64;
        match self.kind {
            LayerKind::Conv => self.c_out as u64 * of * of * self.c_in as u64 * k2,
            LayerKind::DepthwiseConv => self.c_out as u64 * of * of * k2,
            LayerKind::Fc => self.c_in as u64 * self.c_out as u64,
        }
    }
}
