//! Per-layer bitwidth assignments and their JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Smallest bitwidth the search may assign.
pub const B_MIN: u32 = 2;
/// Largest bitwidth the search may assign; pinned layers always use it.
pub const B_MAX: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerBits {
    pub w_bits: u32,
    pub a_bits: u32,
}

impl LayerBits {
    pub const fn new(w_bits: u32, a_bits: u32) -> Self {
        Self { w_bits, a_bits }
    }

    pub const fn uniform(bits: u32) -> Self {
        Self::new(bits, bits)
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyEntry {
    k: usize,
    w_bits: u32,
    a_bits: u32,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    layers: Vec<PolicyEntry>,
    pinned: Vec<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    infeasible: bool,
}

/// The search output: one `(w_bits, a_bits)` pair per layer plus the set of
/// layers pinned at [`B_MAX`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitwidthPolicy {
    bits: Vec<LayerBits>,
    pinned: Vec<usize>,
    /// Set by budget enforcement when the limit could not be met.
    pub infeasible: bool,
}

impl BitwidthPolicy {
    /// Uniform policy with the first and last layers pinned at 8/8.
    pub fn uniform(n_layers: usize, bits: u32) -> Self {
        let pinned = default_pinned(n_layers);
        let mut policy = Self {
            bits: vec![LayerBits::uniform(bits); n_layers],
            pinned,
            infeasible: false,
        };
        policy.apply_pins();
        policy
    }

    /// Builds a policy with the default pins (first and last layer), forcing
    /// pinned entries to 8/8.
    pub fn with_default_pins(bits: Vec<LayerBits>) -> Self {
        let pinned = default_pinned(bits.len());
        let mut policy = Self {
            bits,
            pinned,
            infeasible: false,
        };
        policy.apply_pins();
        policy
    }

    /// Builds a policy verbatim, without pins and without range checks.
    /// Used for hypothetical cost evaluations (e.g. 1-bit BitOPs probes).
    pub fn unpinned(bits: Vec<LayerBits>) -> Self {
        Self {
            bits,
            pinned: Vec::new(),
            infeasible: false,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[LayerBits] {
        &self.bits
    }

    pub fn layer(&self, k: usize) -> LayerBits {
        self.bits[k]
    }

    pub fn pinned(&self) -> &[usize] {
        &self.pinned
    }

    pub fn is_pinned(&self, k: usize) -> bool {
        self.pinned.contains(&k)
    }

    /// Indices of layers the search is allowed to change, ascending.
    pub fn unpinned_layers(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|k| !self.is_pinned(*k)).collect()
    }

    /// Sets a layer's bits. Pinned layers are left untouched.
    pub fn set(&mut self, k: usize, bits: LayerBits) {
        if !self.is_pinned(k) {
            self.bits[k] = bits;
        }
    }

    pub fn set_w(&mut self, k: usize, w_bits: u32) {
        if !self.is_pinned(k) {
            self.bits[k].w_bits = w_bits;
        }
    }

    pub fn set_a(&mut self, k: usize, a_bits: u32) {
        if !self.is_pinned(k) {
            self.bits[k].a_bits = a_bits;
        }
    }

    fn apply_pins(&mut self) {
        for &k in &self.pinned {
            if k < self.bits.len() {
                self.bits[k] = LayerBits::uniform(B_MAX);
            }
        }
    }

    /// Checks the policy against a model with `n_layers` layers: length,
    /// pins at 8/8 and every bitwidth within `[B_MIN, B_MAX]`.
    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if self.bits.len() != n_layers {
            return Err(Error::PolicyLength {
                policy: self.bits.len(),
                model: n_layers,
            });
        }
        for &k in &self.pinned {
            if k >= n_layers {
                return Err(Error::Schema(format!("pinned layer {k} out of range")));
            }
            if self.bits[k] != LayerBits::uniform(B_MAX) {
                return Err(Error::Schema(format!("pinned layer {k} is not 8/8")));
            }
        }
        for (k, b) in self.bits.iter().enumerate() {
            for bits in [b.w_bits, b.a_bits] {
                if !(B_MIN..=B_MAX).contains(&bits) {
                    return Err(Error::UnsupportedBits { layer: k, bits });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            layers: self
                .bits
                .iter()
                .enumerate()
                .map(|(k, b)| PolicyEntry {
                    k,
                    w_bits: b.w_bits,
                    a_bits: b.a_bits,
                })
                .collect(),
            pinned: self.pinned.clone(),
            infeasible: self.infeasible,
        };
        serde_json::to_string_pretty(&file).expect("policy serializes")
    }

    /// Parses policy JSON. Layer entries must list every `k` from 0 upward
    /// exactly once.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(text)?;
        let n = file.layers.len();
        let mut bits = vec![None; n];
        for e in &file.layers {
            if e.k >= n {
                return Err(Error::Schema(format!(
                    "policy entry k={} but only {n} entries (missing layer?)",
                    e.k
                )));
            }
            if bits[e.k].is_some() {
                return Err(Error::Schema(format!("duplicate policy entry k={}", e.k)));
            }
            bits[e.k] = Some(LayerBits::new(e.w_bits, e.a_bits));
        }
        let bits = bits
            .into_iter()
            .enumerate()
            .map(|(k, b)| b.ok_or_else(|| Error::Schema(format!("policy missing layer {k}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bits,
            pinned: file.pinned,
            infeasible: file.infeasible,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn default_pinned(n_layers: usize) -> Vec<usize> {
    match n_layers {
        0 => Vec::new(),
        1 => vec![0],
        n => vec![0, n - 1],
    }
}
