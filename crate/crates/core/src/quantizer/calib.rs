//! Histogram-based KL-divergence clip calibration.

use super::linear::QuantMode;
use crate::{round_half_away, Error, Result};

pub const HIST_BINS: usize = 2048;
pub const CLIP_CANDIDATES: usize = 100;
const KL_EPS: f64 = 1e-9;

/// Equal-width histogram of `|x|` over `[0, max_abs]`.
///
/// Exact zeros are tallied separately in `zeros`: every grid represents
/// zero exactly, and the post-ReLU spike at zero would otherwise swamp the
/// divergence and drag the clip far below the bulk of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<f64>,
    pub max_abs: f64,
    pub zeros: f64,
}

impl Histogram {
    pub fn from_values(values: &[f64]) -> Self {
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut counts = vec![0.0; HIST_BINS];
        let mut zeros = 0.0;
        let inv = if max_abs > 0.0 { HIST_BINS as f64 / max_abs } else { 0.0 };
        for v in values {
            if *v == 0.0 {
                zeros += 1.0;
                continue;
            }
            let i = ((v.abs() * inv) as usize).min(HIST_BINS - 1);
            counts[i] += 1.0;
        }
        Self { counts, max_abs, zeros }
    }

    /// Number of binned (non-zero) values.
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        self.max_abs / self.counts.len() as f64
    }
}

/// Chosen clip and the divergence it achieved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub clip: f64,
    pub kl: f64,
}

/// Number of histogram bins covered by candidate `j` (1-based) of the clip
/// grid spanning `(0.05 max_abs, max_abs]`.
pub fn candidate_bins(j: usize, bins: usize) -> usize {
    let frac = 0.05 + 0.95 * j as f64 / CLIP_CANDIDATES as f64;
    (round_half_away(bins as f64 * frac) as usize).clamp(1, bins)
}

/// KL divergence between the full histogram and its quantized
/// reconstruction when clipping after the first `m` bins with `n` positive
/// grid levels.
///
/// Every bin below `m` is assigned the grid level nearest its centre; the
/// tail beyond `m` saturates at the top level. Each level's mass is spread
/// back evenly over the in-range bins that held data and mapped to it, so
/// clipped-away tail mass is what the divergence penalises.
pub fn kl_for_candidate(counts: &[f64], m: usize, n: i64) -> f64 {
    let bins = counts.len();
    let total: f64 = counts.iter().sum();
    let s = m as f64 / n as f64; // grid step in units of bins
    let level_of = |i: usize| -> usize {
        let centre = i as f64 + 0.5;
        (round_half_away(centre / s) as i64).min(n) as usize
    };
    let levels = n as usize + 1;
    let mut mass = vec![0.0; levels];
    let mut support = vec![0usize; levels];
    for (i, &c) in counts.iter().enumerate() {
        let l = if i < m { level_of(i) } else { n as usize };
        mass[l] += c;
        if i < m && c > 0.0 {
            support[l] += 1;
        }
    }
    let mut q = vec![0.0; bins];
    for (i, &c) in counts.iter().enumerate().take(m) {
        let l = level_of(i);
        if c > 0.0 {
            q[i] = mass[l] / support[l] as f64;
        }
    }
    if support[n as usize] == 0 && mass[n as usize] > 0.0 {
        q[m - 1] += mass[n as usize];
    }
    let p = smooth(counts.iter().map(|c| c / total));
    let q = smooth(q.iter().map(|v| v / total));
    p.iter().zip(&q).map(|(pi, qi)| pi * (pi / qi).ln()).sum()
}

fn smooth(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = it.map(|x| if x > 0.0 { x } else { KL_EPS }).collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    v
}

/// Picks the clip minimizing the divergence; ties keep the smaller clip.
///
/// Both modes share the `|x|` histogram and the `2^(b-1) - 1` positive
/// levels, so `mode` only documents intent.
pub fn calibrate(hist: &Histogram, bits: u32, _mode: QuantMode) -> Result<Calibration> {
    if !(2..=8).contains(&bits) {
        return Err(Error::InvalidArgument(format!("linear bits must be in [2, 8], got {bits}")));
    }
    if hist.total() <= 0.0 {
        if hist.zeros <= 0.0 {
            return Err(Error::EmptyHistogram);
        }
        // All-zero data: any clip reproduces it exactly.
        return Ok(Calibration { clip: 1.0, kl: 0.0 });
    }
    let n = (1i64 << (bits - 1)) - 1;
    let bins = hist.counts.len();
    let bw = hist.bin_width();
    let mut best: Option<Calibration> = None;
    for j in 1..=CLIP_CANDIDATES {
        let m = candidate_bins(j, bins);
        let kl = kl_for_candidate(&hist.counts, m, n);
        let clip = m as f64 * bw;
        if best.map_or(true, |b| kl < b.kl) {
            best = Some(Calibration { clip, kl });
        }
    }
    Ok(best.expect("at least one candidate"))
}

pub fn calibrate_clip(hist: &Histogram, bits: u32, mode: QuantMode) -> Result<f64> {
    calibrate(hist, bits, mode).map(|c| c.clip)
}
