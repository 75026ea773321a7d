//! One-dimensional k-means codebooks for weight sharing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const KMEANS_DEFAULT_ITERS: usize = 50;
const KMEANS_SEED: u64 = 0x6b6d;
const MOVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookQuant {
    pub bits: u32,
    /// Sorted ascending; `2^bits` entries.
    pub centroids: Vec<f64>,
    pub assignments: Vec<u32>,
    /// Sum of squared errors after each assignment step.
    pub sse_history: Vec<f64>,
    /// Set when the input had fewer distinct values than centroids and the
    /// codebook was padded with duplicates.
    pub degenerate: bool,
}

impl CodebookQuant {
    pub fn sse(&self) -> f64 {
        *self.sse_history.last().unwrap_or(&0.0)
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.assignments.iter().map(|&a| self.centroids[a as usize]).collect()
    }
}

/// Index of the nearest centroid in a sorted codebook; exact midpoints go to
/// the lower centroid.
#[inline]
pub fn nearest(centroids: &[f64], x: f64) -> usize {
    // first centroid strictly above x
    let hi = centroids.partition_point(|&c| c <= x);
    if hi == 0 {
        return 0;
    }
    if hi == centroids.len() {
        return hi - 1;
    }
    let lo = hi - 1;
    if x - centroids[lo] <= centroids[hi] - x {
        lo
    } else {
        hi
    }
}

fn assign(values: &[f64], centroids: &[f64], out: &mut [u32]) -> f64 {
    let mut sse = 0.0;
    for (v, a) in values.iter().zip(out.iter_mut()) {
        let i = nearest(centroids, *v);
        *a = i as u32;
        let d = v - centroids[i];
        sse += d * d;
    }
    sse
}

/// Farthest-point seeding: the first centre is drawn with a fixed seed, each
/// following one is the value farthest from its nearest chosen centre.
fn seed_centroids(values: &[f64], k: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(KMEANS_SEED);
    let mut centres = vec![values[rng.random_range(0..values.len())]];
    let mut dist: Vec<f64> = values.iter().map(|v| (v - centres[0]).abs()).collect();
    while centres.len() < k {
        let (idx, &d) = dist
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if d <= 0.0 {
            break;
        }
        let c = values[idx];
        centres.push(c);
        for (dv, v) in dist.iter_mut().zip(values) {
            *dv = dv.min((v - c).abs());
        }
    }
    centres
}

/// Lloyd's algorithm over `2^bits` centroids, stopping after `iters` updates
/// or once no centroid moves by more than 1e-6.
pub fn kmeans_quantize(values: &[f64], bits: u32, iters: usize) -> Result<CodebookQuant> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(1..=16).contains(&bits) {
        return Err(Error::InvalidArgument(format!("codebook bits must be in [1, 16], got {bits}")));
    }
    let k = 1usize << bits;
    let mut centroids = seed_centroids(values, k);
    let degenerate = centroids.len() < k;
    while centroids.len() < k {
        centroids.push(*centroids.last().expect("non-empty"));
    }
    centroids.sort_by(f64::total_cmp);

    let mut assignments = vec![0u32; values.len()];
    let mut sse_history = vec![assign(values, &centroids, &mut assignments)];
    for _ in 0..iters {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in values.iter().zip(&assignments) {
            sums[a as usize] += v;
            counts[a as usize] += 1;
        }
        let mut moved = 0.0f64;
        for i in 0..k {
            if counts[i] > 0 {
                let c = sums[i] / counts[i] as f64;
                moved = moved.max((c - centroids[i]).abs());
                centroids[i] = c;
            }
        }
        centroids.sort_by(f64::total_cmp);
        sse_history.push(assign(values, &centroids, &mut assignments));
        if moved < MOVE_TOL {
            break;
        }
    }
    Ok(CodebookQuant {
        bits,
        centroids,
        assignments,
        sse_history,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_symmetric_values_one_bit() {
        let vals: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let cb = kmeans_quantize(&vals, 1, 50).unwrap();
        assert_eq!(cb.centroids, vec![-1.0, 1.0]);
        assert_eq!(cb.sse(), 0.0);
        assert!(!cb.degenerate);
    }

    #[test]
    fn separated_clusters_recover_means() {
        let centres = [-10.0, -1.0, 3.0, 20.0];
        let mut vals = Vec::new();
        for (i, c) in centres.iter().enumerate() {
            for j in 0..(5 + i) {
                vals.push(c + 0.1 * (j as f64 - (4 + i) as f64 / 2.0));
            }
        }
        let cb = kmeans_quantize(&vals, 2, 50).unwrap();
        for (got, want) in cb.centroids.iter().zip(centres) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn identical_values_are_flagged() {
        let cb = kmeans_quantize(&[0.25; 10], 2, 50).unwrap();
        assert!(cb.degenerate);
        assert_eq!(cb.centroids, vec![0.25; 4]);
        assert_eq!(cb.sse(), 0.0);
    }

    #[test]
    fn midpoint_goes_low() {
        assert_eq!(nearest(&[0.0, 1.0], 0.5), 0);
        assert_eq!(nearest(&[0.0, 1.0], 0.51), 1);
        assert_eq!(nearest(&[0.0, 1.0], -4.0), 0);
        assert_eq!(nearest(&[0.0, 1.0], 4.0), 1);
        // duplicates: lowest index of the tied value is not required, but
        // the value must be the nearest
        assert_eq!(nearest(&[0.0, 1.0, 1.0], 0.9), 1);
    }
}
