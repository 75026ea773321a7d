//! Independent reference implementations used to pin library results.
//! Written for clarity, not speed; shared by the integration and
//! acceptance suites.
#![allow(dead_code)]

use bitforge::netgraph::{LayerKind, LayerSpec, ModelGraph};

/// Straight nested-loop layer evaluation with explicit zero padding.
pub fn layer_oracle(spec: &LayerSpec, w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    match spec.kind {
        LayerKind::Fc => (0..spec.c_out)
            .map(|o| {
                let mut acc = if spec.bias { b[o] } else { 0.0 };
                for i in 0..spec.c_in {
                    acc += w[o * spec.c_in + i] * x[i];
                }
                acc
            })
            .collect(),
        kind => {
            let f = spec.feat as isize;
            let k = spec.kernel as isize;
            let pad = k / 2;
            let of = spec.feat / spec.stride;
            let mut y = vec![0.0; spec.c_out * of * of];
            for co in 0..spec.c_out {
                for oy in 0..of {
                    for ox in 0..of {
                        let mut acc = if spec.bias { b[co] } else { 0.0 };
                        let cis: Vec<usize> = if kind == LayerKind::DepthwiseConv {
                            vec![co]
                        } else {
                            (0..spec.c_in).collect()
                        };
                        for ci in cis {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * spec.stride) as isize + ky - pad;
                                    let ix = (ox * spec.stride) as isize + kx - pad;
                                    if iy < 0 || ix < 0 || iy >= f || ix >= f {
                                        continue;
                                    }
                                    let wi = if kind == LayerKind::DepthwiseConv {
                                        (co as isize * k * k + ky * k + kx) as usize
                                    } else {
                                        (((co * spec.c_in + ci) as isize) * k * k + ky * k + kx) as usize
                                    };
                                    let xi = ci * (f * f) as usize + (iy * f + ix) as usize;
                                    acc += w[wi] * x[xi];
                                }
                            }
                        }
                        y[(co * of + oy) * of + ox] = acc;
                    }
                }
            }
            y
        }
    }
}

pub fn forward_oracle(model: &ModelGraph, sample: &[f64]) -> Vec<f64> {
    let mut x = sample.to_vec();
    let n = model.len();
    for (k, spec) in model.layers().iter().enumerate() {
        let p = &model.params()[k];
        x = layer_oracle(spec, &p.weights, &p.bias, &x);
        if k + 1 < n {
            for v in &mut x {
                *v = v.max(0.0);
            }
        }
    }
    x
}

/// Brute-force KL clip search over `values`: bins `|v|` (zeros excluded),
/// evaluates every candidate of the 100-point grid and returns the first
/// minimiser as `(clip, kl)`.
pub fn kl_clip_oracle(values: &[f64], bits: u32) -> (f64, f64) {
    const BINS: usize = 2048;
    let max_abs = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut hist = vec![0.0f64; BINS];
    for v in values.iter().filter(|v| **v != 0.0) {
        let i = ((v.abs() / max_abs) * BINS as f64).floor() as usize;
        hist[i.min(BINS - 1)] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    let bw = max_abs / BINS as f64;
    let n = (1usize << (bits - 1)) - 1;
    let mut best = (f64::NAN, f64::INFINITY);
    for j in 1..=100usize {
        let m = ((BINS as f64 * (0.05 + 0.95 * j as f64 / 100.0)).round() as usize).clamp(1, BINS);
        let step = m as f64 / n as f64;
        // nearest grid level for every in-range bin centre, by search
        let level: Vec<usize> = (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) / step;
                let mut best_l = 0;
                for l in 1..=n {
                    if (x - l as f64).abs() <= (x - best_l as f64).abs() {
                        best_l = l;
                    }
                }
                best_l
            })
            .collect();
        let mut q = vec![0.0f64; BINS];
        for l in 0..=n {
            let members: Vec<usize> = (0..m).filter(|&i| level[i] == l).collect();
            let mut mass: f64 = members.iter().map(|&i| hist[i]).sum();
            if l == n {
                mass += hist[m..].iter().sum::<f64>();
            }
            let live: Vec<usize> = members.into_iter().filter(|&i| hist[i] > 0.0).collect();
            if live.is_empty() {
                if l == n && mass > 0.0 {
                    q[m - 1] += mass;
                }
                continue;
            }
            for &i in &live {
                q[i] = mass / live.len() as f64;
            }
        }
        let norm = |v: Vec<f64>| -> Vec<f64> {
            let v: Vec<f64> = v.into_iter().map(|c| c / total).map(|p| if p > 0.0 { p } else { 1e-9 }).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|p| p / s).collect()
        };
        let p = norm(hist.clone());
        let q = norm(q);
        let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
        if kl < best.1 {
            best = (m as f64 * bw, kl);
        }
    }
    best
}

/// Best-of-`restarts` Lloyd clustering with uniformly random initial centres.
pub fn kmeans_restart_oracle(values: &[f64], k: usize, restarts: u64) -> f64 {
    use rand::{seq::IndexedRandom, SeedableRng};
    let mut best = f64::INFINITY;
    for r in 0..restarts {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + r);
        let mut c: Vec<f64> = values.choose_multiple(&mut rng, k).cloned().collect();
        let mut sse = f64::INFINITY;
        for _ in 0..200 {
            let mut sums = vec![0.0; k];
            let mut counts = vec![0usize; k];
            let mut s = 0.0;
            for v in values {
                let (i, d) = c
                    .iter()
                    .enumerate()
                    .map(|(i, ci)| (i, (v - ci).powi(2)))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                sums[i] += v;
                counts[i] += 1;
                s += d;
            }
            for i in 0..k {
                if counts[i] > 0 {
                    c[i] = sums[i] / counts[i] as f64;
                }
            }
            if (sse - s).abs() < 1e-12 {
                break;
            }
            sse = s;
        }
        best = best.min(sse);
    }
    best
}

/// Row-by-row cost evaluation from raw shape numbers, mirroring how the
/// formulas would be laid out in a spreadsheet: returns per-layer
/// `(latency_s, energy_j)` and the totals.
pub fn cost_oracle(
    layers: &[LayerSpec],
    bits: &[(u32, u32)],
    hw: &bitforge::hwsim::HardwareConfig,
) -> (Vec<(f64, f64)>, f64, f64) {
    use bitforge::hwsim::Family;
    let mut rows = Vec::new();
    for (l, &(wb, ab)) in layers.iter().zip(bits) {
        let b = hw.batch as f64;
        let (macs1, weights, ain, aout) = match l.kind {
            LayerKind::Fc => ((l.c_in * l.c_out) as f64, (l.c_in * l.c_out) as f64, l.c_in as f64, l.c_out as f64),
            LayerKind::Conv => {
                let o = (l.feat / l.stride) as f64;
                let kk = (l.kernel * l.kernel) as f64;
                (
                    l.c_out as f64 * o * o * l.c_in as f64 * kk,
                    (l.c_in * l.c_out) as f64 * kk,
                    (l.c_in * l.feat * l.feat) as f64,
                    l.c_out as f64 * o * o,
                )
            }
            LayerKind::DepthwiseConv => {
                let o = (l.feat / l.stride) as f64;
                let kk = (l.kernel * l.kernel) as f64;
                (
                    l.c_out as f64 * o * o * kk,
                    l.c_in as f64 * kk,
                    (l.c_in * l.feat * l.feat) as f64,
                    l.c_out as f64 * o * o,
                )
            }
        };
        let macs = macs1 * b;
        let pes = (hw.pe_rows * hw.pe_cols) as f64;
        let slices = (macs / pes).ceil();
        let cycles = match hw.family {
            Family::Temporal => slices * (wb * ab) as f64 / hw.bit_lanes as f64,
            Family::Spatial => {
                let p2 = |x: u32| if x <= 2 { 2.0 } else if x <= 4 { 4.0 } else { 8.0 };
                slices / ((16.0 / p2(wb)) * (16.0 / p2(ab)))
            }
        };
        let t_comp = cycles / hw.clock_hz;
        let wbits = weights * wb as f64;
        let cap = (hw.on_chip_kib * 8192) as f64;
        let wtraffic = if wbits > cap { wbits * (wbits / cap).ceil() } else { wbits };
        let dram = if hw.all_on_chip { 0.0 } else { wtraffic + (ain + aout) * b * ab as f64 };
        let t_mem = dram / (hw.dram_bus_bits as f64 * hw.clock_hz);
        let lat = t_comp + (t_mem - t_comp).max(0.0) + hw.t_overhead_us / 1e6;
        let e = hw.e_mem_pj_per_bit / 1e12 * dram + hw.p_dynamic_w * lat;
        rows.push((lat, e));
    }
    let tl = rows.iter().map(|r| r.0).sum();
    let te = rows.iter().map(|r| r.1).sum();
    (rows, tl, te)
}
