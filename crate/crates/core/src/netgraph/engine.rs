//! Per-sample layer kernels: forward and backward for conv, depthwise conv
//! and fully-connected layers.
//!
//! Layouts: activations are `C x H x W` row-major; conv weights are
//! `[c_out][c_in][k][k]`, depthwise `[c][k][k]`, fc `[h_out][h_in]`.

use super::layer::{LayerKind, LayerSpec};

/// Output index range `[lo, hi)` for which `o * stride + offset` falls
/// inside `[0, len)`.
#[inline]
fn valid_range(offset: isize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let hi_excl = {
        let last = len as isize - 1 - offset;
        if last < 0 {
            0
        } else {
            last / s + 1
        }
    };
    let lo = lo.max(0) as usize;
    let hi = (hi_excl.max(0) as usize).min(out_len);
    (lo.min(hi), hi)
}

/// Input channel slices feeding output channel `co`.
#[inline]
fn input_channels(spec: &LayerSpec, co: usize) -> std::ops::Range<usize> {
    match spec.kind {
        LayerKind::DepthwiseConv => co..co + 1,
        _ => 0..spec.c_in,
    }
}

#[inline]
fn weight_offset(spec: &LayerSpec, co: usize, ci: usize) -> usize {
    let k2 = spec.kernel * spec.kernel;
    match spec.kind {
        LayerKind::DepthwiseConv => co * k2,
        _ => (co * spec.c_in + ci) * k2,
    }
}

pub(crate) fn forward(spec: &LayerSpec, w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), spec.input_len());
    debug_assert_eq!(y.len(), spec.output_len());
    match spec.kind {
        LayerKind::Fc => {
            let n_in = spec.c_in;
            for (o, out) in y.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                let acc: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                *out = acc + b.get(o).copied().unwrap_or(0.0);
            }
        }
        _ => conv_forward(spec, w, b, x, y),
    }
}

fn conv_forward(spec: &LayerSpec, w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    let f = spec.feat;
    let of = spec.out_feat();
    let k = spec.kernel;
    let s = spec.stride;
    let pad = (k / 2) as isize;
    let plane = of * of;
    for co in 0..spec.c_out {
        let out = &mut y[co * plane..(co + 1) * plane];
        out.fill(b.get(co).copied().unwrap_or(0.0));
        for ci in input_channels(spec, co) {
            let xin = &x[ci * f * f..(ci + 1) * f * f];
            let wbase = weight_offset(spec, co, ci);
            for ky in 0..k {
                let (oy_lo, oy_hi) = valid_range(ky as isize - pad, s, f, of);
                for kx in 0..k {
                    let wv = w[wbase + ky * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox_lo, ox_hi) = valid_range(kx as isize - pad, s, f, of);
                    for oy in oy_lo..oy_hi {
                        let iy = (oy * s + ky) as isize - pad;
                        let xrow = &xin[iy as usize * f..(iy as usize + 1) * f];
                        let orow = &mut out[oy * of..(oy + 1) * of];
                        for ox in ox_lo..ox_hi {
                            let ix = ((ox * s + kx) as isize - pad) as usize;
                            orow[ox] += wv * xrow[ix];
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates parameter gradients into `gw`/`gb` and, when `gx` is given,
/// writes (overwrites) the input gradient.
pub(crate) fn backward(
    spec: &LayerSpec,
    w: &[f64],
    x: &[f64],
    gy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut gx: Option<&mut [f64]>,
) {
    if let Some(g) = gx.as_deref_mut() {
        g.fill(0.0);
    }
    match spec.kind {
        LayerKind::Fc => {
            let n_in = spec.c_in;
            for (o, &g) in gy.iter().enumerate() {
                if !gb.is_empty() {
                    gb[o] += g;
                }
                if g == 0.0 {
                    continue;
                }
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for (gwv, xv) in grow.iter_mut().zip(x) {
                    *gwv += g * xv;
                }
                if let Some(gx) = gx.as_deref_mut() {
                    let wrow = &w[o * n_in..(o + 1) * n_in];
                    for (gxv, wv) in gx.iter_mut().zip(wrow) {
                        *gxv += g * wv;
                    }
                }
            }
        }
        _ => conv_backward(spec, w, x, gy, gw, gb, gx),
    }
}

fn conv_backward(
    spec: &LayerSpec,
    w: &[f64],
    x: &[f64],
    gy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut gx: Option<&mut [f64]>,
) {
    let f = spec.feat;
    let of = spec.out_feat();
    let k = spec.kernel;
    let s = spec.stride;
    let pad = (k / 2) as isize;
    let plane = of * of;
    for co in 0..spec.c_out {
        let gout = &gy[co * plane..(co + 1) * plane];
        if !gb.is_empty() {
            gb[co] += gout.iter().sum::<f64>();
        }
        for ci in input_channels(spec, co) {
            let xin = &x[ci * f * f..(ci + 1) * f * f];
            let wbase = weight_offset(spec, co, ci);
            for ky in 0..k {
                let (oy_lo, oy_hi) = valid_range(ky as isize - pad, s, f, of);
                for kx in 0..k {
                    let (ox_lo, ox_hi) = valid_range(kx as isize - pad, s, f, of);
                    let wv = w[wbase + ky * k + kx];
                    let mut acc = 0.0;
                    for oy in oy_lo..oy_hi {
                        let iy = ((oy * s + ky) as isize - pad) as usize;
                        let xrow = &xin[iy * f..(iy + 1) * f];
                        let grow = &gout[oy * of..(oy + 1) * of];
                        for ox in ox_lo..ox_hi {
                            let ix = ((ox * s + kx) as isize - pad) as usize;
                            acc += grow[ox] * xrow[ix];
                        }
                    }
                    gw[wbase + ky * k + kx] += acc;
                    if let Some(gx) = gx.as_deref_mut() {
                        if wv == 0.0 {
                            continue;
                        }
                        let gin = &mut gx[ci * f * f..(ci + 1) * f * f];
                        for oy in oy_lo..oy_hi {
                            let iy = ((oy * s + ky) as isize - pad) as usize;
                            let grow = &gout[oy * of..(oy + 1) * of];
                            let girow = &mut gin[iy * f..(iy + 1) * f];
                            for ox in ox_lo..ox_hi {
                                let ix = ((ox * s + kx) as isize - pad) as usize;
                                girow[ix] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}
