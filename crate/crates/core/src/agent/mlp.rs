use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputAct {
    Sigmoid,
    Identity,
}

/// Fully-connected ReLU network with a flat parameter vector.
///
/// Layer `l` occupies `sizes[l+1] * sizes[l]` row-major weights followed by
/// `sizes[l+1]` biases. Keeping everything in one vector makes Adam, soft
/// target updates and finite-difference checks one-liners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub sizes: Vec<usize>,
    pub output: OutputAct,
    pub params: Vec<f64>,
}

/// Pre-activations of every layer for one sample; what backprop needs.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[l]` the post-ReLU output of layer l-1.
    acts: Vec<Vec<f64>>,
    out: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

impl MlpNet {
    /// Uniform fan-in init, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, except the
    /// last layer which is `U(-final_scale, final_scale)`.
    pub fn new<R: Rng>(sizes: &[usize], output: OutputAct, final_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut params = Vec::with_capacity(Self::count(sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = if l == last { final_scale } else { 1.0 / (w[0] as f64).sqrt() };
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 });
            }
        }
        Self {
            sizes: sizes.to_vec(),
            output,
            params,
        }
    }

    pub fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (weight offset, fan_in, fan_out)
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let o = off;
            off += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).out
    }

    pub fn trace(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.input_len(), "mlp input length");
        let n_layers = self.sizes.len() - 1;
        let mut acts = vec![x.to_vec()];
        let mut out = Vec::new();
        for (l, (off, fi, fo)) in self.offsets().enumerate() {
            let w = &self.params[off..off + fi * fo];
            let b = &self.params[off + fi * fo..off + fi * fo + fo];
            let input = acts.last().unwrap();
            let z: Vec<f64> = (0..fo)
                .map(|o| b[o] + w[o * fi..(o + 1) * fi].iter().zip(input).map(|(a, x)| a * x).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                acts.push(z.into_iter().map(|v| v.max(0.0)).collect());
            } else {
                out = match self.output {
                    OutputAct::Identity => z,
                    OutputAct::Sigmoid => z.into_iter().map(sigmoid).collect(),
                };
            }
        }
        Trace { acts, out }
    }

    /// Backpropagates `d_out` (gradient wrt the network output) through a
    /// trace, accumulating parameter gradients into `grad` and returning the
    /// gradient wrt the input.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let layers: Vec<_> = self.offsets().collect();
        let mut delta: Vec<f64> = match self.output {
            OutputAct::Identity => d_out.to_vec(),
            OutputAct::Sigmoid => d_out.iter().zip(&trace.out).map(|(d, y)| d * y * (1.0 - y)).collect(),
        };
        for l in (0..layers.len()).rev() {
            let (off, fi, fo) = layers[l];
            let input = &trace.acts[l];
            for o in 0..fo {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * fi..off + (o + 1) * fi];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + fi * fo + o] += d;
            }
            let w = &self.params[off..off + fi * fo];
            let mut prev = vec![0.0; fi];
            for o in 0..fo {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w[o * fi..(o + 1) * fi]) {
                    *p += d * wv;
                }
            }
            if l > 0 {
                // ReLU gate of the layer that produced `input`
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }

    /// `self <- tau * other + (1 - tau) * self`
    pub fn soft_update(&mut self, other: &MlpNet, tau: f64) {
        for (t, s) in self.params.iter_mut().zip(&other.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }

    /// Zeroes the final layer, so a sigmoid output sits at exactly 0.5.
    pub fn zero_output_layer(&mut self) {
        let (off, fi, fo) = self.offsets().last().unwrap();
        self.params[off..off + fi * fo + fo].fill(0.0);
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_output_layer_gives_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = MlpNet::new(&[10, 400, 300, 1], OutputAct::Sigmoid, 3e-3, &mut rng);
        assert_eq!(net.params.len(), 10 * 400 + 400 + 400 * 300 + 300 + 301);
        net.zero_output_layer();
        assert_eq!(net.forward(&[0.3; 10]), vec![0.5]);
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = MlpNet::new(&[3, 5, 4, 1], OutputAct::Identity, 0.5, &mut rng);
        let x = [0.2, -0.4, 0.9];
        let mut g = vec![0.0; net.params.len()];
        let dx = net.backward(&net.trace(&x), &[1.0], &mut g);
        for i in 0..3 {
            let (mut a, mut b) = (x, x);
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (net.forward(&a)[0] - net.forward(&b)[0]) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-7, "{fd} vs {}", dx[i]);
        }
    }
}
