use std::borrow::Cow;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine;
use super::hook::QuantHook;
use super::layer::{LayerKind, LayerSpec};
use crate::{Error, Result};

/// Trainable tensors of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            weights: vec![0.0; spec.weight_count()],
            bias: vec![0.0; spec.bias_count()],
        }
    }
}

/// A strictly feed-forward chain of layers with ReLU after every layer but
/// the last.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    layers: Vec<LayerSpec>,
    params: Vec<LayerParams>,
}

/// Logits for a batch, plus per-layer input activations when requested.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `n x classes`, row-major.
    pub logits: Vec<f64>,
    /// `activations[k]` holds every value fed into layer `k` across the
    /// batch: the raw input for layer 0, post-ReLU outputs otherwise.
    pub activations: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    kind: LayerKind,
    c_in: usize,
    c_out: usize,
    #[serde(default)]
    kernel: usize,
    #[serde(default)]
    stride: usize,
    feat: usize,
    #[serde(default)]
    bias: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    layers: Vec<LayerEntry>,
    init: String,
}

#[derive(Serialize)]
struct LayerEntryOut {
    kind: LayerKind,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    feat: usize,
    bias: bool,
}

#[derive(Serialize)]
struct ModelFileOut {
    layers: Vec<LayerEntryOut>,
    init: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Span {
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightEntry {
    k: usize,
    weights: Span,
    bias: Span,
}

/// Sidecar offset table for a weights file. Offsets and lengths count
/// 32-bit floats, not bytes.
#[derive(Debug, Serialize, Deserialize)]
struct WeightIndex {
    format: String,
    total: usize,
    layers: Vec<WeightEntry>,
}

/// Sidecar path for a weights file: the weights file name plus `.json`.
pub fn weights_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

impl ModelGraph {
    /// Validates the shape chain and parameter sizes.
    pub fn new(layers: Vec<LayerSpec>, params: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Schema("model has no layers".into()));
        }
        if params.len() != layers.len() {
            return Err(Error::Schema(format!(
                "{} parameter sets for {} layers",
                params.len(),
                layers.len()
            )));
        }
        for (k, spec) in layers.iter().enumerate() {
            if spec.index != k {
                return Err(Error::Schema(format!("layer {k} has index {}", spec.index)));
            }
            let p = &params[k];
            if p.weights.len() != spec.weight_count() || p.bias.len() != spec.bias_count() {
                return Err(Error::Shape(format!("layer {k}: parameter tensor sizes")));
            }
        }
        for pair in layers.windows(2) {
            check_chain(&pair[0], &pair[1])?;
        }
        Ok(Self { layers, params })
    }

    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        let params = layers.iter().map(LayerParams::zeros).collect();
        Self::new(layers, params)
    }

    /// He-uniform weights from a seeded generator, zero biases.
    pub fn random(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layers
            .iter()
            .map(|spec| {
                let fan_in = match spec.kind {
                    LayerKind::Conv => spec.c_in * spec.kernel * spec.kernel,
                    LayerKind::DepthwiseConv => spec.kernel * spec.kernel,
                    LayerKind::Fc => spec.c_in,
                };
                let bound = (6.0 / fan_in as f64).sqrt();
                LayerParams {
                    weights: (0..spec.weight_count())
                        .map(|_| rng.random_range(-bound..bound))
                        .collect(),
                    bias: vec![0.0; spec.bias_count()],
                }
            })
            .collect();
        Self::new(layers, params)
    }

    /// Parses model JSON. Relative `weights:` paths resolve against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let layers = file
            .layers
            .iter()
            .enumerate()
            .map(|(k, e)| {
                LayerSpec::new(k, e.kind, e.c_in, e.c_out, e.kernel, e.stride, e.feat, e.bias)
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(seed) = file.init.strip_prefix("random:") {
            let seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("bad init seed '{seed}'")))?;
            Self::random(layers, seed)
        } else if let Some(path) = file.init.strip_prefix("weights:") {
            let path = base.join(path.trim());
            let params = read_weights(&path, &layers)?;
            Self::new(layers, params)
        } else {
            Err(Error::Schema(format!("unknown init directive '{}'", file.init)))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    /// Writes the model JSON plus its weights file and sidecar. The JSON's
    /// `init` references the weights file relative to the JSON's directory.
    pub fn save(&self, model_path: &Path, weights_path: &Path) -> Result<()> {
        write_weights(weights_path, &self.layers, &self.params)?;
        let base = model_path.parent().unwrap_or(Path::new("."));
        let rel = weights_path
            .strip_prefix(base)
            .unwrap_or(weights_path)
            .to_string_lossy()
            .into_owned();
        std::fs::write(model_path, self.to_json(&format!("weights:{rel}")))
            .map_err(|e| Error::io(model_path, e))
    }

    pub fn to_json(&self, init: &str) -> String {
        let file = ModelFileOut {
            layers: self
                .layers
                .iter()
                .map(|l| LayerEntryOut {
                    kind: l.kind,
                    c_in: l.c_in,
                    c_out: l.c_out,
                    kernel: l.kernel,
                    stride: l.stride,
                    feat: l.feat,
                    bias: l.bias,
                })
                .collect(),
            init: init.to_string(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(|l| l.output_len()).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.n_params).sum()
    }

    /// Float forward pass over a batch laid out as `n x input_len`.
    pub fn forward(&self, batch: &[f64], capture_activations: bool) -> Result<ForwardOutput> {
        self.forward_with(batch, None, capture_activations)
    }

    /// Forward pass with optional fake quantization of weights and inputs.
    pub fn forward_with(
        &self,
        batch: &[f64],
        hook: Option<&dyn QuantHook>,
        capture_activations: bool,
    ) -> Result<ForwardOutput> {
        let in_len = self.input_len();
        if batch.len() % in_len != 0 {
            return Err(Error::Shape(format!(
                "batch of {} values is not a multiple of the input size {in_len}",
                batch.len()
            )));
        }
        let n = batch.len() / in_len;
        let weights = self.effective_weights(hook);
        let classes = self.num_classes();
        let mut logits = Vec::with_capacity(n * classes);
        let mut acts: Option<Vec<Vec<f64>>> =
            capture_activations.then(|| self.layers.iter().map(|_| Vec::new()).collect());
        for sample in batch.chunks_exact(in_len) {
            let mut x = sample.to_vec();
            for (k, spec) in self.layers.iter().enumerate() {
                if let Some(a) = acts.as_mut() {
                    a[k].extend_from_slice(&x);
                }
                if let Some(h) = hook {
                    h.quantize_input(k, &mut x);
                }
                let mut y = vec![0.0; spec.output_len()];
                engine::forward(spec, &weights[k], &self.params[k].bias, &x, &mut y);
                if k + 1 < self.layers.len() {
                    relu(&mut y);
                }
                x = y;
            }
            logits.extend_from_slice(&x);
        }
        Ok(ForwardOutput {
            logits,
            activations: acts,
        })
    }

    /// Weights as seen by the forward pass: fake-quantized through the hook
    /// when one is present.
    pub(crate) fn effective_weights(&self, hook: Option<&dyn QuantHook>) -> Vec<Cow<'_, [f64]>> {
        self.params
            .iter()
            .enumerate()
            .map(|(k, p)| match hook {
                Some(h) => Cow::Owned(h.quantize_weights(k, &p.weights)),
                None => Cow::Borrowed(p.weights.as_slice()),
            })
            .collect()
    }
}

pub(crate) fn relu(y: &mut [f64]) {
    for v in y {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn check_chain(a: &LayerSpec, b: &LayerSpec) -> Result<()> {
    let mismatch = |what: &str| {
        Err(Error::Shape(format!(
            "layer {} output {what} does not match layer {} input",
            a.index, b.index
        )))
    };
    match (a.kind.is_conv(), b.kind.is_conv()) {
        (true, true) => {
            if a.c_out != b.c_in {
                return mismatch("channels");
            }
            if a.out_feat() != b.feat {
                return mismatch("feature size");
            }
        }
        (false, true) => return mismatch("(fc cannot feed a convolution)"),
        (_, false) => {
            if a.output_len() != b.c_in {
                return mismatch("length");
            }
        }
    }
    Ok(())
}

fn read_weights(path: &Path, layers: &[LayerSpec]) -> Result<Vec<LayerParams>> {
    let sidecar = weights_sidecar(path);
    let index_text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let index: WeightIndex = serde_json::from_str(&index_text)?;
    if index.format != "f32le" {
        return Err(Error::Schema(format!("unsupported weight format {}", index.format)));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != index.total * 4 {
        return Err(Error::Schema(format!(
            "weights file holds {} bytes, index expects {}",
            bytes.len(),
            index.total * 4
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if index.layers.len() != layers.len() {
        return Err(Error::Schema("weight index layer count differs from model".into()));
    }
    let slice = |span: &Span| -> Result<Vec<f64>> {
        values
            .get(span.offset..span.offset + span.len)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::Schema("weight span out of range".into()))
    };
    index
        .layers
        .iter()
        .zip(layers)
        .map(|(entry, spec)| {
            if entry.k != spec.index
                || entry.weights.len != spec.weight_count()
                || entry.bias.len != spec.bias_count()
            {
                return Err(Error::Shape(format!("weights for layer {} have wrong size", spec.index)));
            }
            Ok(LayerParams {
                weights: slice(&entry.weights)?,
                bias: slice(&entry.bias)?,
            })
        })
        .collect()
}

fn write_weights(path: &Path, layers: &[LayerSpec], params: &[LayerParams]) -> Result<()> {
    let mut bytes = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0;
    for (spec, p) in layers.iter().zip(params) {
        let w = Span {
            offset,
            len: p.weights.len(),
        };
        offset += p.weights.len();
        let b = Span {
            offset,
            len: p.bias.len(),
        };
        offset += p.bias.len();
        for v in p.weights.iter().chain(&p.bias) {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        entries.push(WeightEntry {
            k: spec.index,
            weights: w,
            bias: b,
        });
    }
    let index = WeightIndex {
        format: "f32le".into(),
        total: offset,
        layers: entries,
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = weights_sidecar(path);
    std::fs::write(&sidecar, serde_json::to_string_pretty(&index)?)
        .map_err(|e| Error::io(&sidecar, e))
}
