//! Labeled image tensors, the bundled synthetic task and the on-disk format.
//!
//! A dataset directory holds `dataset.json` describing the tensor shape and
//! each split, plus one `<split>.bin` (little-endian f32, `N x C x H x W`)
//! and one `<split>.labels` (one byte per sample) per split.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One set of samples sharing a tensor shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// `n x channels x height x width`, row-major.
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.inputs[i * n..(i + 1) * n]
    }

    /// Samples `[start, end)` as a new split.
    pub fn slice(&self, start: usize, end: usize) -> Split {
        let n = self.sample_len();
        Split {
            inputs: self.inputs[start * n..end * n].to_vec(),
            labels: self.labels[start..end].to_vec(),
            ..self.shape_only()
        }
    }

    /// Splits off the trailing `fraction` of samples: `(head, tail)`.
    pub fn hold_out(&self, fraction: f64) -> (Split, Split) {
        let tail = ((self.len() as f64) * fraction).round() as usize;
        let cut = self.len() - tail.min(self.len());
        (self.slice(0, cut), self.slice(cut, self.len()))
    }

    fn shape_only(&self) -> Split {
        Split {
            channels: self.channels,
            height: self.height,
            width: self.width,
            classes: self.classes,
            inputs: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.len() * self.sample_len() {
            return Err(Error::Shape("split inputs do not match label count".into()));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::Schema(format!("label {bad} >= class count {}", self.classes)));
        }
        Ok(())
    }
}

/// Named train / validation / calibration splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub validation: Split,
    pub calibration: Split,
}

/// Parameters of the synthetic 10-class image task.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub channels: usize,
    pub side: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub calibration: usize,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    /// Maximum circular shift, in pixels, applied to each sample.
    pub max_shift: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            channels: 1,
            side: 32,
            train_per_class: 100,
            val_per_class: 50,
            calibration: 64,
            noise: 1.2,
            max_shift: 3,
        }
    }
}

/// Class prototype: a sum of two oriented gratings and a Gaussian blob.
struct Prototype {
    pixels: Vec<f64>,
}

impl Prototype {
    fn generate(rng: &mut ChaCha8Rng, channels: usize, side: usize) -> Self {
        let mut pixels = vec![0.0; channels * side * side];
        for c in 0..channels {
            let gratings: Vec<(f64, f64, f64)> = (0..2)
                .map(|_| {
                    (
                        rng.random_range(0.0..std::f64::consts::PI),
                        rng.random_range(1.5..4.5),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let (bx, by) = (rng.random_range(6.0..26.0), rng.random_range(6.0..26.0));
            let blob_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            for y in 0..side {
                for x in 0..side {
                    let (u, v) = (x as f64 / side as f64, y as f64 / side as f64);
                    let mut value = 0.0;
                    for &(theta, freq, phase) in &gratings {
                        let proj = u * theta.cos() + v * theta.sin();
                        value += 0.5 * (std::f64::consts::TAU * freq * proj + phase).sin();
                    }
                    let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                    value += blob_sign * (-d2 / 18.0).exp();
                    pixels[(c * side + y) * side + x] = value;
                }
            }
        }
        Self { pixels }
    }
}

/// Generates the synthetic task deterministically from `seed`.
///
/// Sample `i` of every split has label `i % classes`, so train and
/// validation splits are exactly balanced when their sizes are multiples of
/// the class count. Pixel values are clamped to `[0, 1]`.
pub fn synthetic(seed: u64, cfg: &SyntheticConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Prototype> = (0..cfg.classes)
        .map(|_| Prototype::generate(&mut rng, cfg.channels, cfg.side))
        .collect();
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise");
    let make = |count: usize, rng: &mut ChaCha8Rng| -> Split {
        let side = cfg.side;
        let plane = side * side;
        let mut inputs = Vec::with_capacity(count * cfg.channels * plane);
        let mut labels = Vec::with_capacity(count);
        let shift = cfg.max_shift as i64;
        for i in 0..count {
            let label = i % cfg.classes;
            let proto = &prototypes[label].pixels;
            let dx = rng.random_range(-shift..=shift);
            let dy = rng.random_range(-shift..=shift);
            let gain = rng.random_range(0.7..1.3);
            for c in 0..cfg.channels {
                for y in 0..side {
                    for x in 0..side {
                        let sy = (y as i64 + dy).rem_euclid(side as i64) as usize;
                        let sx = (x as i64 + dx).rem_euclid(side as i64) as usize;
                        let v = proto[c * plane + sy * side + sx] * gain + noise.sample(rng);
                        // Stored at f32 precision so in-memory and on-disk data agree.
                        inputs.push((0.5 + 0.25 * v).clamp(0.0, 1.0) as f32 as f64);
                    }
                }
            }
            labels.push(label);
        }
        Split {
            channels: cfg.channels,
            height: side,
            width: side,
            classes: cfg.classes,
            inputs,
            labels,
        }
    };
    let train = make(cfg.train_per_class * cfg.classes, &mut rng);
    let validation = make(cfg.val_per_class * cfg.classes, &mut rng);
    let calibration = make(cfg.calibration, &mut rng);
    Dataset {
        train,
        validation,
        calibration,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitEntry {
    file: String,
    labels: String,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetIndex {
    channels: usize,
    height: usize,
    width: usize,
    classes: usize,
    splits: BTreeMap<String, SplitEntry>,
}

const SPLIT_NAMES: [&str; 3] = ["train", "validation", "calibration"];

impl Dataset {
    fn splits(&self) -> [&Split; 3] {
        [&self.train, &self.validation, &self.calibration]
    }

    /// Writes the dataset directory. Output bytes depend only on the data.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut splits = BTreeMap::new();
        for (name, split) in SPLIT_NAMES.iter().zip(self.splits()) {
            let file = format!("{name}.bin");
            let labels = format!("{name}.labels");
            let bytes: Vec<u8> = split
                .inputs
                .iter()
                .flat_map(|v| (*v as f32).to_le_bytes())
                .collect();
            let path = dir.join(&file);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            let label_bytes: Vec<u8> = split.labels.iter().map(|&l| l as u8).collect();
            let path = dir.join(&labels);
            std::fs::write(&path, label_bytes).map_err(|e| Error::io(&path, e))?;
            splits.insert(
                name.to_string(),
                SplitEntry {
                    file,
                    labels,
                    count: split.len(),
                },
            );
        }
        let index = DatasetIndex {
            channels: self.train.channels,
            height: self.train.height,
            width: self.train.width,
            classes: self.train.classes,
            splits,
        };
        let path = dir.join("dataset.json");
        std::fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))
    }

    /// Loads a dataset directory written by [`Dataset::save`] (or any
    /// directory following the same layout).
    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join("dataset.json");
        let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: DatasetIndex = serde_json::from_str(&text)?;
        let load_split = |name: &str| -> Result<Split> {
            let entry = index
                .splits
                .get(name)
                .ok_or_else(|| Error::Schema(format!("dataset has no '{name}' split")))?;
            let path = dir.join(&entry.file);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let inputs: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let path = dir.join(&entry.labels);
            let labels: Vec<usize> = std::fs::read(&path)
                .map_err(|e| Error::io(&path, e))?
                .into_iter()
                .map(usize::from)
                .collect();
            if labels.len() != entry.count {
                return Err(Error::Schema(format!("split '{name}' label count mismatch")));
            }
            let split = Split {
                channels: index.channels,
                height: index.height,
                width: index.width,
                classes: index.classes,
                inputs,
                labels,
            };
            split.validate()?;
            Ok(split)
        };
        Ok(Dataset {
            train: load_split("train")?,
            validation: load_split("validation")?,
            calibration: load_split("calibration")?,
        })
    }
}
