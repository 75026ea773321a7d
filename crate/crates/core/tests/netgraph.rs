mod common;

use std::path::Path;

use bitforge::netgraph::*;
use bitforge::Error;
use common::oracles::forward_oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Random biases too, so the oracle checks the bias path.
fn randomize(model: &mut ModelGraph, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut() {
        for w in &mut p.weights {
            *w = rng.random_range(-1.0..1.0);
        }
        for b in &mut p.bias {
            *b = rng.random_range(-0.5..0.5);
        }
    }
}

fn split_of(inputs: Vec<f64>, labels: Vec<usize>, channels: usize, side: usize, classes: usize) -> Split {
    Split {
        channels,
        height: side,
        width: side,
        classes,
        inputs,
        labels,
    }
}

#[test]
fn loads_seven_layer_fixture() {
    let m = ModelGraph::load(&fixture("desk7.json")).unwrap();
    assert_eq!(m.len(), 7);
    let dw: Vec<u8> = m.layers().iter().map(|l| l.i_dw()).collect();
    assert_eq!(dw, vec![0, 1, 0, 1, 0, 1, 0]);
    let expect = vec![
        LayerSpec::conv(0, 1, 8, 3, 2, 32).unwrap(),
        LayerSpec::depthwise(1, 8, 3, 1, 16).unwrap(),
        LayerSpec::conv(2, 8, 16, 1, 1, 16).unwrap(),
        LayerSpec::depthwise(3, 16, 3, 2, 16).unwrap(),
        LayerSpec::conv(4, 16, 32, 1, 1, 8).unwrap(),
        LayerSpec::depthwise(5, 32, 3, 2, 8).unwrap(),
        LayerSpec::fc(6, 512, 10).unwrap(),
    ];
    assert_eq!(m.layers(), expect.as_slice());
}

#[test]
fn shape_mismatch_between_layers_is_rejected() {
    let err = ModelGraph::load(&fixture("mismatch.json")).unwrap_err();
    assert!(matches!(err, Error::Shape(ref msg) if msg.contains("layer 3")), "{err}");
}

#[test]
fn unknown_fields_and_bad_init_are_schema_errors() {
    let base = Path::new(".");
    let extra = r#"{"layers":[{"kind":"fc","c_in":4,"c_out":2,"feat":4,"bias":true,"dropout":0.5}],"init":"random:1"}"#;
    assert!(matches!(ModelGraph::from_json(extra, base), Err(Error::Schema(_))));
    let bad = r#"{"layers":[{"kind":"fc","c_in":4,"c_out":2,"feat":4,"bias":true}],"init":"xavier"}"#;
    assert!(matches!(ModelGraph::from_json(bad, base), Err(Error::Schema(_))));
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = ModelGraph::random(desk_layers(), 5).unwrap();
    randomize(&mut m, 6);
    let model_path = dir.path().join("model.json");
    let weights_path = dir.path().join("model.weights");
    m.save(&model_path, &weights_path).unwrap();
    assert!(weights_sidecar(&weights_path).exists());
    let back = ModelGraph::load(&model_path).unwrap();
    assert_eq!(back.layers(), m.layers());
    for (a, b) in back.params().iter().zip(m.params()) {
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
}

#[test]
fn forward_matches_nested_loop_oracle() {
    let nets = vec![
        vec![
            LayerSpec::conv(0, 2, 3, 3, 2, 8).unwrap(),
            LayerSpec::depthwise(1, 3, 3, 1, 4).unwrap(),
            LayerSpec::fc(2, 48, 5).unwrap(),
        ],
        vec![
            LayerSpec::conv(0, 3, 4, 5, 1, 6).unwrap(),
            LayerSpec::conv(1, 4, 2, 1, 1, 6).unwrap(),
            LayerSpec::depthwise(2, 2, 5, 2, 6).unwrap(),
            LayerSpec::fc(3, 18, 3).unwrap(),
        ],
        desk_layers(),
    ];
    for (i, layers) in nets.into_iter().enumerate() {
        let mut m = ModelGraph::random(layers, i as u64).unwrap();
        randomize(&mut m, 100 + i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(200 + i as u64);
        let batch = random_vec(&mut rng, 3 * m.input_len(), -1.0, 1.0);
        let out = m.forward(&batch, false).unwrap();
        let classes = m.num_classes();
        let mut worst = 0.0f64;
        for (s, sample) in batch.chunks(m.input_len()).enumerate() {
            let want = forward_oracle(&m, sample);
            for (a, b) in out.logits[s * classes..(s + 1) * classes].iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-5, "net {i}: max abs diff {worst}");
    }
}

#[test]
fn zero_weight_model_gives_zero_logits() {
    let m = ModelGraph::zeros(desk_layers()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = random_vec(&mut rng, 2 * m.input_len(), 0.0, 1.0);
    let out = m.forward(&batch, false).unwrap();
    assert!(out.logits.iter().all(|&v| v == 0.0));
}

#[test]
fn forward_rejects_wrong_batch_shape() {
    let m = ModelGraph::zeros(desk_layers()).unwrap();
    assert!(matches!(m.forward(&[0.0; 7], false), Err(Error::Shape(_))));
}

#[test]
fn capture_records_layer_inputs() {
    let m = ModelGraph::random(desk_layers(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = random_vec(&mut rng, 2 * m.input_len(), 0.0, 1.0);
    let out = m.forward(&batch, true).unwrap();
    let acts = out.activations.unwrap();
    assert_eq!(acts.len(), 9);
    for (k, a) in acts.iter().enumerate() {
        assert_eq!(a.len(), 2 * m.layers()[k].input_len());
        if k > 0 {
            assert!(a.iter().all(|&v| v >= 0.0), "post-ReLU activations are non-negative");
        }
    }
    assert_eq!(acts[0], batch);
}

/// Central differences on a small float net: every parameter's analytic
/// gradient within 1e-4 relative error.
#[test]
fn loss_gradient_matches_finite_differences() {
    let layers = vec![
        LayerSpec::conv(0, 1, 2, 3, 2, 6).unwrap(),
        LayerSpec::depthwise(1, 2, 3, 1, 3).unwrap(),
        LayerSpec::conv(2, 2, 3, 1, 1, 3).unwrap(),
        LayerSpec::fc(3, 27, 4).unwrap(),
    ];
    let mut m = ModelGraph::random(layers, 21).unwrap();
    randomize(&mut m, 22);
    assert!(m.param_count() <= 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let inputs = random_vec(&mut rng, 3 * m.input_len(), -1.0, 1.0);
    let labels = vec![0, 3, 1];
    let (_, grads, _) = loss_and_grad(&m, &inputs, &labels, None).unwrap();

    let h = 1e-3;
    let mut worst = 0.0f64;
    for k in 0..m.len() {
        for which in 0..2 {
            let n = if which == 0 { m.params()[k].weights.len() } else { m.params()[k].bias.len() };
            for i in 0..n {
                let probe = |delta: f64| {
                    let mut mm = m.clone();
                    let p = &mut mm.params_mut()[k];
                    if which == 0 {
                        p.weights[i] += delta;
                    } else {
                        p.bias[i] += delta;
                    }
                    loss_and_grad(&mm, &inputs, &labels, None).unwrap().0
                };
                let numeric = (probe(h) - probe(-h)) / (2.0 * h);
                let analytic = if which == 0 { grads[k].weights[i] } else { grads[k].bias[i] };
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                let rel = (analytic - numeric).abs() / denom;
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst <= 1e-4, "worst relative gradient error {worst}");
}

#[test]
fn zero_learning_rate_is_identity() {
    let data = synthetic(
        4,
        &SyntheticConfig {
            train_per_class: 4,
            val_per_class: 1,
            ..SyntheticConfig::default()
        },
    );
    let mut m = ModelGraph::random(desk_layers(), 8).unwrap();
    let before = m.clone();
    let cfg = FinetuneConfig {
        lr: 0.0,
        epochs: 2,
        ..FinetuneConfig::default()
    };
    let report = finetune(&mut m, &data.train, &cfg, None).unwrap();
    assert!(report.epoch_loss.iter().all(|l| l.is_finite()));
    assert_eq!(m, before);
}

#[test]
fn divergence_is_reported() {
    let data = synthetic(
        4,
        &SyntheticConfig {
            train_per_class: 4,
            val_per_class: 1,
            ..SyntheticConfig::default()
        },
    );
    let mut m = ModelGraph::random(desk_layers(), 8).unwrap();
    for p in m.params_mut() {
        for w in &mut p.weights {
            *w *= 1e120;
        }
    }
    let cfg = FinetuneConfig::default();
    assert!(matches!(finetune(&mut m, &data.train, &cfg, None), Err(Error::Diverged(_))));
}

/// 200 linearly separable 8-d points, 2 classes; the trained tiny net must
/// fit them.
#[test]
fn tiny_net_fits_separable_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let dir: Vec<f64> = random_vec(&mut rng, 8, -1.0, 1.0);
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    while labels.len() < 200 {
        let x = random_vec(&mut rng, 8, -1.0, 1.0);
        let d: f64 = x.iter().zip(&dir).map(|(a, b)| a * b).sum();
        if d.abs() < 0.1 {
            continue; // keep a margin
        }
        labels.push(usize::from(d > 0.0));
        inputs.extend(x);
    }
    let data = split_of(inputs, labels, 8, 1, 2);
    let layers = vec![LayerSpec::fc(0, 8, 16).unwrap(), LayerSpec::fc(1, 16, 2).unwrap()];
    let mut m = ModelGraph::random(layers, 32).unwrap();
    let cfg = FinetuneConfig {
        epochs: 5,
        lr: 0.05,
        batch_size: 8,
        ..FinetuneConfig::default()
    };
    finetune(&mut m, &data, &cfg, None).unwrap();
    let acc = evaluate(&m, &data, None).unwrap();
    assert!(acc >= 0.95, "training accuracy {acc}");
}

#[test]
fn constant_logits_score_one_tenth_on_balanced_set() {
    let data = synthetic(
        2,
        &SyntheticConfig {
            val_per_class: 7,
            train_per_class: 1,
            ..SyntheticConfig::default()
        },
    );
    let m = ModelGraph::zeros(desk_layers()).unwrap();
    assert_eq!(evaluate(&m, &data.validation, None).unwrap(), 0.1);
}

#[test]
fn memorising_table_model_scores_one() {
    // one-hot inputs through an identity fc layer
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..30 {
        let c = (i * 7) % 10;
        let mut x = vec![0.0; 10];
        x[c] = 1.0;
        inputs.extend(x);
        labels.push(c);
    }
    let data = split_of(inputs, labels, 10, 1, 10);
    let mut m = ModelGraph::zeros(vec![LayerSpec::fc(0, 10, 10).unwrap()]).unwrap();
    for c in 0..10 {
        m.params_mut()[0].weights[c * 10 + c] = 1.0;
    }
    assert_eq!(evaluate(&m, &data, None).unwrap(), 1.0);
}

#[test]
fn evaluate_rejects_empty_split() {
    let m = ModelGraph::zeros(vec![LayerSpec::fc(0, 10, 10).unwrap()]).unwrap();
    let empty = split_of(vec![], vec![], 10, 1, 10);
    assert!(matches!(evaluate(&m, &empty, None), Err(Error::EmptyDataset)));
}

#[test]
fn features_of_first_weight_step() {
    let layers = desk_layers();
    let f = layer_features(&layers[1], StepKind::Weight, 0.0);
    assert_eq!(f[7], 1.0, "depthwise indicator");
    assert_eq!(f[8], 1.0, "weight step indicator");
    assert_eq!(f[9], 0.0);
    let f = layer_features(&layers[8], StepKind::Activation, 0.4);
    assert_eq!((f[3], f[4], f[7], f[8]), (1.0, 0.0, 0.0, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evaluate_is_deterministic(seed in 0u64..1000) {
        let data = synthetic(seed, &SyntheticConfig { train_per_class: 1, val_per_class: 3, ..SyntheticConfig::default() });
        let m = ModelGraph::random(desk_layers(), seed).unwrap();
        let a = evaluate(&m, &data.validation, None).unwrap();
        let b = evaluate(&m, &data.validation, None).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn param_counts_are_analytic(c_in in 1usize..9, c_out in 1usize..9, k in prop::sample::select(vec![1usize, 3, 5]), s in 1usize..3, bias: bool) {
        let feat = 8;
        let conv = LayerSpec::new(0, LayerKind::Conv, c_in, c_out, k, s, feat, bias).unwrap();
        prop_assert_eq!(conv.n_params, c_in * c_out * k * k + if bias { c_out } else { 0 });
        let dw = LayerSpec::new(0, LayerKind::DepthwiseConv, c_in, c_in, k, s, feat, bias).unwrap();
        prop_assert_eq!(dw.n_params, c_in * k * k + if bias { c_in } else { 0 });
        prop_assert_eq!(dw.i_dw(), 1);
        prop_assert_eq!(conv.i_dw(), 0);
    }
}
