//! Minimal CNN engine: feed-forward chains of conv, depthwise conv and
//! fully-connected layers, with float or fake-quantized inference, backprop
//! finetuning and top-1 evaluation.

mod dataset;
mod engine;
mod features;
mod hook;
mod layer;
mod model;
mod train;

pub use dataset::{synthetic, Dataset, Split, SyntheticConfig};
pub use features::{layer_features, StepKind, FEATURE_DIM};
pub use hook::QuantHook;
pub use layer::{LayerKind, LayerSpec};
pub use model::{weights_sidecar, ForwardOutput, LayerParams, ModelGraph};
pub use train::{
    argmax, evaluate, finetune, loss_and_grad, train_baseline, BaselineConfig, FinetuneConfig, FinetuneReport,
};

/// The bundled desk-scale network: a 9-layer depthwise-separable CNN for
/// 1x32x32 inputs and 10 classes.
///
/// `conv(1->8, s2) -> dw(8) -> pw(8->16) -> dw(16, s2) -> pw(16->32) ->
/// dw(32, s2) -> pw(32->64) -> dw(64, s2) -> fc(256->10)`
pub fn desk_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(0, 1, 8, 3, 2, 32),
        LayerSpec::depthwise(1, 8, 3, 1, 16),
        LayerSpec::conv(2, 8, 16, 1, 1, 16),
        LayerSpec::depthwise(3, 16, 3, 2, 16),
        LayerSpec::conv(4, 16, 32, 1, 1, 8),
        LayerSpec::depthwise(5, 32, 3, 2, 8),
        LayerSpec::conv(6, 32, 64, 1, 1, 4),
        LayerSpec::depthwise(7, 64, 3, 2, 4),
        LayerSpec::fc(8, 256, 10),
    ]
    .into_iter()
    .collect::<crate::Result<Vec<_>>>()
    .expect("desk layers are valid")
}
