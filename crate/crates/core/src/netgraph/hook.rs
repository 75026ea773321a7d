/// Per-layer fake quantization applied inside the forward pass.
///
/// Training uses a straight-through estimator: weight gradients computed
/// against the quantized weights are applied to the float weights, and input
/// gradients pass through wherever the float input lay inside
/// [`QuantHook::input_range`].
pub trait QuantHook: Send + Sync {
    /// Returns the fake-quantized copy of layer `layer`'s weights.
    fn quantize_weights(&self, layer: usize, weights: &[f64]) -> Vec<f64>;

    /// Fake-quantizes the values entering layer `layer`, in place.
    fn quantize_input(&self, layer: usize, x: &mut [f64]);

    /// Clip range of the layer's input quantizer, if it has one.
    fn input_range(&self, layer: usize) -> Option<(f64, f64)>;
}
