//! Expression-driven head: per-Gaussian feature bases blended by an
//! expression vector and decoded to colour and opacity by a small MLP.

mod expression;
mod fit;
mod model;

pub use expression::{
    expression_header, expression_stream_csv, expression_stream_oscillator, read_expression_csv, write_expression_csv, ExpressionStream,
    OscillatorConfig, EXPRESSION_FPS,
};
pub use fit::{dataset_gradient, fit_head, image_loss, HeadFit, HeadFitConfig, HeadSample};
pub use model::{
    blend_features, decode_model, encode_model, head_backward, head_backward_outputs, head_forward, positional_encoding, HeadConfig, HeadModel,
    HeadOutput, AUDIO_CHANNELS, EXPRESSION_CHANNELS, EYE_CHANNELS, GROUP_NAMES,
};

use ico3d_core::GaussianSet;

/// Writes head outputs into a splat set as flat colours and opacities.
pub fn apply_output(set: &mut GaussianSet, out: &HeadOutput) {
    for i in 0..set.len() {
        set.set_flat_color(i, out.rgb[i]);
        set.opacities[i] = out.opacity[i];
    }
}
