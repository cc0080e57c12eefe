//! Inference-only encoder and decoder networks.
//!
//! All tensors are `f32`. Convolutions take channels × time; sequence blocks
//! (LSTM, attention, ConvNeXt) take time × channels.

mod decoder;
mod encoder;
mod layers;
mod lstm;
mod weights;

pub use decoder::{
    attention_block_forward, convnext_block_forward, decoder_forward, AttentionBlock, ConvNextBlock, Decoder,
    DecoderConfig, DECODER_SAMPLE_RATE,
};
pub use encoder::{encoder_forward, Encoder, EncoderConfig, ENCODER_SAMPLE_RATE};
pub use layers::{
    conv1d_forward, elu, gelu, layer_norm, linear, silu, softmax_rows, Conv1d, ConvSpec, LayerNorm, Linear,
    LAYER_NORM_EPS,
};
pub use lstm::{recurrent_forward, LstmLayer};
pub use weights::{Init, ParamSpec, Tensor, WeightsBundle, WEIGHTS_MAGIC, WEIGHTS_VERSION};

/// Manifest of every weight used by an encoder/decoder pair.
pub fn codec_manifest(enc: &EncoderConfig, dec: &DecoderConfig) -> Vec<ParamSpec> {
    let mut m = enc.manifest();
    m.extend(dec.manifest());
    m
}
