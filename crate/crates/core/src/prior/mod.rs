//! Autodecoder prior: a canonical template, learnable per-Gaussian
//! features, per-identity codes and a shared decoder producing offsets.

mod decoder;
mod model;

pub use decoder::{Decoder, DecoderCache, Head, WnLinear, FEATURE_DIM, OFFSET_DIM, TRUNK_DEPTH};
pub use model::{
    init_prior, matrix_from_offsets, offsets_from_matrix, DecodeCache, PriorConfig, PriorGradients, PriorModel,
};
