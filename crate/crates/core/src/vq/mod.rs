//! The shared VQ autoencoder: a strided conv encoder, a nearest-codeword
//! quantizer and a resolution-agnostic decoder. One model serves both the
//! full-resolution image and its downsampled context.

mod codebook;
mod latent;
mod model;
mod train;

pub use codebook::{bits_per_index, Codebook};
pub use latent::LatentGrid;
pub use model::{vq_loss_terms, CODEC_KIND, CodecConfig, CodecModel, VqLoss};
pub use train::{evaluate_codec, train_codec, CodecTrainReport, DEAD_CODE_FLOOR};
