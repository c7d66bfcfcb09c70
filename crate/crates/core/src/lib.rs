//! Semantic communication over a shared vector-quantized latent space.
//!
//! The transmitter sends a coarse context latent (the VQ latent of a
//! downsampled copy of the image) plus the latent cells a downstream task
//! model attends to. The receiver re-encodes the upsampled context, splices
//! the transmitted cells in, and decodes once.
//!
//! Module map:
//!
//! * [`imagecore`]: image ingestion, resampling and quality metrics.
//! * [`nn`]: the small convolutional building blocks used by both models.
//! * [`vq`]: the shared VQ autoencoder (encoder, codebook, decoder, training).
//! * [`saliency`]: task classifier, GradCAM and pixel-to-latent importance.
//! * [`semcom`]: context generation, fusion, rate accounting and the local
//!   semantic feedback controller.
//! * [`protocol`]: wire format, lossless channel and the two session roles.

pub mod archive;
pub mod error;
pub mod imagecore;
pub mod kv;
pub mod nn;
pub mod protocol;
pub mod saliency;
pub mod semcom;
pub mod vq;

pub use error::{Error, Result};
