//! Minimal convolutional layers with explicit forward/backward passes.
//!
//! Everything works on a single sample (`C×H×W`); minibatches are handled by
//! accumulating gradients across samples before an optimizer step. Layers are
//! generic over [`Real`] so the same code runs in `f32` for training and in
//! `f64` for finite-difference checks.

mod adam;
mod conv;
mod linear;
mod real;
mod sequential;
mod tensor;

pub use adam::Adam;
pub use conv::{col2im, im2col, Conv2d, ConvTranspose2d};
pub use linear::Linear;
pub use real::{matmul, Real};
pub use sequential::{Layer, LayerTrace, Sequential};
pub use tensor::Tensor3;

use rand::Rng;

/// Uniform He-style initialisation, `bound = gain * sqrt(3 / fan_in)`.
pub(crate) fn init_uniform<T: Real, R: Rng>(rng: &mut R, len: usize, fan_in: usize, gain: f64) -> Vec<T> {
    let bound = gain * (3.0 / fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| T::of(rng.random_range(-bound..bound))).collect()
}
