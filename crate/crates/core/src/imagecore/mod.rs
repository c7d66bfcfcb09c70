//! Image-domain primitives shared by both ends of the link.

mod dataset;
mod image;
mod metrics;
mod resample;

pub use dataset::{LabeledDataset, LoadedSplit, Split};
pub use image::{load_image, Image};
pub use metrics::{psnr, ssim};
pub use resample::{downsample, resize_plane_bilinear, upsample};
