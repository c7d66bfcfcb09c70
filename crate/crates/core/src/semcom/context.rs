use serde::{Deserialize, Serialize};

use crate::imagecore::{downsample, upsample, Image};
use crate::vq::{CodecModel, LatentGrid};
use crate::{Error, Result};

/// Image size and the two spatial factors that fix every grid shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub height: usize,
    pub width: usize,
    pub f_model: usize,
    pub f_ctx: usize,
}

impl Geometry {
    pub fn new(height: usize, width: usize, f_model: usize, f_ctx: usize) -> Result<Self> {
        let step = f_model * f_ctx;
        if step == 0 || height == 0 || width == 0 || height % step != 0 || width % step != 0 {
            return Err(Error::Dimension(format!(
                "{height}x{width} is not divisible by f_model*f_ctx = {f_model}*{f_ctx}"
            )));
        }
        Ok(Self { height, width, f_model, f_ctx })
    }

    pub fn latent_dims(&self) -> (usize, usize) {
        (self.height / self.f_model, self.width / self.f_model)
    }

    pub fn context_dims(&self) -> (usize, usize) {
        let s = self.f_model * self.f_ctx;
        (self.height / s, self.width / s)
    }

    pub fn image_cells(&self) -> usize {
        let (h, w) = self.latent_dims();
        h * w
    }

    pub fn context_cells(&self) -> usize {
        let (h, w) = self.context_dims();
        h * w
    }
}

/// The context latent `z_c` of the downsampled image.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextBundle {
    pub z_c: LatentGrid,
    pub f_ctx: usize,
    /// `R_c`: one fixed-width index per context cell.
    pub rate_bits: u64,
}

/// `z_c = encode(downsample(x, f_ctx))`.
pub fn make_context(model: &CodecModel, x: &Image, f_ctx: usize) -> Result<ContextBundle> {
    Geometry::new(x.height(), x.width(), model.f_model(), f_ctx)?;
    let z_c = model.encode(&downsample(x, f_ctx)?)?;
    let rate_bits = z_c.cells() as u64 * model.bits_per_index() as u64;
    Ok(ContextBundle { z_c, f_ctx, rate_bits })
}

/// `z_u = encode(upsample(decode(z_c), f_ctx))`, the full-resolution grid the
/// receiver derives from the context alone. Both sides run this exact code.
pub fn reproject_context(model: &CodecModel, z_c: &LatentGrid, f_ctx: usize) -> Result<LatentGrid> {
    model.encode(&upsample(&model.decode(z_c)?, f_ctx)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        let g = Geometry::new(224, 224, 4, 4).unwrap();
        assert_eq!(g.latent_dims(), (56, 56));
        assert_eq!(g.context_dims(), (14, 14));
        let g = Geometry::new(64, 64, 4, 4).unwrap();
        assert_eq!(g.context_cells(), 16);
        assert!(Geometry::new(60, 64, 4, 4).is_err());
        assert_eq!(Geometry::new(64, 64, 4, 1).unwrap().context_dims(), (16, 16));
    }
}
