use crate::{Error, Result};

/// A grid of codebook indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatentGrid {
    height: usize,
    width: usize,
    indices: Vec<u32>,
}

impl LatentGrid {
    pub fn new(height: usize, width: usize, indices: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 || indices.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} indices do not fill a {height}x{width} latent grid",
                indices.len()
            )));
        }
        Ok(Self { height, width, indices })
    }

    pub fn filled(height: usize, width: usize, value: u32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn cells(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.indices[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u32) {
        self.indices[row * self.width + col] = value;
    }

    /// Pixel extent of the image this grid encodes.
    pub fn source_shape(&self, f_model: usize) -> (usize, usize) {
        (self.height * f_model, self.width * f_model)
    }

    pub fn validate(&self, codebook_size: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i as usize >= codebook_size) {
            Some(&index) => Err(Error::CorruptLatent { index, codebook_size }),
            None => Ok(()),
        }
    }
}
