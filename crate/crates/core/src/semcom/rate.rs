//! Payload-bit accounting. Headers, mode bytes and byte padding are control
//! overhead and never counted.

use serde::Serialize;

use super::{Geometry, LsfDecision};
use crate::vq::bits_per_index;

/// Bits per kilobyte; a kilobyte is 1024 bytes.
pub const BITS_PER_KB: f64 = 8192.0;

pub fn bits_to_kb(bits: u64) -> f64 {
    bits as f64 / BITS_PER_KB
}

/// How a set of patch positions is written on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PositionMode {
    /// A 16-bit count followed by fixed-width flat cell indices.
    List,
    /// One bit per grid cell.
    Bitmap,
}

impl PositionMode {
    pub fn code(self) -> u8 {
        match self {
            PositionMode::List => 0,
            PositionMode::Bitmap => 1,
        }
    }
}

/// Width of one flat cell index, `ceil(log2(cells))`.
pub fn cell_index_bits(cells: usize) -> u32 {
    bits_per_index(cells.max(1))
}

/// Cost of the list encoding, or `None` when the count does not fit 16 bits.
pub fn list_bits(selected: usize, cells: usize) -> Option<u64> {
    (selected <= u16::MAX as usize).then(|| 16 + selected as u64 * cell_index_bits(cells) as u64)
}

pub fn bitmap_bits(cells: usize) -> u64 {
    cells as u64
}

/// The cheaper position encoding and its size; a tie goes to the bitmap.
pub fn position_encoding(selected: usize, cells: usize) -> (PositionMode, u64) {
    match list_bits(selected, cells) {
        Some(l) if l < bitmap_bits(cells) => (PositionMode::List, l),
        _ => (PositionMode::Bitmap, bitmap_bits(cells)),
    }
}

/// Context indices, the position payload and the patch indices.
pub fn context_plus_task_bits(context_cells: usize, image_cells: usize, selected: usize, index_bits: u32) -> u64 {
    let b = index_bits as u64;
    context_cells as u64 * b + position_encoding(selected, image_cells).1 + selected as u64 * b
}

/// Patch without context: positions plus indices.
pub fn task_patch_bits(image_cells: usize, selected: usize, index_bits: u32) -> u64 {
    position_encoding(selected, image_cells).1 + selected as u64 * index_bits as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    pub r_c_bits: u64,
    pub r_i_bits: u64,
    pub r_bits: u64,
    pub r_c_kb: f64,
    pub r_i_kb: f64,
    pub r_kb: f64,
}

impl RateReport {
    pub fn new(r_c_bits: u64, r_i_bits: u64, r_bits: u64) -> Self {
        Self {
            r_c_bits,
            r_i_bits,
            r_bits,
            r_c_kb: bits_to_kb(r_c_bits),
            r_i_kb: bits_to_kb(r_i_bits),
            r_kb: bits_to_kb(r_bits),
        }
    }
}

pub fn context_bits(geometry: &Geometry, codebook_size: usize) -> u64 {
    geometry.context_cells() as u64 * bits_per_index(codebook_size) as u64
}

pub fn image_bits(geometry: &Geometry, codebook_size: usize) -> u64 {
    geometry.image_cells() as u64 * bits_per_index(codebook_size) as u64
}

pub fn rate_report(decision: &LsfDecision, geometry: &Geometry, codebook_size: usize) -> RateReport {
    RateReport::new(context_bits(geometry, codebook_size), image_bits(geometry, codebook_size), decision.rate_bits)
}
