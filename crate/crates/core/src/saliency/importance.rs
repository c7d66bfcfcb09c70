use std::cmp::Ordering;

use super::SaliencyMap;
use crate::{Error, Result};

/// A latent cell, `(row, col)`; the derived order is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn flat(self, width: usize) -> usize {
        self.row * width + self.col
    }

    pub fn from_flat(index: usize, width: usize) -> Self {
        Self { row: index / width, col: index % width }
    }
}

/// Per-cell importance scores aligned with a latent grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceGrid {
    height: usize,
    width: usize,
    scores: Vec<f32>,
}

impl ImportanceGrid {
    pub fn new(height: usize, width: usize, scores: Vec<f32>) -> Result<Self> {
        if scores.len() != height * width {
            return Err(Error::Dimension(format!("{} scores for a {height}x{width} grid", scores.len())));
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Argument("importance scores must lie in [0, 1]".into()));
        }
        Ok(Self { height, width, scores })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn score(&self, cell: Cell) -> f32 {
        self.scores[cell.flat(self.width)]
    }

    /// Every cell, highest score first; equal scores keep row-major order.
    pub fn ranked(&self) -> Vec<Cell> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| match self.scores[b].total_cmp(&self.scores[a]) {
            Ordering::Equal => a.cmp(&b),
            o => o,
        });
        order.into_iter().map(|i| Cell::from_flat(i, self.width)).collect()
    }
}

/// Block mean of the pixel map over each `f × f` cell, rescaled so the
/// largest score is 1.
pub fn pool_to_latent(map: &SaliencyMap, f_model: usize) -> Result<ImportanceGrid> {
    if f_model == 0 || map.height % f_model != 0 || map.width % f_model != 0 {
        return Err(Error::Dimension(format!(
            "{}x{} map is not divisible by {f_model}",
            map.height, map.width
        )));
    }
    let (h, w) = (map.height / f_model, map.width / f_model);
    let area = (f_model * f_model) as f64;
    let mut scores: Vec<f64> = vec![0.0; h * w];
    for y in 0..map.height {
        for x in 0..map.width {
            scores[(y / f_model) * w + x / f_model] += map.at(y, x) as f64;
        }
    }
    let max = scores.iter().cloned().fold(0.0, f64::max) / area;
    let scores = scores
        .into_iter()
        .map(|s| if max > 0.0 { ((s / area) / max).min(1.0) as f32 } else { 0.0 })
        .collect();
    ImportanceGrid::new(h, w, scores)
}

/// `ceil(p · n / 100)` in exact integer arithmetic.
pub fn selection_count(p: u32, cells: usize) -> Result<usize> {
    if p > 100 {
        return Err(Error::Argument(format!("percentage {p} is above 100")));
    }
    Ok((p as usize * cells).div_ceil(100))
}

/// The top `p` percent of cells in [`ImportanceGrid::ranked`] order.
pub fn select_top_p(grid: &ImportanceGrid, p: u32) -> Result<Vec<Cell>> {
    let n = selection_count(p, grid.scores.len())?;
    let mut ranked = grid.ranked();
    ranked.truncate(n);
    Ok(ranked)
}
