use crate::saliency::Cell;
use crate::vq::LatentGrid;
use crate::{Error, Result};

/// Binary mask `M` over the latent grid and the cell set it encodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl FusionMask {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, cell: Cell) -> bool {
        self.bits[cell.flat(self.width)]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Marked cells in row-major order.
    pub fn cells(&self) -> Vec<Cell> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).map(|i| Cell::from_flat(i, self.width)).collect()
    }
}

pub fn build_mask(cells: &[Cell], height: usize, width: usize) -> Result<FusionMask> {
    let mut bits = vec![false; height * width];
    for c in cells {
        if c.row >= height || c.col >= width {
            return Err(Error::Argument(format!("cell ({}, {}) outside {height}x{width}", c.row, c.col)));
        }
        bits[c.flat(width)] = true;
    }
    Ok(FusionMask { height, width, bits })
}

/// Image-latent indices for a set of cells, kept in row-major order of the
/// flat cell index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Patch {
    cells: Vec<u32>,
    indices: Vec<u32>,
}

impl Patch {
    /// `cells` must be strictly increasing flat indices.
    pub fn new(cells: Vec<u32>, indices: Vec<u32>) -> Result<Self> {
        if cells.len() != indices.len() {
            return Err(Error::Protocol(format!("{} patch cells but {} indices", cells.len(), indices.len())));
        }
        if cells.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Protocol("patch cells are not strictly increasing".into()));
        }
        Ok(Self { cells, indices })
    }

    /// Takes `z` at each of `cells`; duplicates collapse.
    pub fn from_latent(z: &LatentGrid, cells: &[Cell]) -> Result<Self> {
        let mut flat: Vec<u32> = Vec::with_capacity(cells.len());
        for c in cells {
            if c.row >= z.height() || c.col >= z.width() {
                return Err(Error::Argument(format!("cell ({}, {}) outside the latent grid", c.row, c.col)));
            }
            flat.push(c.flat(z.width()) as u32);
        }
        flat.sort_unstable();
        flat.dedup();
        let indices = flat.iter().map(|&i| z.indices()[i as usize]).collect();
        Ok(Self { cells: flat, indices })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn get(&self, flat: u32) -> Option<u32> {
        self.cells.binary_search(&flat).ok().map(|i| self.indices[i])
    }

    pub fn cell_list(&self, width: usize) -> Vec<Cell> {
        self.cells.iter().map(|&i| Cell::from_flat(i as usize, width)).collect()
    }

    /// Union of two patches. A cell present in both must carry the same index.
    pub fn merge(&self, other: &Patch) -> Result<Patch> {
        let (mut i, mut j) = (0, 0);
        let mut cells = Vec::with_capacity(self.len() + other.len());
        let mut indices = Vec::with_capacity(self.len() + other.len());
        while i < self.len() || j < other.len() {
            let a = self.cells.get(i).copied().unwrap_or(u32::MAX);
            let b = other.cells.get(j).copied().unwrap_or(u32::MAX);
            if a == b {
                if self.indices[i] != other.indices[j] {
                    return Err(Error::Protocol(format!("conflicting indices for cell {a}")));
                }
                cells.push(a);
                indices.push(self.indices[i]);
                i += 1;
                j += 1;
            } else if a < b {
                cells.push(a);
                indices.push(self.indices[i]);
                i += 1;
            } else {
                cells.push(b);
                indices.push(other.indices[j]);
                j += 1;
            }
        }
        Ok(Patch { cells, indices })
    }
}

/// `z_r = (1 - M) ⊙ z_u + M ⊙ z_i` on index grids: masked cells take the
/// patch index, the rest keep the context-derived index.
pub fn fuse(z_u: &LatentGrid, patch: &Patch, mask: &FusionMask) -> Result<LatentGrid> {
    if (mask.height, mask.width) != z_u.dims() {
        return Err(Error::Dimension(format!(
            "mask {}x{} vs latent {:?}",
            mask.height,
            mask.width,
            z_u.dims()
        )));
    }
    let mut out = z_u.indices().to_vec();
    for (flat, slot) in out.iter_mut().enumerate() {
        if mask.bits[flat] {
            *slot = patch
                .get(flat as u32)
                .ok_or_else(|| Error::Protocol(format!("no patch index for masked cell {flat}")))?;
        }
    }
    LatentGrid::new(z_u.height(), z_u.width(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_two_by_two_example() {
        let z_u = LatentGrid::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let patch = Patch::new(vec![1], vec![9]).unwrap();
        let mask = build_mask(&[Cell::new(0, 1)], 2, 2).unwrap();
        assert_eq!(fuse(&z_u, &patch, &mask).unwrap().indices(), &[1, 9, 3, 4]);
    }

    #[test]
    fn mask_limits() {
        let all: Vec<Cell> = (0..16).map(|i| Cell::from_flat(i, 4)).collect();
        assert_eq!(build_mask(&all, 4, 4).unwrap().count(), 16);
        assert_eq!(build_mask(&[], 4, 4).unwrap().count(), 0);
        let m = build_mask(&[Cell::new(0, 0), Cell::new(2, 3)], 4, 4).unwrap();
        assert_eq!(m.cells(), vec![Cell::new(0, 0), Cell::new(2, 3)]);
        assert!(build_mask(&[Cell::new(4, 0)], 4, 4).is_err());
    }

    #[test]
    fn missing_patch_entry_is_a_protocol_error() {
        let z_u = LatentGrid::filled(2, 2, 0).unwrap();
        let mask = build_mask(&[Cell::new(1, 1)], 2, 2).unwrap();
        assert!(matches!(fuse(&z_u, &Patch::default(), &mask), Err(Error::Protocol(_))));
    }

    #[test]
    fn merge_is_a_sorted_union() {
        let a = Patch::new(vec![1, 5], vec![10, 50]).unwrap();
        let b = Patch::new(vec![0, 5, 7], vec![0, 50, 70]).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.cells(), &[0, 1, 5, 7]);
        assert_eq!(m.indices(), &[0, 10, 50, 70]);
        assert!(a.merge(&Patch::new(vec![5], vec![51]).unwrap()).is_err());
        assert!(Patch::new(vec![2, 2], vec![0, 0]).is_err());
    }
}
