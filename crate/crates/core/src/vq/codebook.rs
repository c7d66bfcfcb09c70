use rand::Rng;

use crate::nn::Real;
use crate::{Error, Result};

/// `ceil(log2 k)`, the fixed width of one transmitted index.
pub fn bits_per_index(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

/// `K` embedding vectors of dimension `d_c`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    size: usize,
    dim: usize,
    pub(crate) vectors: Vec<T>,
}

impl<T: Real> Codebook<T> {
    pub fn new(size: usize, dim: usize, vectors: Vec<T>) -> Result<Self> {
        if size < 2 {
            return Err(Error::Argument(format!("codebook needs at least 2 entries, got {size}")));
        }
        if dim == 0 || vectors.len() != size * dim {
            return Err(Error::Dimension(format!("{} values do not form {size} vectors of dim {dim}", vectors.len())));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("codebook contains NaN/Inf".into()));
        }
        Ok(Self { size, dim, vectors })
    }

    /// Uniform initialisation in `[-1/K, 1/K]`.
    pub fn random<R: Rng>(rng: &mut R, size: usize, dim: usize) -> Result<Self> {
        let bound = 1.0 / size as f64;
        let vectors = (0..size * dim).map(|_| T::of(rng.random_range(-bound..=bound))).collect();
        Self::new(size, dim, vectors)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits_per_index(&self) -> u32 {
        bits_per_index(self.size)
    }

    pub fn vector(&self, index: usize) -> &[T] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[T] {
        &self.vectors
    }

    /// Index of the codeword with the smallest squared Euclidean distance to
    /// `e`; ties go to the lowest index.
    pub fn quantize_cell(&self, e: &[T]) -> Result<u32> {
        if e.len() != self.dim {
            return Err(Error::Dimension(format!("embedding has {} dims, codebook has {}", e.len(), self.dim)));
        }
        Ok(self.nearest(e))
    }

    pub(crate) fn nearest(&self, e: &[T]) -> u32 {
        let mut best = 0usize;
        let mut best_d = T::infinity();
        for (j, c) in self.vectors.chunks_exact(self.dim).enumerate() {
            let d = squared_distance(e, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best as u32
    }
}

#[inline]
fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    // four partial sums keep the loop vectorisable; the order is fixed so
    // results are reproducible
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..4 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = *x - *y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> Codebook<f64> {
        Codebook::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn bit_widths() {
        assert_eq!(bits_per_index(2), 1);
        assert_eq!(bits_per_index(8), 3);
        assert_eq!(bits_per_index(9), 4);
        assert_eq!(bits_per_index(512), 9);
        assert_eq!(bits_per_index(8192), 13);
    }

    #[test]
    fn nearest_by_squared_distance() {
        let cb = two_point();
        // 0.32 vs 0.72
        assert_eq!(cb.quantize_cell(&[0.4, 0.4]).unwrap(), 0);
        // 1.45 vs 0.05
        assert_eq!(cb.quantize_cell(&[0.9, 0.8]).unwrap(), 1);
    }

    #[test]
    fn exact_codeword_and_ties() {
        let vectors: Vec<f64> = (0..10).flat_map(|i| [i as f64, 0.0]).collect();
        let cb = Codebook::new(10, 2, vectors).unwrap();
        assert_eq!(cb.quantize_cell(&[5.0, 0.0]).unwrap(), 5);
        // equidistant from c_2 and c_7 only when those are the two nearest;
        // build such a book explicitly
        let mut v = vec![10.0f64; 20];
        v[4] = 1.0;
        v[5] = 0.0; // c_2 = (1, 0)
        v[14] = -1.0;
        v[15] = 0.0; // c_7 = (-1, 0)
        let cb = Codebook::new(10, 2, v).unwrap();
        assert_eq!(cb.quantize_cell(&[0.0, 0.0]).unwrap(), 2);
    }

    #[test]
    fn validation() {
        assert!(Codebook::<f32>::new(1, 2, vec![0.0, 0.0]).is_err());
        assert!(Codebook::<f32>::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Codebook::<f32>::new(2, 1, vec![0.0, f32::NAN]).is_err());
        assert!(two_point().quantize_cell(&[1.0]).is_err());
    }
}
