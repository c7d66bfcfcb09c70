use rand::Rng;

use super::{init_uniform, matmul, Real};

/// Fully connected layer, weight laid out `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng>(rng: &mut R, in_dim: usize, out_dim: usize, gain: f64) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: init_uniform(rng, in_dim * out_dim, in_dim, gain),
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.in_dim);
        let mut out = self.bias.clone();
        matmul(self.out_dim, self.in_dim, 1, &self.weight, false, x, false, T::one(), &mut out);
        out
    }

    pub fn backward(&self, x: &[T], grad_out: &[T], grad_weight: &mut [T], grad_bias: &mut [T]) -> Vec<T> {
        matmul(self.out_dim, 1, self.in_dim, grad_out, false, x, false, T::one(), grad_weight);
        for (gb, &g) in grad_bias.iter_mut().zip(grad_out) {
            *gb += g;
        }
        let mut dx = vec![T::zero(); self.in_dim];
        matmul(self.in_dim, self.out_dim, 1, &self.weight, true, grad_out, false, T::zero(), &mut dx);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_hand_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut lin = Linear::<f64>::new(&mut rng, 3, 2, 1.0);
        lin.weight = vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0];
        lin.bias = vec![0.5, -0.5];
        let x = [1.0, -1.0, 2.0];
        assert_eq!(lin.forward(&x), vec![5.5, -2.0]);
        let mut gw = vec![0.0; 6];
        let mut gb = vec![0.0; 2];
        let dx = lin.backward(&x, &[1.0, 2.0], &mut gw, &mut gb);
        assert_eq!(gw, vec![1.0, -1.0, 2.0, 2.0, -2.0, 4.0]);
        assert_eq!(gb, vec![1.0, 2.0]);
        assert_eq!(dx, vec![-1.0, 3.0, 3.0]);
    }
}
