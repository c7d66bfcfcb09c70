use super::{Conv2d, ConvTranspose2d, Real, Tensor3};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    ConvT(ConvTranspose2d<T>),
    Relu,
}

/// What a layer keeps from the forward pass for its backward pass.
#[derive(Debug, Clone)]
pub enum LayerTrace<T> {
    Conv { cols: Vec<T>, input_hw: (usize, usize) },
    ConvT { input: Tensor3<T> },
    Relu { output: Tensor3<T> },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv(c) => c.forward(&cur)?,
                Layer::ConvT(c) => c.forward(&cur)?,
                Layer::Relu => relu(cur),
            };
        }
        Ok(cur)
    }

    pub fn forward_traced(&self, x: &Tensor3<T>) -> Result<(Tensor3<T>, Vec<LayerTrace<T>>)> {
        let mut cur = x.clone();
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    let input_hw = (cur.height, cur.width);
                    let (out, cols) = c.forward_cols(&cur)?;
                    traces.push(LayerTrace::Conv { cols, input_hw });
                    cur = out;
                }
                Layer::ConvT(c) => {
                    let out = c.forward(&cur)?;
                    traces.push(LayerTrace::ConvT { input: cur });
                    cur = out;
                }
                Layer::Relu => {
                    cur = relu(cur);
                    traces.push(LayerTrace::Relu { output: cur.clone() });
                }
            }
        }
        Ok((cur, traces))
    }

    /// Backpropagates `grad_out`, adding parameter gradients into `grads`
    /// (laid out as [`Self::zero_grads`]). Returns the input gradient when
    /// `want_input_grad` is set.
    pub fn backward(
        &self,
        traces: &[LayerTrace<T>],
        grad_out: Tensor3<T>,
        grads: &mut [Vec<T>],
        want_input_grad: bool,
    ) -> Option<Tensor3<T>> {
        assert_eq!(traces.len(), self.layers.len(), "trace does not belong to this network");
        let mut slot = self.param_slots();
        let mut grad = grad_out;
        for (i, (layer, trace)) in self.layers.iter().zip(traces).enumerate().rev() {
            let need_input = want_input_grad || i > 0;
            grad = match (layer, trace) {
                (Layer::Conv(c), LayerTrace::Conv { cols, input_hw }) => {
                    slot -= 2;
                    let (gw, rest) = grads[slot..].split_at_mut(1);
                    match c.backward(cols, &grad, &mut gw[0], &mut rest[0], need_input.then_some(*input_hw)) {
                        Some(g) => g,
                        None => return None,
                    }
                }
                (Layer::ConvT(c), LayerTrace::ConvT { input }) => {
                    slot -= 2;
                    let (gw, rest) = grads[slot..].split_at_mut(1);
                    match c.backward(input, &grad, &mut gw[0], &mut rest[0], need_input) {
                        Some(g) => g,
                        None => return None,
                    }
                }
                (Layer::Relu, LayerTrace::Relu { output }) => {
                    let mut g = grad;
                    for (gv, &o) in g.data.iter_mut().zip(&output.data) {
                        if o <= T::zero() {
                            *gv = T::zero();
                        }
                    }
                    g
                }
                _ => panic!("layer/trace mismatch at position {i}"),
            };
        }
        want_input_grad.then_some(grad)
    }

    fn param_slots(&self) -> usize {
        self.layers.iter().filter(|l| !matches!(l, Layer::Relu)).count() * 2
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => out.extend([c.weight.as_slice(), c.bias.as_slice()]),
                Layer::ConvT(c) => out.extend([c.weight.as_slice(), c.bias.as_slice()]),
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&mut c.weight);
                    out.push(&mut c.bias);
                }
                Layer::ConvT(c) => {
                    out.push(&mut c.weight);
                    out.push(&mut c.bias);
                }
                Layer::Relu => {}
            }
        }
        out
    }
}

fn relu<T: Real>(mut x: Tensor3<T>) -> Tensor3<T> {
    for v in &mut x.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stacked_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Sequential::<f64>::new(vec![
            Layer::Conv(Conv2d::new(&mut rng, 2, 3, 3, 1, 1, 1.0)),
            Layer::Relu,
            Layer::ConvT(ConvTranspose2d::new(&mut rng, 3, 2, 4, 2, 1, 1.0)),
        ]);
        let x = Tensor3::from_vec(2, 4, 4, (0..32).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (out, traces) = net.forward_traced(&x).unwrap();
        assert_eq!(out.shape(), (2, 8, 8));
        let probe: Vec<f64> = (0..out.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut grads = net.zero_grads();
        let g = Tensor3::from_vec(2, 8, 8, probe.clone()).unwrap();
        let dx = net.backward(&traces, g, &mut grads, true).unwrap();
        let f = |n: &Sequential<f64>, x: &Tensor3<f64>| -> f64 {
            n.forward(x).unwrap().data.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-6;
        for (pi, g) in grads.iter().enumerate() {
            for j in (0..g.len()).step_by(3) {
                let mut n2 = net.clone();
                n2.params_mut()[pi][j] += eps;
                let up = f(&n2, &x);
                n2.params_mut()[pi][j] -= 2.0 * eps;
                let down = f(&n2, &x);
                let fd = (up - down) / (2.0 * eps);
                assert!((fd - g[j]).abs() < 1e-5, "param {pi}[{j}]: {fd} vs {}", g[j]);
            }
        }
        for j in 0..x.data.len() {
            let mut x2 = x.clone();
            x2.data[j] += eps;
            let up = f(&net, &x2);
            x2.data[j] -= 2.0 * eps;
            let down = f(&net, &x2);
            assert!(((up - down) / (2.0 * eps) - dx.data[j]).abs() < 1e-5);
        }
    }
}
