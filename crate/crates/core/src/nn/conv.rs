use rand::Rng;

use super::{init_uniform, matmul, Real, Tensor3};
use crate::{Error, Result};

fn out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Unfolds `x` into a `(C·k·k) × (oh·ow)` patch matrix. Row index is
/// `(c·k + ky)·k + kx`; out-of-bounds taps read zero.
pub fn im2col<T: Real>(x: &Tensor3<T>, k: usize, stride: usize, pad: usize) -> (Vec<T>, usize, usize) {
    let oh = out_extent(x.height, k, stride, pad).unwrap_or(0);
    let ow = out_extent(x.width, k, stride, pad).unwrap_or(0);
    let cols_n = oh * ow;
    let mut cols = vec![T::zero(); x.channels * k * k * cols_n];
    for c in 0..x.channels {
        let plane = x.plane(c);
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= x.height as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * x.width..(iy as usize + 1) * x.width];
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && (ix as usize) < x.width {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    (cols, oh, ow)
}

/// Adjoint of [`im2col`]: scatters-and-adds a patch matrix back onto a
/// `channels × height × width` tensor.
pub fn col2im<T: Real>(
    cols: &[T],
    channels: usize,
    height: usize,
    width: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Tensor3<T> {
    let oh = out_extent(height, k, stride, pad).unwrap_or(0);
    let ow = out_extent(width, k, stride, pad).unwrap_or(0);
    let cols_n = oh * ow;
    let mut out = Tensor3::<T>::zeros(channels, height, width);
    for c in 0..channels {
        let plane = &mut out.data[c * height * width..(c + 1) * height * width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    let base = iy as usize * width;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && (ix as usize) < width {
                            plane[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

fn add_bias<T: Real>(data: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in data.chunks_mut(plane).zip(bias) {
        for v in chunk {
            *v += b;
        }
    }
}

fn accumulate_bias_grad<T: Real>(grad_out: &[T], plane: usize, grad_bias: &mut [T]) {
    for (chunk, gb) in grad_out.chunks(plane).zip(grad_bias.iter_mut()) {
        *gb += chunk.iter().copied().sum::<T>();
    }
}

/// 2-D convolution, weight laid out as `out_c × (in_c·k·k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        gain: f64,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: init_uniform(rng, out_channels * fan_in, fan_in, gain),
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn output_size(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        Some((
            out_extent(height, self.kernel, self.stride, self.padding)?,
            out_extent(width, self.kernel, self.stride, self.padding)?,
        ))
    }

    fn check(&self, x: &Tensor3<T>) -> Result<()> {
        if x.channels != self.in_channels {
            return Err(Error::Dimension(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, x.channels
            )));
        }
        match self.output_size(x.height, x.width) {
            Some((h, w)) if h > 0 && w > 0 => Ok(()),
            _ => Err(Error::Dimension(format!(
                "{}x{} input is too small for a {}x{} kernel",
                x.height, x.width, self.kernel, self.kernel
            ))),
        }
    }

    /// Returns the output and the unfolded input needed by [`Self::backward`].
    pub fn forward_cols(&self, x: &Tensor3<T>) -> Result<(Tensor3<T>, Vec<T>)> {
        self.check(x)?;
        let (cols, oh, ow) = im2col(x, self.kernel, self.stride, self.padding);
        let rows = self.in_channels * self.kernel * self.kernel;
        let mut out = Tensor3::zeros(self.out_channels, oh, ow);
        matmul(self.out_channels, rows, oh * ow, &self.weight, false, &cols, false, T::zero(), &mut out.data);
        add_bias(&mut out.data, &self.bias, oh * ow);
        Ok((out, cols))
    }

    pub fn forward(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.forward_cols(x).map(|(out, _)| out)
    }

    /// Accumulates weight/bias gradients; returns the input gradient when
    /// `input_shape` is given.
    pub fn backward(
        &self,
        cols: &[T],
        grad_out: &Tensor3<T>,
        grad_weight: &mut [T],
        grad_bias: &mut [T],
        input_shape: Option<(usize, usize)>,
    ) -> Option<Tensor3<T>> {
        let rows = self.in_channels * self.kernel * self.kernel;
        let n = grad_out.plane_len();
        matmul(self.out_channels, n, rows, &grad_out.data, false, cols, true, T::one(), grad_weight);
        accumulate_bias_grad(&grad_out.data, n, grad_bias);
        input_shape.map(|(h, w)| {
            let mut dcols = vec![T::zero(); rows * n];
            matmul(rows, self.out_channels, n, &self.weight, true, &grad_out.data, false, T::zero(), &mut dcols);
            col2im(&dcols, self.in_channels, h, w, self.kernel, self.stride, self.padding)
        })
    }
}

/// Transposed convolution (the adjoint of [`Conv2d`] geometry), weight laid
/// out as `in_c × (out_c·k·k)`. Output extent is `(h−1)·s + k − 2p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new<R: Rng>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        gain: f64,
    ) -> Self {
        // each output pixel sees roughly in_c·(k/s)² taps
        let fan_in = (in_channels * kernel * kernel / (stride * stride)).max(1);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: init_uniform(rng, in_channels * out_channels * kernel * kernel, fan_in, gain),
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn output_size(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let ext = |v: usize| ((v.checked_sub(1)?) * self.stride + self.kernel).checked_sub(2 * self.padding);
        let (h, w) = (ext(height)?, ext(width)?);
        // the forward geometry must be exactly invertible
        (out_extent(h, self.kernel, self.stride, self.padding) == Some(height)
            && out_extent(w, self.kernel, self.stride, self.padding) == Some(width))
        .then_some((h, w))
    }

    pub fn forward(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        if x.channels != self.in_channels {
            return Err(Error::Dimension(format!(
                "transposed conv expects {} input channels, got {}",
                self.in_channels, x.channels
            )));
        }
        let (oh, ow) = self
            .output_size(x.height, x.width)
            .ok_or_else(|| Error::Dimension(format!("{}x{} input has no transposed-conv output", x.height, x.width)))?;
        let rows = self.out_channels * self.kernel * self.kernel;
        let n = x.plane_len();
        let mut cols = vec![T::zero(); rows * n];
        matmul(rows, self.in_channels, n, &self.weight, true, &x.data, false, T::zero(), &mut cols);
        let mut out = col2im(&cols, self.out_channels, oh, ow, self.kernel, self.stride, self.padding);
        add_bias(&mut out.data, &self.bias, oh * ow);
        Ok(out)
    }

    pub fn backward(
        &self,
        input: &Tensor3<T>,
        grad_out: &Tensor3<T>,
        grad_weight: &mut [T],
        grad_bias: &mut [T],
        want_input_grad: bool,
    ) -> Option<Tensor3<T>> {
        let rows = self.out_channels * self.kernel * self.kernel;
        let n = input.plane_len();
        let (gcols, _, _) = im2col(grad_out, self.kernel, self.stride, self.padding);
        matmul(self.in_channels, n, rows, &input.data, false, &gcols, true, T::one(), grad_weight);
        accumulate_bias_grad(&grad_out.data, grad_out.plane_len(), grad_bias);
        want_input_grad.then(|| {
            let mut dx = Tensor3::zeros(self.in_channels, input.height, input.width);
            matmul(self.in_channels, rows, n, &self.weight, false, &gcols, false, T::zero(), &mut dx.data);
            dx
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor3<f64> {
        Tensor3::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_conv(conv: &Conv2d<f64>, x: &Tensor3<f64>) -> Tensor3<f64> {
        let (oh, ow) = conv.output_size(x.height, x.width).unwrap();
        let k = conv.kernel;
        let mut out = Tensor3::zeros(conv.out_channels, oh, ow);
        for o in 0..conv.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias[o];
                    for c in 0..conv.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride + ky) as isize - conv.padding as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.padding as isize;
                                if iy < 0 || ix < 0 || iy >= x.height as isize || ix >= x.width as isize {
                                    continue;
                                }
                                acc += conv.weight[o * conv.in_channels * k * k + (c * k + ky) * k + kx]
                                    * x.at(c, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.data[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, s, p) in [(3, 1, 1), (4, 2, 1), (1, 1, 0), (3, 2, 1)] {
            let mut conv = Conv2d::<f64>::new(&mut rng, 2, 3, k, s, p, 1.0);
            conv.bias = vec![0.1, -0.2, 0.3];
            let x = random_tensor(&mut rng, 2, 8, 6);
            let got = conv.forward(&x).unwrap();
            let want = naive_conv(&conv, &x);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_conv_is_the_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> when both share weights and have no bias
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv2d::<f64>::new(&mut rng, 3, 2, 4, 2, 1, 1.0);
        let mut convt = ConvTranspose2d::<f64>::new(&mut rng, 2, 3, 4, 2, 1, 1.0);
        // conv weight is out×(in·k·k) = 2×(3·16); convT wants in×(out·k·k) = 2×(3·16)
        convt.weight = conv.weight.clone();
        let x = random_tensor(&mut rng, 3, 8, 8);
        let y = random_tensor(&mut rng, 2, 4, 4);
        let cx = conv.forward(&x).unwrap();
        let ty = convt.forward(&y).unwrap();
        assert_eq!(ty.shape(), (3, 8, 8));
        let lhs: f64 = cx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&ty.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    fn loss(t: &Tensor3<f64>, probe: &[f64]) -> f64 {
        t.data.iter().zip(probe).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = Conv2d::<f64>::new(&mut rng, 2, 3, 3, 2, 1, 1.0);
        let x = random_tensor(&mut rng, 2, 6, 6);
        let (out, cols) = conv.forward_cols(&x).unwrap();
        let probe: Vec<f64> = (0..out.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = Tensor3::from_vec(out.channels, out.height, out.width, probe.clone()).unwrap();
        let mut gw = vec![0.0; conv.weight.len()];
        let mut gb = vec![0.0; conv.bias.len()];
        let dx = conv.backward(&cols, &g, &mut gw, &mut gb, Some((6, 6))).unwrap();
        let eps = 1e-6;
        for i in 0..conv.weight.len() {
            let mut c2 = conv.clone();
            c2.weight[i] += eps;
            let up = loss(&c2.forward(&x).unwrap(), &probe);
            c2.weight[i] -= 2.0 * eps;
            let down = loss(&c2.forward(&x).unwrap(), &probe);
            assert!(((up - down) / (2.0 * eps) - gw[i]).abs() < 1e-6);
        }
        for i in 0..x.data.len() {
            let mut x2 = x.clone();
            x2.data[i] += eps;
            let up = loss(&conv.forward(&x2).unwrap(), &probe);
            x2.data[i] -= 2.0 * eps;
            let down = loss(&conv.forward(&x2).unwrap(), &probe);
            assert!(((up - down) / (2.0 * eps) - dx.data[i]).abs() < 1e-6);
        }
        let bsum: f64 = probe[..9].iter().sum();
        assert!((gb[0] - bsum).abs() < 1e-12);
    }

    #[test]
    fn transposed_conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let convt = ConvTranspose2d::<f64>::new(&mut rng, 2, 3, 4, 2, 1, 1.0);
        let x = random_tensor(&mut rng, 2, 3, 3);
        let out = convt.forward(&x).unwrap();
        assert_eq!(out.shape(), (3, 6, 6));
        let probe: Vec<f64> = (0..out.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = Tensor3::from_vec(3, 6, 6, probe.clone()).unwrap();
        let mut gw = vec![0.0; convt.weight.len()];
        let mut gb = vec![0.0; 3];
        let dx = convt.backward(&x, &g, &mut gw, &mut gb, true).unwrap();
        let eps = 1e-6;
        for i in (0..convt.weight.len()).step_by(5) {
            let mut c2 = convt.clone();
            c2.weight[i] += eps;
            let up = loss(&c2.forward(&x).unwrap(), &probe);
            c2.weight[i] -= 2.0 * eps;
            let down = loss(&c2.forward(&x).unwrap(), &probe);
            assert!(((up - down) / (2.0 * eps) - gw[i]).abs() < 1e-6);
        }
        for i in 0..x.data.len() {
            let mut x2 = x.clone();
            x2.data[i] += eps;
            let up = loss(&convt.forward(&x2).unwrap(), &probe);
            x2.data[i] -= 2.0 * eps;
            let down = loss(&convt.forward(&x2).unwrap(), &probe);
            assert!(((up - down) / (2.0 * eps) - dx.data[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let conv = Conv2d::<f32>::new(&mut rng, 3, 4, 3, 1, 1, 1.0);
        assert!(conv.forward(&Tensor3::zeros(2, 4, 4)).is_err());
    }
}
