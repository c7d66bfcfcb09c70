use crate::imagecore::resize_plane_bilinear;
use crate::nn::{Real, Tensor3};
use crate::{Error, Result};

/// A single-channel pixel map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!("{} values for a {height}x{width} map", data.len())));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Argument("saliency values must lie in [0, 1]".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Smallest half-open pixel box `(x0, y0, x1, y1)` holding every value
    /// `>= threshold`, or `None` when no pixel qualifies.
    pub fn bounding_box(&self, threshold: f32) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.at(y, x) >= threshold {
                    b = Some(match b {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        b
    }
}

/// GradCAM from final-layer activations `A` and the class-score gradient
/// `dy/dA`: channel weights are the spatial mean of the gradient, the
/// weighted sum is rectified, resized bilinearly to `out_h × out_w` and
/// min-max normalised. A map without positive values comes back all zero.
pub fn gradcam_from_activations<T: Real>(
    acts: &Tensor3<T>,
    grads: &Tensor3<T>,
    out_h: usize,
    out_w: usize,
) -> Result<SaliencyMap> {
    if acts.shape() != grads.shape() {
        return Err(Error::Dimension(format!("activations {:?} vs gradients {:?}", acts.shape(), grads.shape())));
    }
    let plane = acts.plane_len();
    let mut cam = vec![0f64; plane];
    for k in 0..acts.channels {
        let alpha = grads.plane(k).iter().map(|g| g.as_f64()).sum::<f64>() / plane as f64;
        if alpha == 0.0 {
            continue;
        }
        for (c, a) in cam.iter_mut().zip(acts.plane(k)) {
            *c += alpha * a.as_f64();
        }
    }
    let rect: Vec<f32> = cam.iter().map(|&v| v.max(0.0) as f32).collect();
    let mut up = resize_plane_bilinear(&rect, acts.height, acts.width, out_h, out_w);
    let max = up.iter().cloned().fold(0f32, f32::max);
    if max <= 0.0 {
        return SaliencyMap::new(out_h, out_w, vec![0.0; out_h * out_w]);
    }
    let min = up.iter().cloned().fold(f32::INFINITY, f32::min);
    if max == min {
        up.iter_mut().for_each(|v| *v = 1.0);
    } else {
        let span = max - min;
        up.iter_mut().for_each(|v| *v = ((*v - min) / span).clamp(0.0, 1.0));
    }
    SaliencyMap::new(out_h, out_w, up)
}
