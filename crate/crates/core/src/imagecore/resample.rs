//! Separable Catmull-Rom resampling (a = -0.5, half-pixel centers).
//!
//! When shrinking, the kernel is stretched by the scale factor so every
//! source pixel contributes (area-aware, no aliasing). Taps that fall
//! outside the image are dropped and the remaining weights renormalised,
//! so constant images stay constant at the borders.

use super::Image;
use crate::{Error, Result};

const A: f64 = -0.5;

fn catmull_rom(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * A
    } else {
        0.0
    }
}

/// Per output sample: first source index and its normalised tap weights.
fn tap_table(in_n: usize, out_n: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = in_n as f64 / out_n as f64;
    let filter_scale = scale.max(1.0);
    let support = 2.0 * filter_scale;
    (0..out_n)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = ((center - support - 0.5).floor().max(0.0)) as usize;
            let hi = ((center + support + 0.5).ceil() as usize).min(in_n);
            let mut weights: Vec<f64> =
                (lo..hi).map(|i| catmull_rom((i as f64 + 0.5 - center) / filter_scale)).collect();
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            (lo, weights)
        })
        .collect()
}

fn resample_plane(src: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let cols = tap_table(w, ow);
    let rows = tap_table(h, oh);
    let mut tmp = vec![0.0f64; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (ox, (start, wts)) in cols.iter().enumerate() {
            tmp[y * ow + ox] = wts.iter().enumerate().map(|(i, wt)| wt * row[start + i] as f64).sum();
        }
    }
    let mut out = vec![0.0f64; oh * ow];
    for (oy, (start, wts)) in rows.iter().enumerate() {
        for (i, wt) in wts.iter().enumerate() {
            let src_row = &tmp[(start + i) * ow..(start + i + 1) * ow];
            for (o, s) in out[oy * ow..(oy + 1) * ow].iter_mut().zip(src_row) {
                *o += wt * s;
            }
        }
    }
    out
}

fn resample(x: &Image, oh: usize, ow: usize) -> Result<Image> {
    let (c, h, w) = x.shape();
    let mut data = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        data.extend(resample_plane(x.plane(ch), h, w, oh, ow).into_iter().map(|v| v as f32));
    }
    Image::from_clamped(c, oh, ow, data)
}

/// Shrinks by an integer factor; dimensions must divide evenly.
pub fn downsample(x: &Image, f: usize) -> Result<Image> {
    if f == 0 {
        return Err(Error::Argument("downsample factor must be at least 1".into()));
    }
    x.check_divisible(f)?;
    if f == 1 {
        return Ok(x.clone());
    }
    resample(x, x.height() / f, x.width() / f)
}

/// Enlarges by an integer factor, clamping the result into `[-1, 1]`.
pub fn upsample(x: &Image, f: usize) -> Result<Image> {
    if f == 0 {
        return Err(Error::Argument("upsample factor must be at least 1".into()));
    }
    if f == 1 {
        return Ok(x.clone());
    }
    resample(x, x.height() * f, x.width() * f)
}

/// Bilinear resize of a single plane with half-pixel centers and edge
/// clamping.
pub fn resize_plane_bilinear(src: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    assert_eq!(src.len(), h * w);
    let axis = |in_n: usize, out_n: usize| -> Vec<(usize, usize, f32)> {
        let scale = in_n as f32 / out_n as f32;
        (0..out_n)
            .map(|o| {
                let pos = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (pos.floor() as usize).min(in_n - 1);
                let i1 = (i0 + 1).min(in_n - 1);
                (i0, i1, pos - i0 as f32)
            })
            .collect()
    };
    let ys = axis(h, oh);
    let xs = axis(w, ow);
    let mut out = Vec::with_capacity(oh * ow);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        let data = (0..3 * h * w).map(|i| ((i % (h * w)) as f32 / (h * w) as f32) * 1.6 - 0.8).collect();
        Image::new(3, h, w, data).unwrap()
    }

    #[test]
    fn kernel_is_interpolating() {
        assert_eq!(catmull_rom(0.0), 1.0);
        assert_eq!(catmull_rom(1.0), 0.0);
        assert_eq!(catmull_rom(2.0), 0.0);
        // partition of unity at an arbitrary phase
        let s: f64 = [-1.3, -0.3, 0.7, 1.7].iter().map(|&d| catmull_rom(d)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shapes_follow_factor() {
        let x = ramp(256, 512);
        assert_eq!(downsample(&x, 4).unwrap().shape(), (3, 64, 128));
        let c = ramp(64, 128);
        assert_eq!(upsample(&c, 4).unwrap().shape(), (3, 256, 512));
    }

    #[test]
    fn factor_one_is_identity() {
        let x = ramp(8, 8);
        assert_eq!(downsample(&x, 1).unwrap(), x);
        assert_eq!(upsample(&x, 1).unwrap(), x);
    }

    #[test]
    fn constants_are_preserved() {
        for f in [2, 3, 4] {
            let x = Image::constant(3, 12, 24, 0.37).unwrap();
            for v in downsample(&x, f).unwrap().data() {
                assert!((v - 0.37).abs() < 1e-6);
            }
            for v in upsample(&x, f).unwrap().data() {
                assert!((v - 0.37).abs() < 1e-6);
            }
            for v in downsample(&upsample(&x, f).unwrap(), f).unwrap().data() {
                assert!((v - 0.37).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn non_divisible_downsample_is_rejected() {
        let x = ramp(10, 8);
        assert!(matches!(downsample(&x, 4), Err(Error::Dimension(_))));
        assert!(downsample(&x, 0).is_err());
    }

    #[test]
    fn outputs_stay_in_range_and_are_deterministic() {
        // alternating extremes make Catmull-Rom overshoot before clamping
        let data = (0..3 * 16 * 16).map(|i| if (i / 3) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = Image::new(3, 16, 16, data).unwrap();
        let up = upsample(&x, 4).unwrap();
        assert!(up.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(up, upsample(&x, 4).unwrap());
        let round = downsample(&up, 4).unwrap();
        assert_eq!(round.shape(), x.shape());
    }

    #[test]
    fn bilinear_preserves_constants_and_corners() {
        let src = vec![0.5f32; 16];
        assert!(resize_plane_bilinear(&src, 4, 4, 16, 16).iter().all(|v| (v - 0.5).abs() < 1e-7));
        let src = vec![0.0, 1.0, 2.0, 3.0];
        let out = resize_plane_bilinear(&src, 2, 2, 4, 4);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[15], 3.0);
    }
}
