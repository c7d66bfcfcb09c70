//! Full-reference quality metrics for images in `[-1, 1]`.

use super::Image;
use crate::{Error, Result};

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("shape mismatch {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// PSNR in dB with a peak-to-peak range of 2. Identical images give +inf.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>()
        / a.data().len() as f64;
    Ok(10.0 * (4.0 / mse).log10())
}

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let mid = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - mid).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

fn blur_valid(plane: &[f64], h: usize, w: usize, win: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = win.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|i| win[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| win[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM over channels with an 11×11 Gaussian window (σ = 1.5) over the
/// valid region. Images smaller than the window fall back to a single
/// global window.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let (c, h, w) = a.shape();
    let range = 2.0f64;
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let mut total = 0.0;
    for ch in 0..c {
        let x: Vec<f64> = a.plane(ch).iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = b.plane(ch).iter().map(|&v| v as f64).collect();
        if h < WINDOW || w < WINDOW {
            let n = x.len() as f64;
            let mx = x.iter().sum::<f64>() / n;
            let my = y.iter().sum::<f64>() / n;
            let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
            let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
            let cov = x.iter().zip(&y).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / n;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            continue;
        }
        let win = gaussian_window();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, oh, ow) = blur_valid(&x, h, w, &win);
        let (my, _, _) = blur_valid(&y, h, w, &win);
        let (sxx, _, _) = blur_valid(&xx, h, w, &win);
        let (syy, _, _) = blur_valid(&yy, h, w, &win);
        let (sxy, _, _) = blur_valid(&xy, h, w, &win);
        let mut acc = 0.0;
        for i in 0..oh * ow {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += acc / (oh * ow) as f64;
    }
    Ok(total / c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(seed: u32) -> Image {
        let data = (0..3 * 32 * 32)
            .map(|i| (((i as u32).wrapping_mul(2654435761).wrapping_add(seed.wrapping_mul(0x9E37_79B9)) >> 16) % 200) as f32 / 100.0 - 1.0)
            .collect();
        Image::new(3, 32, 32, data).unwrap()
    }

    #[test]
    fn psnr_of_known_error() {
        let a = Image::constant(1, 4, 4, 0.0).unwrap();
        let b = Image::constant(1, 4, 4, 0.2).unwrap();
        // mse 0.04 → 10·log10(100) = 20 dB
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-4);
        assert!(psnr(&a, &a).unwrap().is_infinite());
    }

    #[test]
    fn ssim_is_one_for_identical_and_lower_otherwise() {
        let a = pattern(1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let b = pattern(7);
        assert!(ssim(&a, &b).unwrap() < 0.5);
        let small = Image::constant(3, 4, 4, 0.1).unwrap();
        assert!((ssim(&small, &small).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Image::constant(3, 4, 4, 0.0).unwrap();
        let b = Image::constant(3, 4, 8, 0.0).unwrap();
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }
}
