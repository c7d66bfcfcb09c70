use std::path::Path;

use image::imageops::FilterType;
use image::{DynamicImage, RgbImage};

use crate::nn::{Real, Tensor3};
use crate::{Error, Result};

/// A `channels × height × width` image with every value in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Dimension(format!("empty image {channels}x{height}x{width}")));
        }
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "{} values do not fill a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("pixel value {bad} outside [-1, 1]")));
        }
        Ok(Self { channels, height, width, data })
    }

    /// Builds an image from arbitrary values, clamping into `[-1, 1]`.
    /// NaN maps to 0.
    pub fn from_clamped(channels: usize, height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        }
        Self::new(channels, height, width, data)
    }

    pub fn constant(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn check_divisible(&self, divisor: usize) -> Result<()> {
        if divisor == 0 || self.height % divisor != 0 || self.width % divisor != 0 {
            return Err(Error::Dimension(format!(
                "{}x{} image is not divisible by {divisor}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor3<T> {
        Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| T::of(v as f64)).collect(),
        }
    }

    pub fn from_tensor<T: Real>(t: &Tensor3<T>) -> Result<Self> {
        Self::from_clamped(t.channels, t.height, t.width, t.data.iter().map(|v| v.as_f64() as f32).collect())
    }

    /// Linear map from 8-bit RGB: 0 → -1, 255 → 1.
    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0f32; 3 * h * w];
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                data[(c * h + y as usize) * w + x as usize] = px.0[c] as f32 / 127.5 - 1.0;
            }
        }
        Self::new(3, h, w, data)
    }

    pub fn to_rgb8(&self) -> Result<RgbImage> {
        if self.channels != 3 {
            return Err(Error::Dimension(format!("RGB export needs 3 channels, image has {}", self.channels)));
        }
        let (h, w) = (self.height, self.width);
        Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let px = |c: usize| {
                let v = self.data[(c * h + y as usize) * w + x as usize];
                ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
            };
            image::Rgb([px(0), px(1), px(2)])
        }))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()?
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Ingestion { path: path.to_path_buf(), reason: e.to_string() })
    }
}

/// Loads a PNG/JPEG file as RGB, center-crops to the target aspect ratio,
/// resizes with a Catmull-Rom filter and maps `[0, 255]` to `[-1, 1]`.
pub fn load_image(path: &Path, target_h: usize, target_w: usize) -> Result<Image> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Dimension(format!("target size {target_h}x{target_w} is empty")));
    }
    let ingest_err = |reason: String| Error::Ingestion { path: path.to_path_buf(), reason };
    let bytes = std::fs::read(path).map_err(|e| ingest_err(e.to_string()))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| ingest_err(e.to_string()))?;
    let rgb = center_crop_resize(decoded, target_h as u32, target_w as u32);
    let img = Image::from_rgb8(&rgb)?;
    if img.height() != target_h || img.width() != target_w {
        return Err(Error::Dimension(format!(
            "{} decoded to {}x{}, expected {target_h}x{target_w}",
            path.display(),
            img.height(),
            img.width()
        )));
    }
    Ok(img)
}

fn center_crop_resize(img: DynamicImage, th: u32, tw: u32) -> RgbImage {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    if (w, h) == (tw, th) {
        return rgb;
    }
    // largest centered window with the target aspect ratio
    let (cw, ch) = if (w as u64) * (th as u64) > (h as u64) * (tw as u64) {
        (((h as u64 * tw as u64) / th as u64).max(1) as u32, h)
    } else {
        (w, ((w as u64 * th as u64) / tw as u64).max(1) as u32)
    };
    let cropped = image::imageops::crop_imm(&rgb, (w - cw) / 2, (h - ch) / 2, cw, ch).to_image();
    image::imageops::resize(&cropped, tw, th, FilterType::CatmullRom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_endpoints_map_to_unit_range() {
        let img = RgbImage::from_fn(2, 1, |x, _| if x == 0 { image::Rgb([255, 255, 255]) } else { image::Rgb([0, 0, 0]) });
        let im = Image::from_rgb8(&img).unwrap();
        assert_eq!(im.at(0, 0, 0), 1.0);
        assert_eq!(im.at(2, 0, 1), -1.0);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Image::new(1, 1, 2, vec![0.0, 1.5]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.0]).is_err());
        assert!(Image::from_clamped(1, 1, 2, vec![f32::NAN, 3.0]).unwrap().data() == [0.0, 1.0]);
    }

    #[test]
    fn loads_and_resizes_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.png");
        RgbImage::from_fn(96, 96, |x, y| image::Rgb([(x * 2) as u8, (y * 2) as u8, 128]))
            .save(&path)
            .unwrap();
        let im = load_image(&path, 64, 64).unwrap();
        assert_eq!(im.shape(), (3, 64, 64));
        assert!(im.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn center_crops_non_square_sources() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wide.png");
        RgbImage::from_fn(200, 100, |_, _| image::Rgb([10, 20, 30])).save(&path).unwrap();
        assert_eq!(load_image(&path, 32, 32).unwrap().shape(), (3, 32, 32));
    }

    #[test]
    fn unreadable_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("garbage.png");
        std::fs::write(&path, b"not an image").unwrap();
        let err = load_image(&path, 8, 8).unwrap_err();
        assert!(matches!(err, Error::Ingestion { .. }));
        assert!(err.to_string().contains("garbage.png"));
        assert!(load_image(&dir.path().join("missing.png"), 8, 8).is_err());
    }

    #[test]
    fn png_round_trip_is_within_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.png");
        let im = Image::new(3, 4, 4, (0..48).map(|i| i as f32 / 24.0 - 1.0).collect()).unwrap();
        im.save_png(&path).unwrap();
        let back = load_image(&path, 4, 4).unwrap();
        for (a, b) in im.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 127.5);
        }
    }
}
