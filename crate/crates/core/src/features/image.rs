//! Single-channel intensity raster in `[0, 1]` plus PNG/PGM loading.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, Luma};

use super::FeaturesError;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, FeaturesError> {
        if width * height != data.len() {
            return Err(FeaturesError::InvalidImage(format!(
                "{}x{} does not match buffer of {} samples",
                width,
                height,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(FeaturesError::InvalidImage(
                "intensities must be finite and within [0, 1]".into(),
            ));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample with coordinates clamped to the image border.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> f32 {
        let xc = x.clamp(0.0, (self.width - 1) as f32);
        let yc = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f32;
        let fy = yc - y0 as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Loads an 8-bit PNG or PGM file. Color inputs are converted with the
    /// 0.299/0.587/0.114 luma weights.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeaturesError> {
        let dynamic = image::open(path.as_ref())?;
        Ok(Self::from_dynamic(&dynamic))
    }

    pub fn from_dynamic(dynamic: &DynamicImage) -> Self {
        let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
        let data = match dynamic {
            DynamicImage::ImageLuma8(g) => g.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
            DynamicImage::ImageLuma16(g) => {
                g.as_raw().iter().map(|&v| v as f32 / 65535.0).collect()
            }
            other => {
                let rgb = other.to_rgb8();
                rgb.pixels()
                    .map(|p| {
                        (0.299 * p.0[0] as f32 + 0.587 * p.0[1] as f32 + 0.114 * p.0[2] as f32)
                            / 255.0
                    })
                    .collect()
            }
        };
        Image {
            width: w,
            height: h,
            data,
        }
    }

    pub fn to_gray8(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize);
            Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), FeaturesError> {
        self.to_gray8()
            .save_with_format(path.as_ref(), ImageFormat::Png)?;
        Ok(())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), FeaturesError> {
        self.to_gray8()
            .save_with_format(path.as_ref(), ImageFormat::Pnm)?;
        Ok(())
    }
}
