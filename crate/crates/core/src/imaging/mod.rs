//! Image container, file I/O and the pre-processing transforms.

mod enhance;
mod pipeline;
mod resize;
mod standardize;

pub use enhance::{detail_enhance, hist_equalize, roi_select, Equalized, DEFAULT_DETAIL_K};
pub use pipeline::{Pipeline, Variant};
pub use resize::resize;
pub(crate) use resize::source_coord;
pub use standardize::{apply_standardizer, fit_standardizer, invert_standardizer, StandardizerStats};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of intensity levels of an 8-bit image.
pub const LEVELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorSpace {
    Gray,
    Rgb,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb => 3,
        }
    }
}

/// Row-major interleaved 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    colorspace: ColorSpace,
    data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, colorspace: ColorSpace, data: Vec<u8>) -> Result<Self> {
        let expected = height * width * colorspace.channels();
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "image {height}x{width}x{} needs {expected} bytes, got {}",
                colorspace.channels(),
                data.len()
            )));
        }
        Ok(Self { height, width, colorspace, data })
    }

    pub fn filled(height: usize, width: usize, colorspace: ColorSpace, value: u8) -> Self {
        Self { height, width, colorspace, data: vec![value; height * width * colorspace.channels()] }
    }

    pub fn gray(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(height, width, ColorSpace::Gray, data)
    }

    pub fn rgb(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(height, width, ColorSpace::Rgb, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.colorspace.channels()
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: u8) {
        let ch = self.channels();
        self.data[(y * self.width + x) * ch + c] = v;
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[u8] {
        let ch = self.channels();
        let i = (y * self.width + x) * ch;
        &self.data[i..i + ch]
    }

    /// Per-pixel luminance (0.299R + 0.587G + 0.114B; identity for gray).
    pub fn luminance(&self) -> Vec<f64> {
        match self.colorspace {
            ColorSpace::Gray => self.data.iter().map(|&v| v as f64).collect(),
            ColorSpace::Rgb => self.data.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect(),
        }
    }

    pub fn to_rgb(&self) -> Image {
        match self.colorspace {
            ColorSpace::Rgb => self.clone(),
            ColorSpace::Gray => {
                let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
                Image { height: self.height, width: self.width, colorspace: ColorSpace::Rgb, data }
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let dynamic = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
        Ok(Self::from_dynamic(dynamic))
    }

    pub fn from_dynamic(dynamic: image::DynamicImage) -> Image {
        use image::DynamicImage;
        match dynamic {
            DynamicImage::ImageLuma8(buf) => {
                let (w, h) = buf.dimensions();
                Image { height: h as usize, width: w as usize, colorspace: ColorSpace::Gray, data: buf.into_raw() }
            }
            other => {
                let buf = other.to_rgb8();
                let (w, h) = buf.dimensions();
                Image { height: h as usize, width: w as usize, colorspace: ColorSpace::Rgb, data: buf.into_raw() }
            }
        }
    }

    /// Writes PNG or JPEG depending on the file extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = match self.colorspace {
            ColorSpace::Gray => image::ExtendedColorType::L8,
            ColorSpace::Rgb => image::ExtendedColorType::Rgb8,
        };
        image::save_buffer(path, &self.data, self.width as u32, self.height as u32, color)
            .map_err(|source| Error::Image { path: path.to_path_buf(), source })
    }
}

#[inline]
pub(crate) fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Rounds half-to-even and clamps to the 8-bit range.
#[inline]
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round_ties_even().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(Image::gray(2, 2, vec![0; 3]).is_err());
        assert!(Image::rgb(1, 1, vec![0; 3]).is_ok());
    }

    #[test]
    fn quantize_rounds_half_even() {
        assert_eq!(quantize(127.5), 128);
        assert_eq!(quantize(128.5), 128);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(344.0), 255);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::rgb(2, 3, (0..18).map(|v| v * 10).collect()).unwrap();
        let path = dir.path().join("x.png");
        img.save(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap(), img);
    }
}
