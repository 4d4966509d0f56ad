//! Pixel containers shared by every stage of the pipeline.
//!
//! All buffers are row-major with 8-bit samples, except [`SoftMask`] which
//! keeps the raw 16-bit probability codes it was decoded from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An H×W grid of RGB or RGBA pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 3 && channels != 4 {
            return Err(Error::InvalidRaster(format!(
                "expected 3 or 4 channels, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// A canvas filled with one colour. `fill.len()` sets the channel count.
    pub fn filled(width: u32, height: u32, fill: &[u8]) -> Result<Self> {
        let data = fill
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * fill.len())
            .collect();
        Self::new(width, height, fill.len() as u8, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
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

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &mut self.data[i..i + c]
    }

    /// Drops the alpha channel if present.
    pub fn to_rgb(&self) -> RasterImage {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(4)
            .flat_map(|px| [px[0], px[1], px[2]])
            .collect();
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }
}

/// An RGBA cut-out. The alpha channel is the asset's segmentation label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FishAsset {
    image: RasterImage,
}

impl FishAsset {
    pub fn new(image: RasterImage) -> Result<Self> {
        if image.channels() != 4 {
            return Err(Error::InvalidRaster(format!(
                "fish asset must be RGBA, got {} channels",
                image.channels()
            )));
        }
        if !image.data().chunks_exact(4).any(|px| px[3] > 0) {
            return Err(Error::TransparentAsset);
        }
        Ok(Self { image })
    }

    /// Wraps an RGBA raster that may be fully transparent. Intermediate
    /// results of warps are allowed to be empty; only pool entries are not.
    pub(crate) fn from_rgba_unchecked(image: RasterImage) -> Self {
        debug_assert_eq!(image.channels(), 4);
        Self { image }
    }

    pub fn image(&self) -> &RasterImage {
        &self.image
    }

    pub fn into_image(self) -> RasterImage {
        self.image
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn dims(&self) -> (u32, u32) {
        self.image.dims()
    }

    #[inline]
    pub fn alpha(&self, x: u32, y: u32) -> u8 {
        self.image.pixel(x, y)[3]
    }

    pub fn opaque_count(&self) -> usize {
        self.image
            .data()
            .chunks_exact(4)
            .filter(|px| px[3] > 0)
            .count()
    }

    pub fn alpha_mass(&self) -> u64 {
        self.image
            .data()
            .chunks_exact(4)
            .map(|px| px[3] as u64)
            .sum()
    }

    /// Bounding box of alpha > 0 pixels, `None` when fully transparent.
    pub fn alpha_bbox(&self) -> Option<Rect> {
        let (w, h) = self.dims();
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        for y in 0..h {
            for x in 0..w {
                if self.alpha(x, y) > 0 {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != u32::MAX).then(|| Rect {
            x: x0,
            y: y0,
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
        })
    }
}

/// A binary segmentation mask; every sample is 0 or 255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidRaster(format!(
                "mask data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v != 0 && v != 255) {
            return Err(Error::InvalidRaster(format!(
                "binary mask sample {v} is neither 0 nor 255"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    /// Builds a mask from a predicate over pixel indices.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(if f(x, y) { 255 } else { 0 });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.data[y as usize * self.width as usize + x as usize] = if on { 255 } else { 0 };
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        check_dims(self.dims(), other.dims())?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a | b)
            .collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data,
        })
    }
}

/// Scale of the 16-bit probability codes.
pub const SOFT_SCALE: f64 = 65535.0;

/// Per-pixel foreground probability, stored as `code / 65535`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SoftMask {
    width: u32,
    height: u32,
    codes: Vec<u16>,
}

impl SoftMask {
    pub fn from_codes(width: u32, height: u32, codes: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if codes.len() != width as usize * height as usize {
            return Err(Error::InvalidRaster(format!(
                "soft mask length {} does not match {width}x{height}",
                codes.len()
            )));
        }
        Ok(Self {
            width,
            height,
            codes,
        })
    }

    /// Quantizes probabilities to the 16-bit grid. Values outside [0,1] are
    /// rejected.
    pub fn from_probabilities(width: u32, height: u32, probs: &[f64]) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidRaster(format!(
                "probability {p} outside [0,1]"
            )));
        }
        let codes = probs
            .iter()
            .map(|p| (p * SOFT_SCALE).round() as u16)
            .collect();
        Self::from_codes(width, height, codes)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    #[inline]
    pub fn probability(&self, index: usize) -> f64 {
        self.codes[index] as f64 / SOFT_SCALE
    }

    pub fn max_probability(&self) -> f64 {
        self.codes.iter().copied().max().unwrap_or(0) as f64 / SOFT_SCALE
    }

    /// `probability(index) >= threshold`, evaluated on the integer code grid
    /// so that thresholds such as 0.8 compare exactly against the code
    /// `0.8 * 65535`.
    #[inline]
    pub fn at_least(&self, index: usize, threshold: f64) -> bool {
        code_at_least(self.codes[index], threshold)
    }
}

#[inline]
pub(crate) fn code_at_least(code: u16, threshold: f64) -> bool {
    code as f64 >= threshold * SOFT_SCALE - 1e-6
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.width > 0
            && self.height > 0
            && self.x as u64 + self.width as u64 <= width as u64
            && self.y as u64 + self.height as u64 <= height as u64
    }
}

pub(crate) fn check_dims(a: (u32, u32), b: (u32, u32)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        });
    }
    Ok(())
}
