//! Alpha compositing of fish onto a background and label accumulation.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, FishAsset, RasterImage};

/// Alpha above which a pasted pixel counts as foreground in the mask.
pub const DEFAULT_ALPHA_CUTOFF: u8 = 127;

/// An RGB image with its semantic mask and per-pixel instance ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    image: RasterImage,
    mask: BinaryMask,
    instances: Vec<u16>,
    count: u16,
}

impl Canvas {
    /// Starts from `background` with an empty mask.
    pub fn new(background: &RasterImage) -> Self {
        let image = background.to_rgb();
        let (w, h) = image.dims();
        Self {
            image,
            mask: BinaryMask::empty(w, h),
            instances: vec![0; w as usize * h as usize],
            count: 0,
        }
    }

    /// Starts from `image` with an existing mask, e.g. a pseudo-label.
    pub fn with_mask(image: &RasterImage, mask: BinaryMask) -> Result<Self> {
        crate::raster::check_dims(image.dims(), mask.dims())?;
        let mut c = Self::new(image);
        c.mask = mask;
        Ok(c)
    }

    pub fn image(&self) -> &RasterImage {
        &self.image
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    /// Instance id per pixel: 0 for none, otherwise the 1-based paste index
    /// of the last fish covering it.
    pub fn instances(&self) -> &[u16] {
        &self.instances
    }

    pub fn instance_count(&self) -> u16 {
        self.count
    }

    pub fn dims(&self) -> (u32, u32) {
        self.image.dims()
    }

    pub fn into_parts(self) -> (RasterImage, BinaryMask, Vec<u16>) {
        (self.image, self.mask, self.instances)
    }

    /// "Over" blends `asset` with its top-left pixel at `origin` and ORs its
    /// footprint (alpha > `alpha_cutoff`) into the mask.
    pub fn paste(&mut self, asset: &FishAsset, origin: (i64, i64), alpha_cutoff: u8) -> Result<()> {
        let (cw, ch) = (self.image.width() as i64, self.image.height() as i64);
        let (aw, ah) = (asset.width() as i64, asset.height() as i64);
        let x0 = origin.0.max(0);
        let y0 = origin.1.max(0);
        let x1 = (origin.0 + aw).min(cw);
        let y1 = (origin.1 + ah).min(ch);
        let overlaps = x0 < x1
            && y0 < y1
            && (y0..y1).any(|y| {
                (x0..x1).any(|x| asset.alpha((x - origin.0) as u32, (y - origin.1) as u32) > 0)
            });
        if !overlaps {
            return Err(Error::NoOverlap);
        }
        let id = self.count.saturating_add(1);
        let w = self.image.width() as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let src = asset.image().pixel((x - origin.0) as u32, (y - origin.1) as u32);
                let a = src[3];
                if a == 0 {
                    continue;
                }
                let dst = self.image.pixel_mut(x as u32, y as u32);
                if a == 255 {
                    dst.copy_from_slice(&src[..3]);
                } else {
                    let af = a as f64 / 255.0;
                    for c in 0..3 {
                        let v = af * src[c] as f64 + (1.0 - af) * dst[c] as f64;
                        dst[c] = v.round().clamp(0.0, 255.0) as u8;
                    }
                }
                if a > alpha_cutoff {
                    self.mask.set(x as u32, y as u32, true);
                    self.instances[y as usize * w + x as usize] = id;
                }
            }
        }
        self.count = id;
        Ok(())
    }
}

/// Free-function form of [`Canvas::paste`].
pub fn paste(canvas: &mut Canvas, asset: &FishAsset, origin: (i64, i64), alpha_cutoff: u8) -> Result<()> {
    canvas.paste(asset, origin, alpha_cutoff)
}

/// Fraction of the asset's alpha > 0 pixels that land inside a canvas of
/// `canvas_dims` when the asset's top-left is at `origin`.
pub fn visibility_fraction(asset: &FishAsset, origin: (i64, i64), canvas_dims: (u32, u32)) -> f64 {
    let (cw, ch) = (canvas_dims.0 as i64, canvas_dims.1 as i64);
    let (mut total, mut inside) = (0u64, 0u64);
    for y in 0..asset.height() {
        for x in 0..asset.width() {
            if asset.alpha(x, y) == 0 {
                continue;
            }
            total += 1;
            let bx = origin.0 + x as i64;
            let by = origin.1 + y as i64;
            if bx >= 0 && by >= 0 && bx < cw && by < ch {
                inside += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        inside as f64 / total as f64
    }
}

/// Footprint of `asset` at `origin` on a `dims` canvas: alpha > cutoff.
pub fn footprint(asset: &FishAsset, origin: (i64, i64), dims: (u32, u32), alpha_cutoff: u8) -> BinaryMask {
    BinaryMask::from_fn(dims.0, dims.1, |x, y| {
        let ax = x as i64 - origin.0;
        let ay = y as i64 - origin.1;
        ax >= 0
            && ay >= 0
            && ax < asset.width() as i64
            && ay < asset.height() as i64
            && asset.alpha(ax as u32, ay as u32) > alpha_cutoff
    })
}
