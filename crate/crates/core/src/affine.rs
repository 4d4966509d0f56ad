//! Rotation, scale and translation of fish assets.
//!
//! The transform is `T(t) * S(s) * R(alpha)` acting on column vectors, so a
//! point is rotated first, then scaled, then translated.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::config::GenConfig;
use crate::error::{Error, Result};
use crate::raster::{FishAsset, RasterImage};
use crate::rng::Rng;
use crate::sample::bilinear_rgba;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    /// Rotation in radians.
    pub rotation: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    /// Background position of the asset centre.
    pub tx: f64,
    pub ty: f64,
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            scale_x: 1.0,
            scale_y: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }
}

/// Row-major 2x3 matrix `[a b c; d e f]` mapping `(x, y)` to
/// `(a x + b y + c, d x + e y + f)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMatrix(pub [[f64; 3]; 2]);

impl AffineMatrix {
    pub const IDENTITY: AffineMatrix = AffineMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineMatrix([[1.0, 0.0, tx], [0.0, 1.0, ty]])
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// `self * other`: apply `other` first.
    pub fn then_after(&self, other: &AffineMatrix) -> AffineMatrix {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            out[r][2] += a[r][2];
        }
        AffineMatrix(out)
    }

    pub fn inverse(&self) -> Result<AffineMatrix> {
        let det = self.determinant();
        if !(det.abs() >= 1e-12) {
            return Err(Error::SingularMatrix(det));
        }
        let m = &self.0;
        let (a, b, c, d, e, f) = (m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]);
        let ia = e / det;
        let ib = -b / det;
        let id = -d / det;
        let ie = a / det;
        Ok(AffineMatrix([
            [ia, ib, -(ia * c + ib * f)],
            [id, ie, -(id * c + ie * f)],
        ]))
    }
}

/// Builds `T(tx, ty) * S(sx, sy) * R(rotation)`.
pub fn compose_affine(p: &AffineParams) -> Result<AffineMatrix> {
    if !(p.scale_x > 0.0 && p.scale_y > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale factors must be positive, got ({}, {})",
            p.scale_x, p.scale_y
        )));
    }
    let (sin, cos) = p.rotation.sin_cos();
    Ok(AffineMatrix([
        [p.scale_x * cos, -p.scale_x * sin, p.tx],
        [p.scale_y * sin, p.scale_y * cos, p.ty],
    ]))
}

/// Backward-maps every output pixel through `m^-1` and samples the asset
/// bilinearly on all four channels.
pub fn apply_affine(asset: &FishAsset, m: &AffineMatrix, out_dims: (u32, u32)) -> Result<FishAsset> {
    let (ow, oh) = out_dims;
    if ow == 0 || oh == 0 {
        return Err(Error::InvalidArgument(format!(
            "output dimensions must be positive, got {ow}x{oh}"
        )));
    }
    let inv = m.inverse()?;
    let src = asset.image();
    let mut data = vec![0u8; ow as usize * oh as usize * 4];
    for (v, row) in data.chunks_exact_mut(ow as usize * 4).enumerate() {
        for (u, px) in row.chunks_exact_mut(4).enumerate() {
            let (x, y) = inv.apply(u as f64, v as f64);
            px.copy_from_slice(&bilinear_rgba(src, x, y));
        }
    }
    let img = RasterImage::new(ow, oh, 4, data)?;
    Ok(FishAsset::from_rgba_unchecked(img))
}

/// Asset-local centre, in pixel-centre coordinates.
fn asset_centre(dims: (u32, u32)) -> (f64, f64) {
    ((dims.0 as f64 - 1.0) / 2.0, (dims.1 as f64 - 1.0) / 2.0)
}

/// Full asset-pixel to background-pixel map for a placement: the asset is
/// centred on the origin, then `T * S * R` is applied.
pub fn placement_matrix(p: &AffineParams, asset_dims: (u32, u32)) -> Result<AffineMatrix> {
    let (cx, cy) = asset_centre(asset_dims);
    Ok(compose_affine(p)?.then_after(&AffineMatrix::translation(-cx, -cy)))
}

/// An affine-warped asset rendered into the tight canvas that contains it.
#[derive(Clone, Debug)]
pub struct PlacedAsset {
    pub asset: FishAsset,
    /// Background position of the canvas' top-left pixel.
    pub origin: (i64, i64),
}

/// Renders the asset under `p` into a canvas just large enough to hold it.
/// `origin` says where that canvas sits on the background.
pub fn render_placement(asset: &FishAsset, p: &AffineParams) -> Result<PlacedAsset> {
    let m = placement_matrix(p, asset.dims())?;
    let (w, h) = (asset.width() as f64, asset.height() as f64);
    let corners = [(-0.5, -0.5), (w - 0.5, -0.5), (-0.5, h - 0.5), (w - 0.5, h - 0.5)];
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (cx, cy) in corners {
        let (x, y) = m.apply(cx, cy);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let ox = x0.floor() as i64;
    let oy = y0.floor() as i64;
    let ow = (x1.ceil() as i64 - ox + 1).max(1) as u32;
    let oh = (y1.ceil() as i64 - oy + 1).max(1) as u32;
    let local = AffineMatrix::translation(-(ox as f64), -(oy as f64)).then_after(&m);
    Ok(PlacedAsset {
        asset: apply_affine(asset, &local, (ow, oh))?,
        origin: (ox, oy),
    })
}

/// Fraction of the asset's opaque pixel centres that `m` maps inside a
/// `bg_dims` frame.
pub fn mapped_visibility(opaque: &[(f64, f64)], m: &AffineMatrix, bg_dims: (u32, u32)) -> f64 {
    if opaque.is_empty() {
        return 0.0;
    }
    let (w, h) = (bg_dims.0 as f64, bg_dims.1 as f64);
    let inside = opaque
        .iter()
        .filter(|&&(x, y)| {
            let (bx, by) = m.apply(x, y);
            bx >= -0.5 && by >= -0.5 && bx < w - 0.5 && by < h - 0.5
        })
        .count();
    inside as f64 / opaque.len() as f64
}

pub(crate) fn opaque_centres(asset: &FishAsset) -> Vec<(f64, f64)> {
    let (w, h) = asset.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if asset.alpha(x, y) > 0 {
                out.push((x as f64, y as f64));
            }
        }
    }
    out
}

/// Draws rotation, size and a placement that keeps at least
/// `cfg.min_visibility` of the asset's opaque pixels in frame.
///
/// Rotation is uniform on [0, 2pi). The ratio of the scaled asset's largest
/// side to the background's largest side is uniform on `cfg.size_ratio`,
/// with equal scale on both axes. The centre is drawn uniformly over every
/// position where the asset can touch the frame and rejected until the
/// visibility rule holds.
pub fn sample_affine_params(
    cfg: &GenConfig,
    bg_dims: (u32, u32),
    asset: &FishAsset,
    rng: &mut Rng,
) -> Result<AffineParams> {
    let (lo, hi) = cfg.size_ratio;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Config(format!(
            "size ratio interval [{lo}, {hi}] must satisfy 0 < lo <= hi"
        )));
    }
    let rotation = rng.uniform(0.0, TAU)?;
    let ratio = rng.uniform(lo, hi)?;
    let bg_max = bg_dims.0.max(bg_dims.1) as f64;
    let asset_max = asset.width().max(asset.height()) as f64;
    let scale = ratio * bg_max / asset_max;

    // Half extents of the rotated, scaled asset rectangle.
    let (sin, cos) = rotation.sin_cos();
    let (w, h) = (asset.width() as f64 * scale, asset.height() as f64 * scale);
    let ex = 0.5 * (w * cos.abs() + h * sin.abs());
    let ey = 0.5 * (w * sin.abs() + h * cos.abs());

    let opaque = opaque_centres(asset);
    for _ in 0..cfg.max_placement_tries {
        let p = AffineParams {
            rotation,
            scale_x: scale,
            scale_y: scale,
            tx: rng.uniform(-ex, bg_dims.0 as f64 + ex)?,
            ty: rng.uniform(-ey, bg_dims.1 as f64 + ey)?,
        };
        let m = placement_matrix(&p, asset.dims())?;
        if mapped_visibility(&opaque, &m, bg_dims) >= cfg.min_visibility {
            return Ok(p);
        }
    }
    Err(Error::PlacementFailed(cfg.max_placement_tries))
}
