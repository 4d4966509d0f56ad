//! Thin plate spline warps.
//!
//! A warp is defined by control points `(x_i, y_i)` and target positions
//! `(x_i + dx_i, y_i + dy_i)`. For each output axis the interpolant is
//!
//! ```text
//! f(x, y) = a1 + ax*x + ay*y + sum_i w_i * U(|(x_i, y_i) - (x, y)|),   U(r) = r^2 ln r
//! ```
//!
//! with coefficients from the `(N+3)x(N+3)` system `[K P; P^T 0] [w; a] = [t; 0]`.
//! Images are warped by backward mapping: output pixel `p` reads the source
//! at `f(p)`.

use serde::{Deserialize, Serialize};

use crate::config::GenConfig;
use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::raster::{FishAsset, RasterImage};
use crate::rng::Rng;
use crate::sample::bilinear_rgba;

/// Systems whose reciprocal condition number falls below this are rejected.
pub const MIN_RCOND: f64 = 1e-10;

/// Resample attempts in [`sample_tps`] before giving up.
pub const MAX_TPS_RESAMPLES: u32 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPointSet {
    pub points: Vec<[f64; 2]>,
    pub displacements: Vec<[f64; 2]>,
}

impl ControlPointSet {
    pub fn new(points: Vec<[f64; 2]>, displacements: Vec<[f64; 2]>) -> Result<Self> {
        let cps = Self {
            points,
            displacements,
        };
        cps.validate()?;
        Ok(cps)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.displacements.len() {
            return Err(Error::InvalidArgument(format!(
                "{} control points but {} displacements",
                self.points.len(),
                self.displacements.len()
            )));
        }
        if self.points.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "thin plate spline needs at least 3 control points, got {}",
                self.points.len()
            )));
        }
        for (i, a) in self.points.iter().enumerate() {
            if self.points[..i].contains(a) {
                return Err(Error::InvalidArgument(format!("duplicate control point {a:?}")));
            }
        }
        Ok(())
    }

    pub fn targets(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.points
            .iter()
            .zip(&self.displacements)
            .map(|(p, d)| [p[0] + d[0], p[1] + d[1]])
    }

    pub fn max_displacement(&self) -> f64 {
        self.displacements
            .iter()
            .map(|d| d[0].hypot(d[1]))
            .fold(0.0, f64::max)
    }
}

/// A solved spline: kernel weights and affine part for each output axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpsWarp {
    pub points: Vec<[f64; 2]>,
    pub weights_x: Vec<f64>,
    pub weights_y: Vec<f64>,
    /// `(a1, ax, ay)` for the x output.
    pub affine_x: [f64; 3],
    /// `(a1, ax, ay)` for the y output.
    pub affine_y: [f64; 3],
    pub rcond: f64,
}

/// `U(r) = r^2 ln r`, with `U(0) = 0`.
pub fn tps_kernel(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("kernel distance {r} is negative")));
    }
    Ok(kernel_sq(r * r))
}

/// `U` expressed in the squared distance: `r^2 ln r = 0.5 r^2 ln r^2`.
#[inline]
fn kernel_sq(r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

/// Solves the interpolation system for both axes.
///
/// The system is built and solved in centred coordinates scaled to unit
/// radius, where its condition number reflects the point geometry rather
/// than the pixel scale; `rcond` is measured there. The coefficients are
/// then mapped back to pixel coordinates. With `p' = (p - c) / s`,
/// `U(r / s) = (U(r) - r^2 ln s) / s^2`, and under the side conditions
/// `sum_i w_i r_i^2` reduces to the constant `s^2 sum_i w_i |p'_i|^2`.
pub fn solve_tps(cps: &ControlPointSet) -> Result<TpsWarp> {
    cps.validate()?;
    let n = cps.len();
    let c = [
        cps.points.iter().map(|p| p[0]).sum::<f64>() / n as f64,
        cps.points.iter().map(|p| p[1]).sum::<f64>() / n as f64,
    ];
    let s = cps
        .points
        .iter()
        .map(|p| (p[0] - c[0]).hypot(p[1] - c[1]))
        .fold(0.0, f64::max);
    let q: Vec<[f64; 2]> = cps.points.iter().map(|p| [(p[0] - c[0]) / s, (p[1] - c[1]) / s]).collect();

    let mut l = Matrix::zeros(n + 3);
    for (i, pi) in q.iter().enumerate() {
        for (j, pj) in q.iter().enumerate() {
            let dx = pi[0] - pj[0];
            let dy = pi[1] - pj[1];
            l.set(i, j, kernel_sq(dx * dx + dy * dy));
        }
        for (k, v) in [1.0, pi[0], pi[1]].into_iter().enumerate() {
            l.set(i, n + k, v);
            l.set(n + k, i, v);
        }
    }
    let lu = Lu::factor(&l)?;
    let rcond = lu.rcond();
    if !(rcond >= MIN_RCOND) {
        return Err(Error::IllConditioned(rcond));
    }
    let mut rhs_x = vec![0.0; n + 3];
    let mut rhs_y = vec![0.0; n + 3];
    for (i, t) in cps.targets().enumerate() {
        rhs_x[i] = t[0];
        rhs_y[i] = t[1];
    }
    let to_pixels = |sol: Vec<f64>| -> (Vec<f64>, [f64; 3]) {
        let w = &sol[..n];
        let [a1, ax, ay] = [sol[n], sol[n + 1], sol[n + 2]];
        let spread: f64 = w.iter().zip(&q).map(|(wi, p)| wi * (p[0] * p[0] + p[1] * p[1])).sum();
        let weights = w.iter().map(|wi| wi / (s * s)).collect();
        let affine = [a1 - (ax * c[0] + ay * c[1]) / s - s.ln() * spread, ax / s, ay / s];
        (weights, affine)
    };
    let (weights_x, affine_x) = to_pixels(lu.solve_refined(&l, &rhs_x));
    let (weights_y, affine_y) = to_pixels(lu.solve_refined(&l, &rhs_y));
    Ok(TpsWarp {
        points: cps.points.clone(),
        weights_x,
        weights_y,
        affine_x,
        affine_y,
        rcond,
    })
}

/// Evaluates the warp at `p`.
pub fn eval_tps(warp: &TpsWarp, p: [f64; 2]) -> [f64; 2] {
    let [x, y] = p;
    let mut fx = warp.affine_x[0] + warp.affine_x[1] * x + warp.affine_x[2] * y;
    let mut fy = warp.affine_y[0] + warp.affine_y[1] * x + warp.affine_y[2] * y;
    for (i, c) in warp.points.iter().enumerate() {
        let dx = c[0] - x;
        let dy = c[1] - y;
        let u = kernel_sq(dx * dx + dy * dy);
        fx += warp.weights_x[i] * u;
        fy += warp.weights_y[i] * u;
    }
    [fx, fy]
}

/// Pixels of transparent margin added on every side by [`warp_asset`].
pub fn tps_padding(cps: &ControlPointSet) -> u32 {
    cps.max_displacement().ceil() as u32
}

/// Warps colour and alpha through the same backward mapping. The output is
/// the input canvas grown by [`tps_padding`] on each side; output pixel
/// `(u, v)` reads the source at `f(u - pad, v - pad)`.
pub fn warp_asset(asset: &FishAsset, cps: &ControlPointSet) -> Result<FishAsset> {
    let warp = solve_tps(cps)?;
    let pad = tps_padding(cps);
    let (w, h) = (asset.width() + 2 * pad, asset.height() + 2 * pad);
    let src = asset.image();
    let mut data = vec![0u8; w as usize * h as usize * 4];
    for (v, row) in data.chunks_exact_mut(w as usize * 4).enumerate() {
        let y = v as f64 - pad as f64;
        for (u, px) in row.chunks_exact_mut(4).enumerate() {
            let x = u as f64 - pad as f64;
            let [sx, sy] = eval_tps(&warp, [x, y]);
            px.copy_from_slice(&bilinear_rgba(src, sx, sy));
        }
    }
    Ok(FishAsset::from_rgba_unchecked(RasterImage::new(w, h, 4, data)?))
}

/// Draws `cfg.tps_points` control points uniformly over the asset's opaque
/// bounding box, with displacements uniform in `[-f W, f W] x [-f H, f H]`,
/// `f = cfg.tps_fraction`. Draws again while the system is ill-conditioned.
pub fn sample_tps(asset: &FishAsset, cfg: &GenConfig, rng: &mut Rng) -> Result<ControlPointSet> {
    if cfg.tps_points < 3 {
        return Err(Error::Config(format!("tps_points must be >= 3, got {}", cfg.tps_points)));
    }
    let f = cfg.tps_fraction;
    if !(f > 0.0 && f <= 0.5) {
        return Err(Error::Config(format!("tps_fraction must be in (0, 0.5], got {f}")));
    }
    let bbox = asset.alpha_bbox().ok_or(Error::TransparentAsset)?;
    let (x0, x1) = (bbox.x as f64, (bbox.x + bbox.width - 1) as f64);
    let (y0, y1) = (bbox.y as f64, (bbox.y + bbox.height - 1) as f64);
    let dx = f * asset.width() as f64;
    let dy = f * asset.height() as f64;

    let mut last = Error::IllConditioned(0.0);
    for _ in 0..MAX_TPS_RESAMPLES {
        let mut points = Vec::with_capacity(cfg.tps_points);
        let mut displacements = Vec::with_capacity(cfg.tps_points);
        for _ in 0..cfg.tps_points {
            points.push([rng.uniform(x0, x1)?, rng.uniform(y0, y1)?]);
            displacements.push([rng.uniform(-dx, dx)?, rng.uniform(-dy, dy)?]);
        }
        let cps = ControlPointSet {
            points,
            displacements,
        };
        match cps.validate().and_then(|_| solve_tps(&cps)) {
            Ok(_) => return Ok(cps),
            Err(e) => last = e,
        }
    }
    Err(last)
}
