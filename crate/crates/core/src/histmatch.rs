//! Per-channel histogram matching and reference pixel selection.
//!
//! Each opaque asset value `v` is replaced by `G^-1(H(v))`, where `H` is the
//! asset's own CDF over opaque pixels and `G` the reference CDF.
//! `G^-1(q)` finds the first level `k` with `G[k] >= q` and interpolates
//! linearly between levels `k-1` and `k`, so that a level whose CDF step
//! begins exactly at `q` maps to itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{check_dims, FishAsset, RasterImage, Rect, SoftMask};
use crate::rng::Rng;

/// Where a reference population was drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceRegion {
    /// Background rectangle under a placed fish.
    BackgroundPatch(Rect),
    /// Pixels whose soft probability reached the confidence threshold.
    ConfidentPositives { qualifying: u64, threshold: f64 },
    /// Caller-supplied pixels.
    Explicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelSample {
    pub pixels: Vec<[u8; 3]>,
    pub region: ReferenceRegion,
    pub fraction: f64,
}

/// 256-bin counts and CDFs for R, G and B.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramSpec {
    counts: [[u64; 256]; 3],
    cdf: [[f64; 256]; 3],
    total: u64,
}

impl HistogramSpec {
    pub fn from_counts(counts: [[u64; 256]; 3]) -> Result<Self> {
        let totals: Vec<u64> = counts.iter().map(|c| c.iter().sum()).collect();
        if totals[0] == 0 {
            return Err(Error::Empty("histogram has no pixels".into()));
        }
        if totals.iter().any(|&t| t != totals[0]) {
            return Err(Error::InvalidArgument("channel totals differ".into()));
        }
        let total = totals[0];
        let mut cdf = [[0.0; 256]; 3];
        for ch in 0..3 {
            let mut run = 0u64;
            for k in 0..256 {
                run += counts[ch][k];
                cdf[ch][k] = run as f64 / total as f64;
            }
        }
        Ok(Self { counts, cdf, total })
    }

    pub fn counts(&self) -> &[[u64; 256]; 3] {
        &self.counts
    }

    pub fn cdf(&self, channel: usize) -> &[f64; 256] {
        &self.cdf[channel]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Level at quantile `q` of `channel`, before rounding.
    pub fn quantile(&self, channel: usize, q: f64) -> f64 {
        let g = &self.cdf[channel];
        let k = g.partition_point(|&v| v < q).min(255);
        let below = if k == 0 { 0.0 } else { g[k - 1] };
        let step = g[k] - below;
        if step <= 0.0 {
            return k as f64;
        }
        let t = ((q - below) / step).clamp(0.0, 1.0);
        (k as f64 - 1.0) + t
    }

    /// Sparse `(level, count)` lists per channel, used in manifests.
    pub fn to_sparse(&self) -> [Vec<(u8, u64)>; 3] {
        self.counts.map(|c| {
            c.iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(k, &n)| (k as u8, n))
                .collect()
        })
    }

    pub fn from_sparse(sparse: &[Vec<(u8, u64)>; 3]) -> Result<Self> {
        let mut counts = [[0u64; 256]; 3];
        for (ch, entries) in sparse.iter().enumerate() {
            for &(k, n) in entries {
                counts[ch][k as usize] += n;
            }
        }
        Self::from_counts(counts)
    }
}

/// Histogram of an explicit pixel population.
pub fn compute_histogram(sample: &PixelSample) -> Result<HistogramSpec> {
    histogram_of(sample.pixels.iter().copied())
}

/// Histogram over the pixels of `image` inside `rect` (all pixels when
/// `None`) whose alpha is nonzero, if the image has alpha.
pub fn compute_region_histogram(image: &RasterImage, rect: Option<Rect>) -> Result<HistogramSpec> {
    let rect = rect.unwrap_or(Rect {
        x: 0,
        y: 0,
        width: image.width(),
        height: image.height(),
    });
    if !rect.fits_in(image.width(), image.height()) {
        return Err(Error::InvalidArgument(format!("{rect:?} exceeds the image")));
    }
    let alpha = image.channels() == 4;
    let pixels = (rect.y..rect.y + rect.height).flat_map(move |y| {
        (rect.x..rect.x + rect.width).filter_map(move |x| {
            let px = image.pixel(x, y);
            (!alpha || px[3] > 0).then(|| [px[0], px[1], px[2]])
        })
    });
    histogram_of(pixels)
}

fn histogram_of(pixels: impl Iterator<Item = [u8; 3]>) -> Result<HistogramSpec> {
    let mut counts = [[0u64; 256]; 3];
    for px in pixels {
        for ch in 0..3 {
            counts[ch][px[ch] as usize] += 1;
        }
    }
    HistogramSpec::from_counts(counts)
}

/// Per-channel lookup tables `v -> round(G^-1(H(v)))` for `source`.
pub fn matching_lut(source: &HistogramSpec, reference: &HistogramSpec) -> [[u8; 256]; 3] {
    let mut lut = [[0u8; 256]; 3];
    for ch in 0..3 {
        let h = source.cdf(ch);
        for v in 0..256 {
            let level = reference.quantile(ch, h[v]);
            lut[ch][v] = level.round().clamp(0.0, 255.0) as u8;
        }
    }
    lut
}

/// Remaps the colour of every opaque pixel so each channel's distribution
/// follows `reference`. Alpha is untouched.
pub fn match_histogram(asset: &FishAsset, reference: &HistogramSpec) -> Result<FishAsset> {
    let source = compute_region_histogram(asset.image(), None).map_err(|e| match e {
        Error::Empty(_) => Error::TransparentAsset,
        other => other,
    })?;
    let lut = matching_lut(&source, reference);
    let mut img = asset.image().clone();
    for px in img.data_mut().chunks_exact_mut(4) {
        if px[3] > 0 {
            for ch in 0..3 {
                px[ch] = lut[ch][px[ch] as usize];
            }
        }
    }
    Ok(FishAsset::from_rgba_unchecked(img))
}

fn sample_count(fraction: f64, population: usize) -> usize {
    ((fraction * population as f64 - 1e-9).ceil().max(1.0) as usize).min(population)
}

/// Samples `ceil(frac * area)` distinct pixels from `patch` of `bg`.
pub fn stage1_reference(bg: &RasterImage, patch: Rect, frac: f64, rng: &mut Rng) -> Result<PixelSample> {
    if patch.area() == 0 {
        return Err(Error::Empty("background patch has zero area".into()));
    }
    if !patch.fits_in(bg.width(), bg.height()) {
        return Err(Error::InvalidArgument(format!(
            "patch {patch:?} exceeds {}x{} background",
            bg.width(),
            bg.height()
        )));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidArgument(format!("sample fraction {frac} not in (0, 1]")));
    }
    let area = patch.area() as usize;
    let picks = rng.sample_without_replacement(area, sample_count(frac, area));
    let pixels = picks
        .into_iter()
        .map(|i| {
            let x = patch.x + (i % patch.width as usize) as u32;
            let y = patch.y + (i / patch.width as usize) as u32;
            let px = bg.pixel(x, y);
            [px[0], px[1], px[2]]
        })
        .collect();
    Ok(PixelSample {
        pixels,
        region: ReferenceRegion::BackgroundPatch(patch),
        fraction: frac,
    })
}

/// Pixels with `soft >= conf`. `None` when fewer than `min_frac` of the
/// image qualifies, which means no fish should be placed.
pub fn confident_positives(soft: &SoftMask, conf: f64, min_frac: f64) -> Option<Vec<usize>> {
    let qualifying: Vec<usize> = (0..soft.codes().len())
        .filter(|&i| soft.at_least(i, conf))
        .collect();
    let area = soft.codes().len() as f64;
    let required = (min_frac * area - 1e-9).ceil().max(0.0) as usize;
    (!qualifying.is_empty() && qualifying.len() >= required).then_some(qualifying)
}

/// Samples `ceil(frac * |S|)` of the confident positive pixels `S` of
/// `img`, or `None` when `S` is below `min_frac` of the image.
pub fn stage2_reference(
    img: &RasterImage,
    soft: &SoftMask,
    conf: f64,
    min_frac: f64,
    frac: f64,
    rng: &mut Rng,
) -> Result<Option<PixelSample>> {
    check_dims(img.dims(), soft.dims())?;
    if !(conf > 0.0 && conf < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {conf} not in (0, 1)")));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidArgument(format!("sample fraction {frac} not in (0, 1]")));
    }
    let Some(positives) = confident_positives(soft, conf, min_frac) else {
        return Ok(None);
    };
    Ok(Some(sample_positives(img, &positives, conf, frac, rng)))
}

pub(crate) fn sample_positives(
    img: &RasterImage,
    positives: &[usize],
    conf: f64,
    frac: f64,
    rng: &mut Rng,
) -> PixelSample {
    let w = img.width() as usize;
    let picks = rng.sample_without_replacement(positives.len(), sample_count(frac, positives.len()));
    let pixels = picks
        .into_iter()
        .map(|j| {
            let i = positives[j];
            let px = img.pixel((i % w) as u32, (i / w) as u32);
            [px[0], px[1], px[2]]
        })
        .collect();
    PixelSample {
        pixels,
        region: ReferenceRegion::ConfidentPositives {
            qualifying: positives.len() as u64,
            threshold: conf,
        },
        fraction: frac,
    }
}
