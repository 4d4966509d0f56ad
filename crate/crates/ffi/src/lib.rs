//! C interface to fishforge.
//!
//! Objects cross the boundary as opaque handles created by `ff_*_load` /
//! `ff_*_new` and released with the matching `ff_*_free`. Every fallible call
//! returns an [`FfStatus`]; the message for the most recent failure on the
//! calling thread is available from [`ff_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use fishforge::generator::{DatasetInputs, DatasetOptions};
use fishforge::histmatch::compute_region_histogram;
use fishforge::io;
use fishforge::{
    binarize, dice, eval_tps, generate_dataset, iou, match_histogram, solve_tps, BinaryMask,
    ControlPointSet, Error, FishAsset, FishCountDistribution, GenConfig, RasterImage, SoftMask,
    Stage, TpsWarp,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Decode = 4,
    Io = 5,
    DimensionMismatch = 6,
    IllConditioned = 7,
    Config = 8,
    Generation = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FfPreset {
    Deepfish = 0,
    Deepsalmon = 1,
}

/// Generator settings. Fill with [`ff_gen_config_default`] and override
/// fields as needed. `fish_count_max` > 0 replaces the preset's fish-count
/// table with a uniform draw over 1..=max.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FfGenConfig {
    pub preset: FfPreset,
    pub seed: u64,
    pub size_ratio_min: f64,
    pub size_ratio_max: f64,
    pub tps_points: u32,
    pub tps_fraction: f64,
    pub hm_sample_fraction: f64,
    pub conf_threshold: f64,
    pub min_positive_fraction: f64,
    pub label_threshold: f64,
    pub fish_count_max: u32,
    pub max_placement_tries: u32,
    pub alpha_cutoff: u8,
    pub min_visibility: f64,
}

/// Counts reported by [`ff_generate`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct FfRunStats {
    pub images_written: u64,
    pub fish_placed: u64,
    pub gated: u64,
    pub skipped: u64,
    pub unmatched: u64,
}

/// 8-bit image with 1, 3 or 4 interleaved channels.
pub struct FfImage(RasterImage);

/// Binary mask, one byte per pixel (0 or 255).
pub struct FfMask(BinaryMask);

/// Probability map stored as 16-bit codes.
pub struct FfSoftMask(SoftMask);

/// Solved thin plate spline.
pub struct FfTps(TpsWarp);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> FfStatus {
    match err {
        Error::NotFound(_) => FfStatus::NotFound,
        Error::Decode { .. } | Error::UnsupportedChannels { .. } => FfStatus::Decode,
        Error::Write { .. } | Error::Io { .. } => FfStatus::Io,
        Error::DimensionMismatch { .. } => FfStatus::DimensionMismatch,
        Error::IllConditioned(_) | Error::SingularMatrix(_) => FfStatus::IllConditioned,
        Error::Config(_) | Error::InvalidDistribution(_) => FfStatus::Config,
        Error::PlacementFailed(_)
        | Error::NoOverlap
        | Error::Manifest(_)
        | Error::ReplayMismatch { .. } => FfStatus::Generation,
        _ => FfStatus::InvalidArgument,
    }
}

struct Fail(FfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(FfStatus::NullArgument, format!("{name} is null"))
}

/// Runs `f`, recording the error message and catching panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FfStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FfStatus::InvalidArgument, format!("{name} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_image_load(path: *const c_char, out: *mut *mut FfImage) -> FfStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, FfImage(io::load_image(path)?));
        Ok(())
    })
}

/// Copies `len` bytes of interleaved pixel data into a new image.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ff_image_new(
    width: u32,
    height: u32,
    channels: u8,
    data: *const u8,
    len: usize,
    out: *mut *mut FfImage,
) -> FfStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let bytes = std::slice::from_raw_parts(data, len).to_vec();
        put(out, FfImage(RasterImage::new(width, height, channels, bytes)?));
        Ok(())
    })
}

/// # Safety
/// `image` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ff_image_save(image: *const FfImage, path: *const c_char) -> FfStatus {
    guard(|| {
        let image = get(image, "image")?;
        io::save_image(&image.0, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Writes width, height and channel count. Any output pointer may be NULL.
///
/// # Safety
/// `image` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_image_info(
    image: *const FfImage,
    width: *mut u32,
    height: *mut u32,
    channels: *mut u8,
) -> FfStatus {
    guard(|| {
        let img = &get(image, "image")?.0;
        if !width.is_null() {
            *width = img.width();
        }
        if !height.is_null() {
            *height = img.height();
        }
        if !channels.is_null() {
            *channels = img.channels();
        }
        Ok(())
    })
}

/// Borrowed pointer to the pixel bytes, valid while the handle lives.
///
/// # Safety
/// `image` must be a live handle and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_image_data(image: *const FfImage, len: *mut usize) -> *const u8 {
    match image.as_ref() {
        Some(img) if !len.is_null() => {
            *len = img.0.data().len();
            img.0.data().as_ptr()
        }
        _ => ptr::null(),
    }
}

/// # Safety
/// `image` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ff_image_free(image: *mut FfImage) {
    free(image)
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_mask_load(path: *const c_char, out: *mut *mut FfMask) -> FfStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, FfMask(io::load_mask(path)?));
        Ok(())
    })
}

/// # Safety
/// `mask` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ff_mask_save(mask: *const FfMask, path: *const c_char) -> FfStatus {
    guard(|| {
        let mask = get(mask, "mask")?;
        io::save_mask(&mask.0, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of foreground pixels, or 0 for a NULL handle.
///
/// # Safety
/// `mask` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_mask_count(mask: *const FfMask) -> u64 {
    mask.as_ref().map_or(0, |m| m.0.count() as u64)
}

/// # Safety
/// `mask` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ff_mask_free(mask: *mut FfMask) {
    free(mask)
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_soft_mask_load(path: *const c_char, out: *mut *mut FfSoftMask) -> FfStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, FfSoftMask(io::load_soft_mask(path)?));
        Ok(())
    })
}

/// # Safety
/// `probs` must point to `width * height` readable values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ff_soft_mask_new(
    width: u32,
    height: u32,
    probs: *const f64,
    out: *mut *mut FfSoftMask,
) -> FfStatus {
    guard(|| {
        if probs.is_null() {
            return Err(null("probs"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let n = width as usize * height as usize;
        let probs = std::slice::from_raw_parts(probs, n);
        put(out, FfSoftMask(SoftMask::from_probabilities(width, height, probs)?));
        Ok(())
    })
}

/// Foreground where probability >= `threshold`.
///
/// # Safety
/// `soft` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_soft_mask_binarize(
    soft: *const FfSoftMask,
    threshold: f64,
    out: *mut *mut FfMask,
) -> FfStatus {
    guard(|| {
        let soft = get(soft, "soft")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Fail(FfStatus::InvalidArgument, format!("threshold {threshold} outside [0, 1]")));
        }
        put(out, FfMask(binarize(&soft.0, threshold)));
        Ok(())
    })
}

/// # Safety
/// `soft` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ff_soft_mask_free(soft: *mut FfSoftMask) {
    free(soft)
}

/// # Safety
/// Both masks must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_dice(pred: *const FfMask, gt: *const FfMask, out: *mut f64) -> FfStatus {
    guard(|| {
        let (p, g) = (get(pred, "pred")?, get(gt, "gt")?);
        if out.is_null() {
            return Err(null("out"));
        }
        *out = dice(&p.0, &g.0)?;
        Ok(())
    })
}

/// # Safety
/// Both masks must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_iou(pred: *const FfMask, gt: *const FfMask, out: *mut f64) -> FfStatus {
    guard(|| {
        let (p, g) = (get(pred, "pred")?, get(gt, "gt")?);
        if out.is_null() {
            return Err(null("out"));
        }
        *out = iou(&p.0, &g.0)?;
        Ok(())
    })
}

/// Solves the spline through `n` control points. `points` and
/// `displacements` hold `n` interleaved (x, y) pairs.
///
/// # Safety
/// Both arrays must hold `2 * n` readable values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ff_tps_solve(
    points: *const f64,
    displacements: *const f64,
    n: usize,
    out: *mut *mut FfTps,
) -> FfStatus {
    guard(|| {
        if points.is_null() {
            return Err(null("points"));
        }
        if displacements.is_null() {
            return Err(null("displacements"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let pairs = |p: *const f64| {
            std::slice::from_raw_parts(p, 2 * n)
                .chunks_exact(2)
                .map(|c| [c[0], c[1]])
                .collect::<Vec<_>>()
        };
        let cps = ControlPointSet::new(pairs(points), pairs(displacements))?;
        put(out, FfTps(solve_tps(&cps)?));
        Ok(())
    })
}

/// # Safety
/// `tps` must be a live handle; `out_x` and `out_y` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ff_tps_eval(
    tps: *const FfTps,
    x: f64,
    y: f64,
    out_x: *mut f64,
    out_y: *mut f64,
) -> FfStatus {
    guard(|| {
        let tps = get(tps, "tps")?;
        if out_x.is_null() || out_y.is_null() {
            return Err(null("out_x/out_y"));
        }
        let [fx, fy] = eval_tps(&tps.0, [x, y]);
        *out_x = fx;
        *out_y = fy;
        Ok(())
    })
}

/// Reciprocal condition number of the solved system, or NaN for NULL.
///
/// # Safety
/// `tps` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_tps_rcond(tps: *const FfTps) -> f64 {
    tps.as_ref().map_or(f64::NAN, |t| t.0.rcond)
}

/// # Safety
/// `tps` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ff_tps_free(tps: *mut FfTps) {
    free(tps)
}

/// Matches the colour histogram of an RGBA `asset` to all pixels of
/// `reference`. Transparent pixels and alpha are left unchanged.
///
/// # Safety
/// Both images must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_match_histogram(
    asset: *const FfImage,
    reference: *const FfImage,
    out: *mut *mut FfImage,
) -> FfStatus {
    guard(|| {
        let asset = FishAsset::new(get(asset, "asset")?.0.clone())?;
        let spec = compute_region_histogram(&get(reference, "reference")?.0, None)?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, FfImage(match_histogram(&asset, &spec)?.into_image()));
        Ok(())
    })
}

fn preset_config(preset: FfPreset, stage: Stage) -> GenConfig {
    match preset {
        FfPreset::Deepfish => GenConfig::deepfish(stage),
        FfPreset::Deepsalmon => GenConfig::deepsalmon(stage),
    }
}

/// Fills `out` with the preset's values. `fish_count_max` is set to 0.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_gen_config_default(preset: FfPreset, out: *mut FfGenConfig) -> FfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = preset_config(preset, Stage::One);
        *out = FfGenConfig {
            preset,
            seed: c.seed,
            size_ratio_min: c.size_ratio.0,
            size_ratio_max: c.size_ratio.1,
            tps_points: c.tps_points as u32,
            tps_fraction: c.tps_fraction,
            hm_sample_fraction: c.hm_sample_fraction,
            conf_threshold: c.conf_threshold,
            min_positive_fraction: c.min_positive_fraction,
            label_threshold: c.label_threshold,
            fish_count_max: 0,
            max_placement_tries: c.max_placement_tries,
            alpha_cutoff: c.alpha_cutoff,
            min_visibility: c.min_visibility,
        };
        Ok(())
    })
}

fn gen_config(c: &FfGenConfig, stage: Stage) -> Result<GenConfig, Fail> {
    let mut g = preset_config(c.preset, stage);
    g.seed = c.seed;
    g.size_ratio = (c.size_ratio_min, c.size_ratio_max);
    g.tps_points = c.tps_points as usize;
    g.tps_fraction = c.tps_fraction;
    g.hm_sample_fraction = c.hm_sample_fraction;
    g.conf_threshold = c.conf_threshold;
    g.min_positive_fraction = c.min_positive_fraction;
    g.label_threshold = c.label_threshold;
    if c.fish_count_max > 0 {
        g.fish_count = FishCountDistribution::uniform(c.fish_count_max)?;
    }
    g.max_placement_tries = c.max_placement_tries;
    g.alpha_cutoff = c.alpha_cutoff;
    g.min_visibility = c.min_visibility;
    g.validate()?;
    Ok(g)
}

/// Generates a dataset into `out_dir` and writes its manifest.
///
/// `stage` is 1 or 2. Stage 1 reads backgrounds from `inputs`; stage 2 reads
/// images from `inputs` and soft masks from `soft_masks` (NULL for stage 1).
/// `stats` may be NULL.
///
/// # Safety
/// Path arguments must be NUL-terminated strings; `config` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ff_generate(
    stage: u32,
    inputs: *const c_char,
    soft_masks: *const c_char,
    assets: *const c_char,
    out_dir: *const c_char,
    config: *const FfGenConfig,
    rounds: u32,
    jobs: u32,
    stats: *mut FfRunStats,
) -> FfStatus {
    guard(|| {
        let (stage, inputs) = match stage {
            1 => (Stage::One, DatasetInputs::Stage1 { backgrounds: path_arg(inputs, "inputs")? }),
            2 => (
                Stage::Two,
                DatasetInputs::Stage2 {
                    images: path_arg(inputs, "inputs")?,
                    soft_masks: path_arg(soft_masks, "soft_masks")?,
                },
            ),
            s => return Err(Fail(FfStatus::InvalidArgument, format!("stage must be 1 or 2, got {s}"))),
        };
        let cfg = gen_config(get(config, "config")?, stage)?;
        let assets = path_arg(assets, "assets")?;
        let out = path_arg(out_dir, "out_dir")?;
        if rounds == 0 {
            return Err(Fail(FfStatus::InvalidArgument, "rounds must be >= 1".into()));
        }
        let opts = DatasetOptions {
            rounds,
            jobs: jobs.max(1) as usize,
            emit_instances: false,
        };
        let summary = generate_dataset(&inputs, Path::new(&assets), &cfg, &out, &opts)?;
        if !stats.is_null() {
            *stats = FfRunStats {
                images_written: summary.images_written() as u64,
                fish_placed: summary.fish_placed() as u64,
                gated: summary.gated() as u64,
                skipped: summary.skipped() as u64,
                unmatched: summary.unmatched.len() as u64,
            };
        }
        Ok(())
    })
}
