//! Planting fish into images: the per-image pipelines for both stages and
//! the dataset driver that writes outputs and the manifest.
//!
//! Every fish goes through the same fixed chain: affine placement, thin
//! plate spline warp, histogram matching, paste. Sampling and rendering are
//! split so that a recorded [`FishRecord`] can be rendered again without
//! touching the random stream.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::affine::{render_placement, sample_affine_params};
use crate::compositor::{visibility_fraction, Canvas};
use crate::config::{GenConfig, Stage};
use crate::error::{Error, Result};
use crate::histmatch::{
    compute_histogram, confident_positives, match_histogram, sample_positives, stage1_reference,
    HistogramSpec, PixelSample,
};
use crate::io;
use crate::manifest::{
    ExampleRecord, FileRef, FishRecord, InputRef, Manifest, ManifestEntry, ReferenceRecord,
    SkipRecord, MANIFEST_FILE, MANIFEST_FORMAT, TRANSFORM_ORDER,
};
use crate::metrics::binarize;
use crate::raster::{BinaryMask, FishAsset, RasterImage, Rect, SoftMask};
use crate::rng::{Rng, RngState};
use crate::tps::{sample_tps, tps_padding, warp_asset, ControlPointSet};
use crate::affine::AffineParams;

/// One generated training example.
#[derive(Clone, Debug)]
pub struct Example {
    pub image: RasterImage,
    pub mask: BinaryMask,
    pub instances: Vec<u16>,
    pub record: ExampleRecord,
}

/// Draws a fish count from `cfg.fish_count`.
pub fn sample_fish_count(cfg: &GenConfig, rng: &mut Rng) -> u32 {
    cfg.fish_count.sample(rng)
}

/// Affine placement followed by the thin plate spline warp. Returns the
/// warped fish and the background position of its top-left pixel.
pub fn render_fish(asset: &FishAsset, affine: &AffineParams, tps: &ControlPointSet) -> Result<(FishAsset, (i64, i64))> {
    let placed = render_placement(asset, affine)?;
    let warped = warp_asset(&placed.asset, tps)?;
    let pad = tps_padding(tps) as i64;
    Ok((warped, (placed.origin.0 - pad, placed.origin.1 - pad)))
}

struct Shaped {
    affine: AffineParams,
    tps: ControlPointSet,
    fish: FishAsset,
    origin: (i64, i64),
}

/// Samples placement and warp until the warped fish satisfies the
/// visibility rule.
fn shape_fish(asset: &FishAsset, dims: (u32, u32), cfg: &GenConfig, rng: &mut Rng) -> Result<Shaped> {
    for _ in 0..cfg.max_placement_tries {
        let affine = sample_affine_params(cfg, dims, asset, rng)?;
        let placed = render_placement(asset, &affine)?;
        let tps = match sample_tps(&placed.asset, cfg, rng) {
            Ok(t) => t,
            // Scaled down to nothing, or no well-conditioned control points.
            Err(Error::TransparentAsset | Error::IllConditioned(_)) => continue,
            Err(e) => return Err(e),
        };
        let (fish, origin) = render_fish(asset, &affine, &tps)?;
        if visibility_fraction(&fish, origin, dims) >= cfg.min_visibility {
            return Ok(Shaped {
                affine,
                tps,
                fish,
                origin,
            });
        }
    }
    Err(Error::PlacementFailed(cfg.max_placement_tries))
}

/// Bounding box of the fish's opaque pixels on the background, clipped to
/// the frame.
fn footprint_patch(fish: &FishAsset, origin: (i64, i64), dims: (u32, u32)) -> Option<Rect> {
    let b = fish.alpha_bbox()?;
    let x0 = (origin.0 + b.x as i64).max(0);
    let y0 = (origin.1 + b.y as i64).max(0);
    let x1 = (origin.0 + (b.x + b.width) as i64).min(dims.0 as i64);
    let y1 = (origin.1 + (b.y + b.height) as i64).min(dims.1 as i64);
    (x0 < x1 && y0 < y1).then(|| Rect {
        x: x0 as u32,
        y: y0 as u32,
        width: (x1 - x0) as u32,
        height: (y1 - y0) as u32,
    })
}

fn reference_record(sample: &PixelSample) -> Result<(ReferenceRecord, HistogramSpec)> {
    let hist = compute_histogram(sample)?;
    Ok((
        ReferenceRecord {
            region: sample.region.clone(),
            fraction: sample.fraction,
            sample_size: sample.pixels.len() as u64,
            histogram: hist.to_sparse(),
        },
        hist,
    ))
}

fn finish(canvas: Canvas, record: ExampleRecord) -> Example {
    let (image, mask, instances) = canvas.into_parts();
    Example {
        image,
        mask,
        instances,
        record,
    }
}

/// Where a fish's colour reference comes from.
enum ReferenceSource<'a> {
    BackgroundPatch(&'a RasterImage),
    Positives {
        image: &'a RasterImage,
        positives: &'a [usize],
    },
}

fn plant_fish(
    canvas: &mut Canvas,
    pool: &[FishAsset],
    source: &ReferenceSource<'_>,
    cfg: &GenConfig,
    rng: &mut Rng,
) -> Result<FishRecord> {
    let dims = canvas.dims();
    let index = rng.index(pool.len());
    let shaped = shape_fish(&pool[index], dims, cfg, rng)?;
    let sample = match source {
        ReferenceSource::BackgroundPatch(bg) => {
            let patch = footprint_patch(&shaped.fish, shaped.origin, dims).ok_or(Error::NoOverlap)?;
            stage1_reference(bg, patch, cfg.hm_sample_fraction, rng)?
        }
        ReferenceSource::Positives { image, positives } => {
            sample_positives(image, positives, cfg.conf_threshold, cfg.hm_sample_fraction, rng)
        }
    };
    let (reference, hist) = reference_record(&sample)?;
    let matched = match_histogram(&shaped.fish, &hist)?;
    canvas.paste(&matched, shaped.origin, cfg.alpha_cutoff)?;
    Ok(FishRecord {
        asset: index,
        steps: TRANSFORM_ORDER.iter().map(|s| s.to_string()).collect(),
        affine: shaped.affine,
        tps: shaped.tps,
        origin: shaped.origin,
        reference,
    })
}

/// Stage 1: plants `N ~ d` fish into an empty habitat, each colour-matched
/// to a random sample of the background patch it covers.
pub fn generate_stage1_example(
    bg: &RasterImage,
    pool: &[FishAsset],
    cfg: &GenConfig,
    rng: &mut Rng,
) -> Result<Example> {
    if cfg.stage != Stage::One {
        return Err(Error::Config("stage 1 generation needs a stage 1 config".into()));
    }
    if pool.is_empty() {
        return Err(Error::Empty("asset pool".into()));
    }
    let background = bg.to_rgb();
    let mut canvas = Canvas::new(&background);
    let count = sample_fish_count(cfg, rng);
    let source = ReferenceSource::BackgroundPatch(&background);
    let fish = (0..count)
        .map(|_| plant_fish(&mut canvas, pool, &source, cfg, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(
        canvas,
        ExampleRecord {
            fish_count: count,
            gated: false,
            label_threshold: None,
            fish,
        },
    ))
}

/// Stage 2: plants fish into a real image, colour-matched to its confident
/// pseudo-label pixels. The mask is the binarized pseudo-label united with
/// the planted footprints. When fewer than `cfg.min_positive_fraction` of
/// the pixels are confident, nothing is planted.
pub fn generate_stage2_example(
    img: &RasterImage,
    soft: &SoftMask,
    pool: &[FishAsset],
    cfg: &GenConfig,
    rng: &mut Rng,
) -> Result<Example> {
    if cfg.stage != Stage::Two {
        return Err(Error::Config("stage 2 generation needs a stage 2 config".into()));
    }
    if pool.is_empty() {
        return Err(Error::Empty("asset pool".into()));
    }
    let image = img.to_rgb();
    let label = binarize(soft, cfg.label_threshold);
    let mut canvas = Canvas::with_mask(&image, label)?;
    let mut record = ExampleRecord {
        fish_count: 0,
        gated: false,
        label_threshold: Some(cfg.label_threshold),
        fish: Vec::new(),
    };
    let Some(positives) = confident_positives(soft, cfg.conf_threshold, cfg.min_positive_fraction) else {
        record.gated = true;
        return Ok(finish(canvas, record));
    };
    record.fish_count = sample_fish_count(cfg, rng);
    let source = ReferenceSource::Positives {
        image: &image,
        positives: &positives,
    };
    for _ in 0..record.fish_count {
        let f = plant_fish(&mut canvas, pool, &source, cfg, rng)?;
        record.fish.push(f);
    }
    Ok(finish(canvas, record))
}

/// Renders an example from its record alone, without any sampling.
pub fn replay_example(
    input: &RasterImage,
    soft: Option<&SoftMask>,
    pool: &[FishAsset],
    record: &ExampleRecord,
    alpha_cutoff: u8,
) -> Result<Example> {
    let image = input.to_rgb();
    let mut canvas = match (soft, record.label_threshold) {
        (Some(s), Some(t)) => Canvas::with_mask(&image, binarize(s, t))?,
        (None, None) => Canvas::new(&image),
        _ => {
            return Err(Error::Manifest(
                "soft mask and label threshold must be recorded together".into(),
            ))
        }
    };
    for (i, f) in record.fish.iter().enumerate() {
        if f.steps.iter().map(String::as_str).ne(TRANSFORM_ORDER) {
            return Err(Error::Manifest(format!("fish {i}: unexpected transform order {:?}", f.steps)));
        }
        let asset = pool
            .get(f.asset)
            .ok_or_else(|| Error::Manifest(format!("fish {i}: asset index {} out of range", f.asset)))?;
        let (fish, origin) = render_fish(asset, &f.affine, &f.tps)?;
        if origin != f.origin {
            return Err(Error::ReplayMismatch {
                what: format!("fish {i} origin"),
                detail: format!("recorded {:?}, rendered {:?}", f.origin, origin),
            });
        }
        let hist = HistogramSpec::from_sparse(&f.reference.histogram)?;
        let matched = match_histogram(&fish, &hist)?;
        canvas.paste(&matched, origin, alpha_cutoff)?;
    }
    Ok(finish(canvas, record.clone()))
}

/// Input layout for a dataset run.
#[derive(Clone, Debug)]
pub enum DatasetInputs {
    /// Directory of empty habitats.
    Stage1 { backgrounds: PathBuf },
    /// Images and soft masks paired by file stem.
    Stage2 { images: PathBuf, soft_masks: PathBuf },
}

#[derive(Clone, Debug)]
pub struct DatasetOptions {
    pub rounds: u32,
    pub jobs: usize,
    pub emit_instances: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            rounds: 1,
            jobs: 1,
            emit_instances: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    /// Stems present in only one of the Stage 2 directories.
    pub unmatched: Vec<String>,
}

impl RunSummary {
    pub fn images_written(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn fish_placed(&self) -> usize {
        self.manifest.placed_fish()
    }

    pub fn gated(&self) -> usize {
        self.manifest.entries.iter().filter(|e| e.example.gated).count()
    }

    pub fn skipped(&self) -> usize {
        self.manifest.skipped.len()
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Image files in `dir` keyed by stem, sorted.
pub fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
                warn!("{} shadows {} (same stem)", path.display(), prev.display());
            }
        }
    }
    Ok(out)
}

fn absolute(path: &Path) -> PathBuf {
    std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Loads every asset in `dir`; unreadable or non-RGBA files are skipped
/// with a note. An empty pool is an error.
pub fn load_asset_pool(dir: &Path) -> Result<(Vec<FishAsset>, Vec<FileRef>, Vec<SkipRecord>)> {
    let files = list_images(dir)?;
    let mut pool = Vec::new();
    let mut refs = Vec::new();
    let mut skipped = Vec::new();
    for path in files.values() {
        let loaded = io::load_image(path).and_then(FishAsset::new);
        match loaded.and_then(|a| Ok((a, io::file_sha256(path)?))) {
            Ok((asset, sha256)) => {
                pool.push(asset);
                refs.push(FileRef {
                    path: absolute(path),
                    sha256,
                });
            }
            Err(e) => {
                warn!("skipping asset {}: {e}", path.display());
                skipped.push(SkipRecord {
                    input: absolute(path),
                    round: None,
                    reason: format!("asset: {e}"),
                });
            }
        }
    }
    if pool.is_empty() {
        return Err(Error::Empty(format!("no usable assets in {}", dir.display())));
    }
    Ok((pool, refs, skipped))
}

pub fn output_names(stem: &str, round: u32) -> (String, String, String) {
    (
        format!("{stem}_r{round}.png"),
        format!("{stem}_r{round}_mask.png"),
        format!("{stem}_r{round}_inst.png"),
    )
}

/// Writes the example's files into `out_dir` and returns
/// `(instances file, image sha, mask sha)`.
pub(crate) fn write_example(
    example: &Example,
    out_dir: &Path,
    stem: &str,
    round: u32,
    emit_instances: bool,
) -> Result<(Option<String>, String, String)> {
    let (img_name, mask_name, inst_name) = output_names(stem, round);
    io::save_image(&example.image, out_dir.join(&img_name))?;
    io::save_mask(&example.mask, out_dir.join(&mask_name))?;
    let inst = if emit_instances {
        let (w, h) = example.image.dims();
        io::save_instance_map(&example.instances, w, h, out_dir.join(&inst_name))?;
        Some(inst_name)
    } else {
        None
    };
    Ok((
        inst,
        io::file_sha256(out_dir.join(&img_name))?,
        io::file_sha256(out_dir.join(&mask_name))?,
    ))
}

struct Unit {
    stem: String,
    input: PathBuf,
    soft: Option<PathBuf>,
}

fn run_unit(
    unit: &Unit,
    pool: &[FishAsset],
    cfg: &GenConfig,
    out_dir: &Path,
    opts: &DatasetOptions,
) -> Vec<std::result::Result<ManifestEntry, SkipRecord>> {
    let skip = |round: Option<u32>, e: &Error| {
        warn!("skipping {}: {e}", unit.input.display());
        SkipRecord {
            input: absolute(&unit.input),
            round,
            reason: e.to_string(),
        }
    };
    let loaded = (|| -> Result<_> {
        let img = io::load_image(&unit.input)?;
        let input = InputRef {
            path: absolute(&unit.input),
            sha256: io::file_sha256(&unit.input)?,
            width: img.width(),
            height: img.height(),
        };
        let soft = match &unit.soft {
            Some(p) => {
                let s = io::load_soft_mask(p)?;
                let r = FileRef {
                    path: absolute(p),
                    sha256: io::file_sha256(p)?,
                };
                Some((s, r))
            }
            None => None,
        };
        Ok((img, input, soft))
    })();
    let (img, input, soft) = match loaded {
        Ok(v) => v,
        Err(e) => return vec![Err(skip(None, &e))],
    };

    (0..opts.rounds)
        .map(|round| {
            let rng_state = RngState::for_unit(cfg.seed, &unit.stem, round);
            let mut rng = rng_state.rng();
            let example = match &soft {
                None => generate_stage1_example(&img, pool, cfg, &mut rng),
                Some((s, _)) => generate_stage2_example(&img, s, pool, cfg, &mut rng),
            };
            let written = example.and_then(|ex| {
                let files = write_example(&ex, out_dir, &unit.stem, round, opts.emit_instances)?;
                Ok((ex, files))
            });
            match written {
                Ok((ex, (inst, image_sha256, mask_sha256))) => {
                    let (img_name, mask_name, _) = output_names(&unit.stem, round);
                    Ok(ManifestEntry {
                        stem: unit.stem.clone(),
                        round,
                        rng: rng_state,
                        input: input.clone(),
                        soft_mask: soft.as_ref().map(|(_, r)| r.clone()),
                        output_image: img_name,
                        output_mask: mask_name,
                        output_instances: inst,
                        image_sha256,
                        mask_sha256,
                        example: ex.record,
                    })
                }
                Err(e) => Err(skip(Some(round), &e)),
            }
        })
        .collect()
}

/// Generates `rounds` outputs per input and writes `manifest.json`.
///
/// Each (input, round) unit draws from its own stream derived from
/// `(cfg.seed, stem, round)`, so the output tree does not depend on
/// `opts.jobs`.
pub fn generate_dataset(
    inputs: &DatasetInputs,
    asset_dir: &Path,
    cfg: &GenConfig,
    out_dir: &Path,
    opts: &DatasetOptions,
) -> Result<RunSummary> {
    cfg.validate()?;
    let expected_stage = match inputs {
        DatasetInputs::Stage1 { .. } => Stage::One,
        DatasetInputs::Stage2 { .. } => Stage::Two,
    };
    if cfg.stage != expected_stage {
        return Err(Error::Config(format!(
            "config is for stage {:?} but inputs are for stage {:?}",
            cfg.stage, expected_stage
        )));
    }
    let mut unmatched = Vec::new();
    let units: Vec<Unit> = match inputs {
        DatasetInputs::Stage1 { backgrounds } => list_images(backgrounds)?
            .into_iter()
            .map(|(stem, input)| Unit {
                stem,
                input,
                soft: None,
            })
            .collect(),
        DatasetInputs::Stage2 { images, soft_masks } => {
            let imgs = list_images(images)?;
            let softs = list_images(soft_masks)?;
            unmatched.extend(imgs.keys().filter(|k| !softs.contains_key(*k)).cloned());
            unmatched.extend(softs.keys().filter(|k| !imgs.contains_key(*k)).cloned());
            for stem in &unmatched {
                warn!("no image/soft-mask pair for stem {stem:?}");
            }
            imgs.into_iter()
                .filter_map(|(stem, input)| {
                    let soft = softs.get(&stem)?.clone();
                    Some(Unit {
                        stem,
                        input,
                        soft: Some(soft),
                    })
                })
                .collect()
        }
    };
    if units.is_empty() {
        return Err(Error::Empty("no input images to process".into()));
    }
    let (pool, assets, mut skipped) = load_asset_pool(asset_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let pool_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<_> = pool_threads.install(|| {
        units
            .par_iter()
            .map(|u| run_unit(u, &pool, cfg, out_dir, opts))
            .collect()
    });

    let mut entries = Vec::new();
    for r in results.into_iter().flatten() {
        match r {
            Ok(e) => entries.push(e),
            Err(s) => skipped.push(s),
        }
    }
    entries.sort_by(|a, b| a.output_image.cmp(&b.output_image));
    skipped.sort_by(|a, b| (&a.input, a.round).cmp(&(&b.input, b.round)));

    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        stage: cfg.stage,
        seed: cfg.seed,
        rounds: opts.rounds,
        config: cfg.clone(),
        assets,
        entries,
        skipped,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;
    info!(
        "wrote {} images with {} fish to {}",
        manifest.entries.len(),
        manifest.placed_fish(),
        out_dir.display()
    );
    Ok(RunSummary {
        manifest,
        manifest_path,
        unmatched,
    })
}

/// Regenerates a manifest's outputs into `out_dir`, verifying input and
/// output hashes. `only` restricts replay to one stem. Returns the number
/// of entries regenerated.
pub fn replay_manifest(
    manifest: &Manifest,
    out_dir: &Path,
    only: Option<&str>,
    jobs: usize,
) -> Result<usize> {
    let mut pool = Vec::with_capacity(manifest.assets.len());
    for a in &manifest.assets {
        let sha = io::file_sha256(&a.path)?;
        if sha != a.sha256 {
            return Err(Error::ReplayMismatch {
                what: a.path.display().to_string(),
                detail: "asset content changed".into(),
            });
        }
        pool.push(FishAsset::new(io::load_image(&a.path)?)?);
    }
    let selected: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| only.is_none_or(|s| e.stem == s))
        .collect();
    if selected.is_empty() {
        return Err(Error::Manifest(match only {
            Some(s) => format!("no entries for stem {s:?}"),
            None => "manifest has no entries".into(),
        }));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    threads.install(|| {
        selected
            .par_iter()
            .map(|e| replay_entry(e, &pool, manifest.config.alpha_cutoff, out_dir))
            .collect::<Result<Vec<()>>>()
    })?;
    Ok(selected.len())
}

fn replay_entry(e: &ManifestEntry, pool: &[FishAsset], alpha_cutoff: u8, out_dir: &Path) -> Result<()> {
    let check = |path: &Path, recorded: &str| -> Result<()> {
        let sha = io::file_sha256(path)?;
        if sha != recorded {
            return Err(Error::ReplayMismatch {
                what: path.display().to_string(),
                detail: format!("recorded sha256 {recorded}, found {sha}"),
            });
        }
        Ok(())
    };
    check(&e.input.path, &e.input.sha256)?;
    let img = io::load_image(&e.input.path)?;
    if img.dims() != (e.input.width, e.input.height) {
        return Err(Error::ReplayMismatch {
            what: e.input.path.display().to_string(),
            detail: format!(
                "recorded {}x{}, found {}x{}",
                e.input.width,
                e.input.height,
                img.width(),
                img.height()
            ),
        });
    }
    let soft = match &e.soft_mask {
        Some(r) => {
            check(&r.path, &r.sha256)?;
            Some(io::load_soft_mask(&r.path)?)
        }
        None => None,
    };
    let ex = replay_example(&img, soft.as_ref(), pool, &e.example, alpha_cutoff)?;
    let (_, image_sha, mask_sha) =
        write_example(&ex, out_dir, &e.stem, e.round, e.output_instances.is_some())?;
    for (name, found, recorded) in [
        (&e.output_image, image_sha, &e.image_sha256),
        (&e.output_mask, mask_sha, &e.mask_sha256),
    ] {
        if &found != recorded {
            return Err(Error::ReplayMismatch {
                what: name.clone(),
                detail: format!("recorded sha256 {recorded}, regenerated {found}"),
            });
        }
    }
    Ok(())
}
