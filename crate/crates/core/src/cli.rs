//! Command-line front end.
//!
//! Generation settings resolve in three layers: the preset named by the
//! config file (DeepFish when absent), the config file's own keys, then
//! command-line flags. Resolution and validation finish before anything is
//! written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::{FishCountDistribution, GenConfig, Stage};
use crate::error::{Error, Result};
use crate::generator::{
    generate_dataset, generate_stage1_example, generate_stage2_example, list_images, load_asset_pool,
    replay_manifest, DatasetInputs, DatasetOptions, Example, RunSummary,
};
use crate::io;
use crate::manifest::{Manifest, MANIFEST_FILE};
use crate::metrics::{
    best_dice_threshold, binarize, default_thresholds, dice_from_counts, iou_from_counts,
    overlap_counts, pr_sweep, PrPoint,
};
use crate::raster::{BinaryMask, RasterImage, SoftMask};
use crate::rng::RngState;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fishforge", version, about = "Synthetic fish segmentation data generator")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plant fish into empty habitat backgrounds.
    GenStage1(GenArgs),
    /// Plant fish into real images guided by soft pseudo-labels.
    GenStage2(GenArgs),
    /// Score predicted masks against reference masks.
    Eval(EvalArgs),
    /// Regenerate a run's outputs from its manifest.
    Replay(ReplayArgs),
    /// Render a few examples into one image|mask contact sheet.
    Preview(PreviewArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "FISHFORGE_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rounds: Option<u32>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory (preview: output PNG).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory of RGBA fish assets.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Stage 1 background directory.
    #[arg(long)]
    pub backgrounds: Option<PathBuf>,
    /// Stage 2 image directory.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Stage 2 soft-mask directory, paired with images by stem.
    #[arg(long)]
    pub soft: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub ratio: Option<Vec<f64>>,
    #[arg(long)]
    pub tps_points: Option<usize>,
    #[arg(long)]
    pub tps_fraction: Option<f64>,
    #[arg(long)]
    pub hm_fraction: Option<f64>,
    #[arg(long)]
    pub conf: Option<f64>,
    #[arg(long)]
    pub min_positive: Option<f64>,
    /// Fish-count table "c:p,c:p,..." or "uniform:N".
    #[arg(long)]
    pub dist: Option<FishCountDistribution>,
    #[arg(long)]
    pub label_threshold: Option<f64>,
    /// Also write 16-bit instance-id maps.
    #[arg(long)]
    pub instances: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predicted masks: binary, or 16-bit soft masks for a threshold sweep.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference binary masks.
    #[arg(long)]
    pub gt: PathBuf,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay only the entries of one input stem.
    #[arg(long)]
    pub only: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PreviewArgs {
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long, value_enum, default_value_t = PreviewStage::One)]
    pub stage: PreviewStage,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PreviewStage {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    DeepFish,
    DeepSalmon,
}

/// TOML run configuration. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub rounds: Option<u32>,
    pub jobs: Option<usize>,
    pub instances: Option<bool>,
    pub size_ratio: Option<(f64, f64)>,
    pub tps_points: Option<usize>,
    pub tps_fraction: Option<f64>,
    pub hm_sample_fraction: Option<f64>,
    pub conf_threshold: Option<f64>,
    pub min_positive_fraction: Option<f64>,
    pub label_threshold: Option<f64>,
    pub fish_count_stage1: Option<FishCountDistribution>,
    pub fish_count_stage2: Option<FishCountDistribution>,
    pub max_placement_tries: Option<u32>,
    pub alpha_cutoff: Option<u8>,
    pub min_visibility: Option<f64>,
    /// Paths are relative to the config file.
    pub paths: PathConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub assets: Option<PathBuf>,
    pub backgrounds: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub soft_masks: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, making its relative paths relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [&mut p.assets, &mut p.backgrounds, &mut p.images, &mut p.soft_masks, &mut p.out] {
            if let Some(rel) = slot.as_ref().filter(|p| p.is_relative()) {
                *slot = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }

    pub fn gen_config(&self, stage: Stage) -> GenConfig {
        let mut g = match self.preset.unwrap_or(Preset::DeepFish) {
            Preset::DeepFish => GenConfig::deepfish(stage),
            Preset::DeepSalmon => GenConfig::deepsalmon(stage),
        };
        let fish_count = match stage {
            Stage::One => &self.fish_count_stage1,
            Stage::Two => &self.fish_count_stage2,
        };
        set(&mut g.seed, self.seed);
        set(&mut g.size_ratio, self.size_ratio);
        set(&mut g.tps_points, self.tps_points);
        set(&mut g.tps_fraction, self.tps_fraction);
        set(&mut g.hm_sample_fraction, self.hm_sample_fraction);
        set(&mut g.conf_threshold, self.conf_threshold);
        set(&mut g.min_positive_fraction, self.min_positive_fraction);
        set(&mut g.label_threshold, self.label_threshold);
        set(&mut g.fish_count, fish_count.clone());
        set(&mut g.max_placement_tries, self.max_placement_tries);
        set(&mut g.alpha_cutoff, self.alpha_cutoff);
        set(&mut g.min_visibility, self.min_visibility);
        g
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Fully resolved generation run.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: GenConfig,
    pub inputs: DatasetInputs,
    pub assets: PathBuf,
    pub out: PathBuf,
    pub options: DatasetOptions,
}

fn required(flag: Option<&PathBuf>, file: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(file)
        .cloned()
        .ok_or_else(|| Error::Config(format!("missing --{name} (or `{name}` in the config file)")))
}

/// Merges preset, config file and flags into a validated run.
pub fn resolve_run(stage: Stage, args: &GenArgs) -> Result<ResolvedRun> {
    let file = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut g = file.gen_config(stage);
    set(&mut g.seed, args.seed);
    if let Some(r) = &args.ratio {
        g.size_ratio = (r[0], r[1]);
    }
    set(&mut g.tps_points, args.tps_points);
    set(&mut g.tps_fraction, args.tps_fraction);
    set(&mut g.hm_sample_fraction, args.hm_fraction);
    set(&mut g.conf_threshold, args.conf);
    set(&mut g.min_positive_fraction, args.min_positive);
    set(&mut g.label_threshold, args.label_threshold);
    set(&mut g.fish_count, args.dist.clone());
    g.validate()?;

    let fp = &file.paths;
    let inputs = match stage {
        Stage::One => DatasetInputs::Stage1 {
            backgrounds: required(args.backgrounds.as_ref(), fp.backgrounds.as_ref(), "backgrounds")?,
        },
        Stage::Two => DatasetInputs::Stage2 {
            images: required(args.images.as_ref(), fp.images.as_ref(), "images")?,
            soft_masks: required(args.soft.as_ref(), fp.soft_masks.as_ref(), "soft")?,
        },
    };
    let options = DatasetOptions {
        rounds: args.rounds.or(file.rounds).unwrap_or(1),
        jobs: args.jobs.or(file.jobs).unwrap_or(1),
        emit_instances: args.instances || file.instances.unwrap_or(false),
    };
    if options.rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    if options.jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    Ok(ResolvedRun {
        config: g,
        inputs,
        assets: required(args.assets.as_ref(), fp.assets.as_ref(), "assets")?,
        out: required(args.out.as_ref(), fp.out.as_ref(), "out")?,
        options,
    })
}

fn check_dirs(run: &ResolvedRun) -> Result<()> {
    let mut dirs = vec![&run.assets];
    match &run.inputs {
        DatasetInputs::Stage1 { backgrounds } => dirs.push(backgrounds),
        DatasetInputs::Stage2 { images, soft_masks } => dirs.extend([images, soft_masks]),
    }
    for d in dirs {
        if !d.is_dir() {
            return Err(Error::NotFound(d.clone()));
        }
    }
    Ok(())
}

fn print_summary(s: &RunSummary) {
    println!("images written: {}", s.images_written());
    println!("fish placed: {}", s.fish_placed());
    if s.manifest.stage == Stage::Two {
        println!("images without fish (too few confident positives): {}", s.gated());
    }
    println!("skipped: {}", s.skipped());
    if !s.unmatched.is_empty() {
        println!("unmatched stems: {}", s.unmatched.join(", "));
    }
    println!("manifest: {}", s.manifest_path.display());
}

fn cmd_generate(stage: Stage, args: &GenArgs) -> Result<i32> {
    let run = resolve_run(stage, args)?;
    check_dirs(&run)?;
    let summary = generate_dataset(&run.inputs, &run.assets, &run.config, &run.out, &run.options)?;
    print_summary(&summary);
    Ok(if summary.skipped() > 0 || !summary.unmatched.is_empty() {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    })
}

pub fn cmd_gen_stage1(args: &GenArgs) -> Result<i32> {
    cmd_generate(Stage::One, args)
}

pub fn cmd_gen_stage2(args: &GenArgs) -> Result<i32> {
    cmd_generate(Stage::Two, args)
}

/// One image's scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub stem: String,
    pub dice: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pooled {
    pub dice: f64,
    pub iou: f64,
    pub mean_dice: f64,
    pub mean_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// "binary" or "soft".
    pub mode: String,
    pub pairs: usize,
    /// Threshold the soft predictions were binarized at for the scores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_threshold: Option<f64>,
    pub pooled: Pooled,
    pub per_image: Vec<ImageScore>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub pr_curve: Vec<PrPoint>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub unmatched: Vec<String>,
}

/// Scores stem-matched prediction and reference directories. Any 16-bit
/// prediction switches to soft mode: the sweep picks the best-Dice
/// threshold and the scores are computed at it.
pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path) -> Result<EvalReport> {
    let preds = list_images(pred_dir)?;
    let gts = list_images(gt_dir)?;
    let mut unmatched: Vec<String> = preds.keys().filter(|k| !gts.contains_key(*k)).cloned().collect();
    unmatched.extend(gts.keys().filter(|k| !preds.contains_key(*k)).cloned());
    let pairs: Vec<(&String, &PathBuf, &PathBuf)> = preds
        .iter()
        .filter_map(|(s, p)| gts.get(s).map(|g| (s, p, g)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Empty(format!(
            "no stems shared by {} and {}",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    let mut soft_mode = false;
    for (_, p, _) in &pairs {
        soft_mode |= io::is_soft_mask_file(p)?;
    }
    let gt_masks = pairs
        .iter()
        .map(|(_, _, g)| io::load_mask(g))
        .collect::<Result<Vec<BinaryMask>>>()?;

    let (pred_masks, best_threshold, pr_curve) = if soft_mode {
        let soft = pairs
            .iter()
            .map(|(_, p, _)| io::load_soft_mask(p))
            .collect::<Result<Vec<SoftMask>>>()?;
        let sweep = pr_sweep(&soft, &gt_masks, &default_thresholds())?;
        let t = best_dice_threshold(&sweep)?;
        (soft.iter().map(|s| binarize(s, t)).collect(), Some(t), sweep)
    } else {
        let m = pairs
            .iter()
            .map(|(_, p, _)| io::load_mask(p))
            .collect::<Result<Vec<BinaryMask>>>()?;
        (m, None, Vec::new())
    };

    let mut per_image = Vec::with_capacity(pairs.len());
    let (mut ti, mut tp, mut tg) = (0u64, 0u64, 0u64);
    for ((stem, _, _), (p, g)) in pairs.iter().zip(pred_masks.iter().zip(&gt_masks)) {
        let (i, np, ng) = overlap_counts(p, g)?;
        ti += i;
        tp += np;
        tg += ng;
        per_image.push(ImageScore {
            stem: stem.to_string(),
            dice: dice_from_counts(i, np, ng),
            iou: iou_from_counts(i, np, ng),
        });
    }
    let n = per_image.len() as f64;
    Ok(EvalReport {
        mode: if soft_mode { "soft" } else { "binary" }.into(),
        pairs: pairs.len(),
        best_threshold,
        pooled: Pooled {
            dice: dice_from_counts(ti, tp, tg),
            iou: iou_from_counts(ti, tp, tg),
            mean_dice: per_image.iter().map(|s| s.dice).sum::<f64>() / n,
            mean_iou: per_image.iter().map(|s| s.iou).sum::<f64>() / n,
        },
        per_image,
        pr_curve,
        unmatched,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let report = evaluate_dirs(&args.pred, &args.gt)?;
    for stem in &report.unmatched {
        warn!("no prediction/reference pair for stem {stem:?}");
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, json + "\n").map_err(|e| Error::Write {
            path: path.clone(),
            reason: e.to_string(),
        })?,
        None => println!("{json}"),
    }
    Ok(EXIT_OK)
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<i32> {
    let manifest = Manifest::read(&args.manifest)?;
    let src_dir = args.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = args.out.clone().unwrap_or_else(|| src_dir.clone());
    let n = replay_manifest(&manifest, &out, args.only.as_deref(), args.jobs)?;
    if args.only.is_none() {
        let dst = out.join(MANIFEST_FILE);
        let same = std::fs::canonicalize(&dst).ok() == std::fs::canonicalize(&args.manifest).ok();
        if !same {
            std::fs::copy(&args.manifest, &dst).map_err(|e| Error::Write {
                path: dst.clone(),
                reason: e.to_string(),
            })?;
        }
    }
    println!("replayed {n} entries into {}", out.display());
    Ok(EXIT_OK)
}

/// Tiles `(image, mask)` rows into one RGB sheet: image left, mask right.
/// Cells are sized to the largest example; unused area is black.
pub fn contact_sheet(examples: &[Example]) -> Result<RasterImage> {
    if examples.is_empty() {
        return Err(Error::Empty("no examples to preview".into()));
    }
    let cw = examples.iter().map(|e| e.image.width()).max().unwrap_or(0);
    let chh = examples.iter().map(|e| e.image.height()).max().unwrap_or(0);
    let sheet_w = 2 * cw;
    let mut sheet = RasterImage::filled(sheet_w, chh * examples.len() as u32, &[0, 0, 0])?;
    for (row, ex) in examples.iter().enumerate() {
        let y0 = row as u32 * chh;
        for y in 0..ex.image.height() {
            for x in 0..ex.image.width() {
                let px = [ex.image.pixel(x, y)[0], ex.image.pixel(x, y)[1], ex.image.pixel(x, y)[2]];
                sheet.pixel_mut(x, y0 + y).copy_from_slice(&px);
                let m = if ex.mask.get(x, y) { 255 } else { 0 };
                sheet.pixel_mut(cw + x, y0 + y).copy_from_slice(&[m, m, m]);
            }
        }
    }
    Ok(sheet)
}

/// Generates `count` examples, cycling through the sorted inputs; example
/// `i` uses input `i mod n` with round `i div n`, so the sheet's rows match
/// the corresponding outputs of a generation run.
pub fn preview_examples(stage: Stage, args: &GenArgs, count: usize) -> Result<Vec<Example>> {
    let mut gen = args.clone();
    // The sheet path is not an output directory.
    gen.out.get_or_insert_with(|| PathBuf::from("preview.png"));
    let run = resolve_run(stage, &gen)?;
    check_dirs(&run)?;
    let (pool, _, _) = load_asset_pool(&run.assets)?;
    let units: Vec<(String, PathBuf, Option<PathBuf>)> = match &run.inputs {
        DatasetInputs::Stage1 { backgrounds } => list_images(backgrounds)?
            .into_iter()
            .map(|(s, p)| (s, p, None))
            .collect(),
        DatasetInputs::Stage2 { images, soft_masks } => {
            let softs: BTreeMap<_, _> = list_images(soft_masks)?;
            list_images(images)?
                .into_iter()
                .filter_map(|(s, p)| softs.get(&s).cloned().map(|m| (s, p, Some(m))))
                .collect()
        }
    };
    if units.is_empty() {
        return Err(Error::Empty("no input images to preview".into()));
    }
    (0..count)
        .map(|i| {
            let (stem, input, soft) = &units[i % units.len()];
            let round = (i / units.len()) as u32;
            let mut rng = RngState::for_unit(run.config.seed, stem, round).rng();
            let img = io::load_image(input)?;
            match soft {
                None => generate_stage1_example(&img, &pool, &run.config, &mut rng),
                Some(p) => {
                    let s = io::load_soft_mask(p)?;
                    generate_stage2_example(&img, &s, &pool, &run.config, &mut rng)
                }
            }
        })
        .collect()
}

pub fn cmd_preview(args: &PreviewArgs) -> Result<i32> {
    if args.count == 0 {
        return Err(Error::Config("--count must be at least 1".into()));
    }
    let stage = match args.stage {
        PreviewStage::One => Stage::One,
        PreviewStage::Two => Stage::Two,
    };
    let out = args.gen.out.clone().unwrap_or_else(|| PathBuf::from("preview.png"));
    let examples = preview_examples(stage, &args.gen, args.count)?;
    let sheet = contact_sheet(&examples)?;
    io::save_image(&sheet, &out)?;
    println!("wrote {} ({} examples)", out.display(), examples.len());
    Ok(EXIT_OK)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::GenStage1(a) => cmd_gen_stage1(a),
        Command::GenStage2(a) => cmd_gen_stage2(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Preview(a) => cmd_preview(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}
