#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fishforge::io::{save_image, save_soft_mask};
use fishforge::{FishAsset, RasterImage, Rng, RngState, SoftMask};

pub fn rng(seed: u64) -> Rng {
    RngState::new(seed, 0xacce).rng()
}

/// Opaque ellipse with a colour gradient and a soft one-pixel rim.
pub fn fish_asset(w: u32, h: u32, tint: [u8; 3]) -> FishAsset {
    let mut img = RasterImage::filled(w, h, &[0, 0, 0, 0]).unwrap();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (rx, ry) = (0.45 * w as f64, 0.4 * h as f64);
    for y in 0..h {
        for x in 0..w {
            let d = ((x as f64 - cx) / rx).powi(2) + ((y as f64 - cy) / ry).powi(2);
            if d > 1.1 {
                continue;
            }
            let a = if d <= 1.0 { 255 } else { 128 };
            let g = (x * 255 / w.max(1)) as u8;
            img.pixel_mut(x, y).copy_from_slice(&[
                tint[0].wrapping_add(g / 3),
                tint[1].wrapping_add((y * 2) as u8),
                tint[2].wrapping_sub(g / 4),
                a,
            ]);
        }
    }
    FishAsset::new(img).unwrap()
}

/// Smooth-ish RGB background with some deterministic texture.
pub fn background(w: u32, h: u32, seed: u64) -> RasterImage {
    let mut r = rng(seed);
    let base = [r.index(120) as u32, 40 + r.index(120) as u32, 60 + r.index(150) as u32];
    let data = (0..w * h)
        .flat_map(|i| {
            let (x, y) = (i % w, i / w);
            let n = (x.wrapping_mul(73) ^ y.wrapping_mul(151)) % 23;
            [
                ((base[0] + x / 4 + n) % 256) as u8,
                ((base[1] + y / 3 + n) % 256) as u8,
                ((base[2] + (x + y) / 8) % 256) as u8,
            ]
        })
        .collect();
    RasterImage::new(w, h, 3, data).unwrap()
}

pub fn write_assets(dir: &Path, count: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let shapes = [(90, 36), (70, 40), (120, 44), (60, 30), (100, 50)];
    let tints = [[200, 90, 40], [30, 160, 190], [140, 140, 60], [220, 200, 180], [60, 60, 200]];
    for i in 0..count {
        let (w, h) = shapes[i % shapes.len()];
        let a = fish_asset(w, h, tints[i % tints.len()]);
        save_image(a.image(), dir.join(format!("fish{i:02}.png"))).unwrap();
    }
}

pub fn write_backgrounds(dir: &Path, count: usize, w: u32, h: u32) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..count {
        save_image(&background(w, h, i as u64), dir.join(format!("bg{i:03}.png"))).unwrap();
    }
}

/// Soft mask with a confident rectangle covering `fraction` of the image,
/// at probability 0.9, over a 0.3 haze.
pub fn soft_block(w: u32, h: u32, fraction: f64) -> SoftMask {
    let target = (fraction * (w * h) as f64).round() as usize;
    let probs: Vec<f64> = (0..(w * h) as usize)
        .map(|i| if i < target { 0.9 } else { 0.3 })
        .collect();
    SoftMask::from_probabilities(w, h, &probs).unwrap()
}

pub fn write_stage2_inputs(images: &Path, soft: &Path, fractions: &[f64], w: u32, h: u32) {
    std::fs::create_dir_all(images).unwrap();
    std::fs::create_dir_all(soft).unwrap();
    for (i, &f) in fractions.iter().enumerate() {
        let stem = format!("img{i:02}");
        save_image(&background(w, h, 100 + i as u64), images.join(format!("{stem}.png"))).unwrap();
        save_soft_mask(&soft_block(w, h, f), soft.join(format!("{stem}.png"))).unwrap();
    }
}

/// Relative path to file bytes for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fishforge")
}

/// Runs the CLI and returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(bin())
        .args(args)
        .env_remove("FISHFORGE_SEED")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
