use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use fishforge::generator::{DatasetInputs, DatasetOptions};
use fishforge::{generate_dataset, FishCountDistribution, GenConfig, Stage};
use fishforge_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ff_last_error()).to_string_lossy().into_owned() }
}

fn image(w: u32, h: u32, ch: u8, data: &[u8]) -> *mut FfImage {
    let mut out = ptr::null_mut();
    let st = unsafe { ff_image_new(w, h, ch, data.as_ptr(), data.len(), &mut out) };
    assert_eq!(st, FfStatus::Ok, "{}", last_error());
    out
}

fn mask(w: u32, h: u32, probs: &[f64]) -> *mut FfMask {
    unsafe {
        let mut soft = ptr::null_mut();
        assert_eq!(ff_soft_mask_new(w, h, probs.as_ptr(), &mut soft), FfStatus::Ok);
        let mut m = ptr::null_mut();
        assert_eq!(ff_soft_mask_binarize(soft, 0.5, &mut m), FfStatus::Ok);
        ff_soft_mask_free(soft);
        m
    }
}

#[test]
fn tps_passes_through_targets() {
    let pts = [3.0, 4.0, 40.0, 7.0, 22.0, 30.0, 9.0, 25.0];
    let disp = [2.0, -1.0, 0.5, 3.0, -4.0, 0.0, 1.0, 1.0];
    unsafe {
        let mut tps = ptr::null_mut();
        assert_eq!(ff_tps_solve(pts.as_ptr(), disp.as_ptr(), 4, &mut tps), FfStatus::Ok);
        for i in 0..4 {
            let (mut x, mut y) = (0.0, 0.0);
            assert_eq!(ff_tps_eval(tps, pts[2 * i], pts[2 * i + 1], &mut x, &mut y), FfStatus::Ok);
            assert!((x - pts[2 * i] - disp[2 * i]).abs() < 1e-9);
            assert!((y - pts[2 * i + 1] - disp[2 * i + 1]).abs() < 1e-9);
        }
        assert!(ff_tps_rcond(tps) > 1e-10);
        ff_tps_free(tps);
    }
}

#[test]
fn collinear_points_are_rejected() {
    let pts = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0];
    let disp = [0.0; 6];
    unsafe {
        let mut tps = ptr::null_mut();
        let st = ff_tps_solve(pts.as_ptr(), disp.as_ptr(), 3, &mut tps);
        assert_eq!(st, FfStatus::IllConditioned);
        assert!(tps.is_null());
        assert!(last_error().contains("ill-conditioned"));
    }
}

#[test]
fn overlap_scores() {
    let a = mask(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    let b = mask(3, 2, &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    let c = mask(2, 2, &[0.0; 4]);
    unsafe {
        let (mut d, mut j) = (0.0, 0.0);
        assert_eq!(ff_dice(a, b, &mut d), FfStatus::Ok);
        assert_eq!(ff_iou(a, b, &mut j), FfStatus::Ok);
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
        assert!((j - 0.5).abs() < 1e-12);
        assert_eq!(ff_mask_count(a), 3);
        assert_eq!(ff_dice(a, c, &mut d), FfStatus::DimensionMismatch);
        for m in [a, b, c] {
            ff_mask_free(m);
        }
    }
}

#[test]
fn null_and_missing_arguments() {
    unsafe {
        let mut img = ptr::null_mut();
        assert_eq!(ff_image_load(ptr::null(), &mut img), FfStatus::NullArgument);
        assert!(last_error().contains("path"));
        let missing = cstr(Path::new("/nonexistent/x.png"));
        assert_eq!(ff_image_load(missing.as_ptr(), &mut img), FfStatus::NotFound);
        assert!(img.is_null());
        assert_eq!(ff_image_info(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), FfStatus::NullArgument);
        let mut n = 0;
        assert!(ff_image_data(ptr::null(), &mut n).is_null());
        ff_image_free(ptr::null_mut());
        assert!(ff_tps_rcond(ptr::null()).is_nan());
        let mut d = 0.0;
        assert_eq!(ff_dice(ptr::null(), ptr::null(), &mut d), FfStatus::NullArgument);
    }
}

#[test]
fn image_round_trip_and_histogram_match() {
    let dir = tempfile::tempdir().unwrap();
    // Opaque left half at one colour, transparent right half.
    let asset_px: Vec<u8> = (0..16).flat_map(|i| if i % 4 < 2 { [10, 20, 30, 255] } else { [1, 2, 3, 0] }).collect();
    let reference: Vec<u8> = (0..9).flat_map(|_| [200, 150, 100]).collect();
    let asset = image(4, 4, 4, &asset_px);
    let refimg = image(3, 3, 3, &reference);
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(ff_match_histogram(asset, refimg, &mut out), FfStatus::Ok, "{}", last_error());
        let path = cstr(&dir.path().join("m.png"));
        assert_eq!(ff_image_save(out, path.as_ptr()), FfStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(ff_image_load(path.as_ptr(), &mut back), FfStatus::Ok);
        let (mut w, mut h, mut ch) = (0, 0, 0);
        assert_eq!(ff_image_info(back, &mut w, &mut h, &mut ch), FfStatus::Ok);
        assert_eq!((w, h, ch), (4, 4, 4));
        let mut n = 0;
        let data = std::slice::from_raw_parts(ff_image_data(back, &mut n), n);
        for (i, px) in data.chunks_exact(4).enumerate() {
            let want: &[u8] = if i % 4 < 2 { &[200, 150, 100, 255] } else { &[1, 2, 3, 0] };
            assert_eq!(px, want);
        }
        // An RGB image is not a valid asset.
        let mut bad = ptr::null_mut();
        assert_eq!(ff_match_histogram(refimg, refimg, &mut bad), FfStatus::InvalidArgument);
        for p in [asset, refimg, out, back] {
            ff_image_free(p);
        }
    }
}

fn write_inputs(root: &Path) -> (PathBuf, PathBuf) {
    let (assets, bgs) = (root.join("assets"), root.join("bg"));
    std::fs::create_dir_all(&assets).unwrap();
    std::fs::create_dir_all(&bgs).unwrap();
    for (i, (w, h)) in [(40u32, 20u32), (30, 24)].into_iter().enumerate() {
        let px: Vec<u8> = (0..w * h)
            .flat_map(|k| {
                let (x, y) = ((k % w) as f64 - w as f64 / 2.0, (k / w) as f64 - h as f64 / 2.0);
                let inside = (x / (0.45 * w as f64)).powi(2) + (y / (0.4 * h as f64)).powi(2) <= 1.0;
                [(k % 251) as u8, 90, 40 + i as u8 * 50, if inside { 255 } else { 0 }]
            })
            .collect();
        let img = image(w, h, 4, &px);
        unsafe { assert_eq!(ff_image_save(img, cstr(&assets.join(format!("f{i}.png"))).as_ptr()), FfStatus::Ok) };
        unsafe { ff_image_free(img) };
    }
    for i in 0..3u32 {
        let px: Vec<u8> = (0..96 * 64u32).flat_map(|k| [(k % 96 + i * 40) as u8, (k / 96) as u8 * 3, 120]).collect();
        let img = image(96, 64, 3, &px);
        unsafe { assert_eq!(ff_image_save(img, cstr(&bgs.join(format!("bg{i}.png"))).as_ptr()), FfStatus::Ok) };
        unsafe { ff_image_free(img) };
    }
    (assets, bgs)
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(root)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn generate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (assets, bgs) = write_inputs(dir.path());
    let out = dir.path().join("ffi_out");
    let mut cfg = std::mem::MaybeUninit::<FfGenConfig>::uninit();
    let mut cfg = unsafe {
        assert_eq!(ff_gen_config_default(FfPreset::Deepfish, cfg.as_mut_ptr()), FfStatus::Ok);
        cfg.assume_init()
    };
    cfg.seed = 11;
    cfg.fish_count_max = 2;
    let mut stats = FfRunStats::default();
    let st = unsafe {
        ff_generate(
            1,
            cstr(&bgs).as_ptr(),
            ptr::null(),
            cstr(&assets).as_ptr(),
            cstr(&out).as_ptr(),
            &cfg,
            2,
            1,
            &mut stats,
        )
    };
    assert_eq!(st, FfStatus::Ok, "{}", last_error());
    assert_eq!(stats.images_written, 6);
    assert_eq!(stats.skipped, 0);

    let mut lib_cfg = GenConfig::deepfish(Stage::One);
    lib_cfg.seed = 11;
    lib_cfg.fish_count = FishCountDistribution::uniform(2).unwrap();
    let lib_out = dir.path().join("lib_out");
    let opts = DatasetOptions { rounds: 2, jobs: 1, emit_instances: false };
    generate_dataset(&DatasetInputs::Stage1 { backgrounds: bgs }, &assets, &lib_cfg, &lib_out, &opts).unwrap();
    let (a, b) = (tree(&out), tree(&lib_out));
    // Six images, six masks and the manifest.
    assert_eq!(a.len(), 13);
    assert_eq!(a, b);
}

#[test]
fn generate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let (assets, bgs) = write_inputs(dir.path());
    let out = dir.path().join("out");
    let mut cfg = std::mem::MaybeUninit::<FfGenConfig>::uninit();
    let mut cfg = unsafe {
        ff_gen_config_default(FfPreset::Deepsalmon, cfg.as_mut_ptr());
        cfg.assume_init()
    };
    cfg.tps_points = 2;
    let st = unsafe {
        ff_generate(1, cstr(&bgs).as_ptr(), ptr::null(), cstr(&assets).as_ptr(), cstr(&out).as_ptr(), &cfg, 1, 1, ptr::null_mut())
    };
    assert_eq!(st, FfStatus::Config);
    assert!(last_error().contains("tps_points"));
    assert!(!out.exists());
    cfg.tps_points = 3;
    let st = unsafe {
        ff_generate(3, cstr(&bgs).as_ptr(), ptr::null(), cstr(&assets).as_ptr(), cstr(&out).as_ptr(), &cfg, 1, 1, ptr::null_mut())
    };
    assert_eq!(st, FfStatus::InvalidArgument);
}

/// Compiles the C smoke program against the generated header and static library.
#[test]
fn c_header_compiles_and_links() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libfishforge_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = std::process::Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status();
    let status = match status {
        Ok(s) => s,
        Err(e) => panic!("cannot run {cc}: {e}"),
    };
    assert!(status.success(), "C compile failed");
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
