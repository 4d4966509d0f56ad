//! PNG/JPEG decoding and PNG encoding for rasters and masks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterImage, SoftMask};

fn decode(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Loads an RGB or RGBA raster. Alpha is kept when the file has it;
/// 16-bit colour files are reduced to 8 bits.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width(), img.height());
    let (channels, data) = match img {
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        DynamicImage::ImageRgba8(buf) => (4, buf.into_raw()),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgb32F(_) => (3, img.to_rgb8().into_raw()),
        DynamicImage::ImageRgba16(_) | DynamicImage::ImageRgba32F(_) => {
            (4, img.to_rgba8().into_raw())
        }
        other => {
            return Err(Error::UnsupportedChannels {
                path: path.to_path_buf(),
                channels: other.color().channel_count(),
            })
        }
    };
    RasterImage::new(w, h, channels, data)
}

/// Loads a single-channel mask; any nonzero sample becomes 255.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width(), img.height());
    let data: Vec<u8> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(_) => img.to_luma8().into_raw(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| (v > 0) as u8)
            .collect(),
        other => {
            return Err(Error::UnsupportedChannels {
                path: path.to_path_buf(),
                channels: other.color().channel_count(),
            })
        }
    };
    let data = data.into_iter().map(|v| if v > 0 { 255 } else { 0 }).collect();
    BinaryMask::new(w, h, data)
}

/// Loads a soft mask. 16-bit files map `v -> v/65535`; 8-bit files map
/// `v -> v/255`.
pub fn load_soft_mask(path: impl AsRef<Path>) -> Result<SoftMask> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width(), img.height());
    let codes = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as u16 * 257).collect(),
        other => {
            return Err(Error::UnsupportedChannels {
                path: path.to_path_buf(),
                channels: other.color().channel_count(),
            })
        }
    };
    SoftMask::from_codes(w, h, codes)
}

/// True when the file is a 16-bit single-channel PNG, i.e. a soft mask.
pub fn is_soft_mask_file(path: impl AsRef<Path>) -> Result<bool> {
    let img = decode(path.as_ref())?;
    Ok(matches!(img, DynamicImage::ImageLuma16(_)))
}

fn write_png(path: &Path, bytes: &[u8], w: u32, h: u32, color: ExtendedColorType) -> Result<()> {
    let werr = |reason: String| Error::Write {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::create(path).map_err(|e| werr(e.to_string()))?;
    let mut out = BufWriter::new(file);
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Adaptive)
        .write_image(bytes, w, h, color)
        .map_err(|e| werr(e.to_string()))?;
    out.flush().map_err(|e| werr(e.to_string()))
}

pub fn save_image(image: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let color = match image.channels() {
        3 => ExtendedColorType::Rgb8,
        _ => ExtendedColorType::Rgba8,
    };
    write_png(path.as_ref(), image.data(), image.width(), image.height(), color)
}

/// Writes a single-channel 8-bit PNG with samples {0, 255}.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_png(
        path.as_ref(),
        mask.data(),
        mask.width(),
        mask.height(),
        ExtendedColorType::L8,
    )
}

fn save_l16(codes: &[u16], w: u32, h: u32, path: &Path) -> Result<()> {
    // The encoder takes native-endian samples and writes them big-endian.
    let bytes: Vec<u8> = codes.iter().flat_map(|v| v.to_ne_bytes()).collect();
    write_png(path, &bytes, w, h, ExtendedColorType::L16)
}

pub fn save_soft_mask(mask: &SoftMask, path: impl AsRef<Path>) -> Result<()> {
    save_l16(mask.codes(), mask.width(), mask.height(), path.as_ref())
}

/// Writes a per-pixel instance id map as a 16-bit single-channel PNG.
pub fn save_instance_map(ids: &[u16], width: u32, height: u32, path: impl AsRef<Path>) -> Result<()> {
    save_l16(ids, width, height, path.as_ref())
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn rgba_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = RasterImage::new(2, 2, 4, (0..16).map(|v| v * 13).collect()).unwrap();
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn missing_file_reports_not_found() {
        let err = load_image("/definitely/not/here.png").unwrap_err();
        assert!(err.to_string().contains("file not found"), "{err}");
    }

    #[test]
    fn garbage_is_a_decode_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"not a png at all").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Decode { .. })));
    }

    #[test]
    fn gray_image_is_unsupported_with_path() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.png");
        save_mask(&BinaryMask::empty(3, 3), &path).unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, Error::UnsupportedChannels { channels: 1, .. }));
        assert!(err.to_string().contains("g.png"));
    }

    #[test]
    fn mask_is_single_channel_binary() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = BinaryMask::from_fn(4, 3, |x, y| (x + y) % 2 == 0);
        save_mask(&mask, &path).unwrap();
        let raw = image::open(&path).unwrap();
        assert_eq!(raw.color(), image::ColorType::L8);
        assert!(raw.to_luma8().iter().all(|&v| v == 0 || v == 255));
        assert_eq!(load_mask(&path).unwrap(), mask);
    }

    #[test]
    fn soft_mask_normalizes_by_65535() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.png");
        let soft = SoftMask::from_codes(3, 1, vec![0, 32768, 65535]).unwrap();
        save_soft_mask(&soft, &path).unwrap();
        assert!(is_soft_mask_file(&path).unwrap());
        let back = load_soft_mask(&path).unwrap();
        assert_eq!(back, soft);
        assert_eq!(back.probability(2), 1.0);
        assert!((back.probability(1) - 32768.0 / 65535.0).abs() < 1e-15);
        assert!((0..3).all(|i| (0.0..=1.0).contains(&back.probability(i))));
    }

    #[test]
    fn save_to_missing_directory_fails() {
        let img = RasterImage::filled(1, 1, &[0, 0, 0]).unwrap();
        let err = save_image(&img, "/nonexistent-dir/sub/x.png").unwrap_err();
        assert!(matches!(err, Error::Write { .. }));
    }

    #[cfg(unix)]
    #[test]
    fn save_to_read_only_directory_fails() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempdir().unwrap();
        let ro = dir.path().join("ro");
        std::fs::create_dir(&ro).unwrap();
        std::fs::set_permissions(&ro, std::fs::Permissions::from_mode(0o555)).unwrap();
        // root ignores directory permissions; only assert when the probe fails.
        if std::fs::write(ro.join("probe"), b"x").is_ok() {
            return;
        }
        let img = RasterImage::filled(1, 1, &[0, 0, 0]).unwrap();
        assert!(save_image(&img, ro.join("x.png")).is_err());
    }
}
