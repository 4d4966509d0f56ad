use crate::raster::RasterImage;

/// Bilinear sample of an RGBA raster at a continuous position, pixel centres
/// on integer coordinates. Neighbours outside the raster read as
/// transparent black.
#[inline]
pub(crate) fn bilinear_rgba(img: &RasterImage, x: f64, y: f64) -> [u8; 4] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    if !(x > -1.0 && y > -1.0 && x < w as f64 && y < h as f64) {
        return [0; 4];
    }
    let x0f = x.floor();
    let y0f = y.floor();
    let fx = x - x0f;
    let fy = y - y0f;
    let (x0, y0) = (x0f as i64, y0f as i64);
    let data = img.data();
    let mut acc = [0.0f64; 4];
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ];
    for (tx, ty, wgt) in taps {
        if wgt == 0.0 || tx < 0 || ty < 0 || tx >= w || ty >= h {
            continue;
        }
        let i = ((ty * w + tx) * 4) as usize;
        for c in 0..4 {
            acc[c] += wgt * data[i + c] as f64;
        }
    }
    acc.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_positions_are_exact() {
        let img = RasterImage::new(2, 1, 4, vec![10, 20, 30, 40, 50, 60, 70, 80]).unwrap();
        assert_eq!(bilinear_rgba(&img, 0.0, 0.0), [10, 20, 30, 40]);
        assert_eq!(bilinear_rgba(&img, 1.0, 0.0), [50, 60, 70, 80]);
        assert_eq!(bilinear_rgba(&img, 0.5, 0.0), [30, 40, 50, 60]);
    }

    #[test]
    fn outside_is_transparent() {
        let img = RasterImage::filled(2, 2, &[255, 255, 255, 255]).unwrap();
        assert_eq!(bilinear_rgba(&img, -1.0, 0.0), [0; 4]);
        assert_eq!(bilinear_rgba(&img, 2.0, 0.0), [0; 4]);
        assert_eq!(bilinear_rgba(&img, -0.5, 0.0), [128; 4]);
    }
}
