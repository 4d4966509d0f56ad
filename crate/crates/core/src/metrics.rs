//! Overlap metrics and the precision-recall threshold sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{check_dims, code_at_least, BinaryMask, SoftMask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub dice: f64,
}

impl PrPoint {
    pub fn from_counts(threshold: f64, tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let dice = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            threshold,
            precision,
            recall,
            dice,
        }
    }
}

/// Pixel counts `(|P ∩ G|, |P|, |G|)`.
pub fn overlap_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<(u64, u64, u64)> {
    check_dims(pred.dims(), gt.dims())?;
    let (mut inter, mut p, mut g) = (0u64, 0u64, 0u64);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        let (a, b) = (a != 0, b != 0);
        inter += (a && b) as u64;
        p += a as u64;
        g += b as u64;
    }
    Ok((inter, p, g))
}

pub fn dice_from_counts(inter: u64, p: u64, g: u64) -> f64 {
    if p + g == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + g) as f64
    }
}

pub fn iou_from_counts(inter: u64, p: u64, g: u64) -> f64 {
    let union = p + g - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// `2|P ∩ G| / (|P| + |G|)`; 1 when both masks are empty.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (i, p, g) = overlap_counts(pred, gt)?;
    Ok(dice_from_counts(i, p, g))
}

/// `|P ∩ G| / |P ∪ G|`; 1 when both masks are empty.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (i, p, g) = overlap_counts(pred, gt)?;
    Ok(iou_from_counts(i, p, g))
}

/// Pixel is foreground iff its probability is at least `t`.
pub fn binarize(soft: &SoftMask, t: f64) -> BinaryMask {
    let (w, h) = soft.dims();
    let data = (0..soft.codes().len())
        .map(|i| if soft.at_least(i, t) { 255 } else { 0 })
        .collect();
    BinaryMask::new(w, h, data).expect("dimensions come from a valid soft mask")
}

/// Thresholds `0, 0.01, ..., 1`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Micro-averaged precision, recall and Dice at each threshold over the
/// whole set of (soft, reference) pairs.
pub fn pr_sweep(soft: &[SoftMask], reference: &[BinaryMask], thresholds: &[f64]) -> Result<Vec<PrPoint>> {
    if soft.len() != reference.len() {
        return Err(Error::InvalidArgument(format!(
            "{} soft masks but {} reference masks",
            soft.len(),
            reference.len()
        )));
    }
    for (s, r) in soft.iter().zip(reference) {
        check_dims(s.dims(), r.dims())?;
    }
    // Histogram soft codes of positive and negative reference pixels once,
    // then every threshold is a suffix sum.
    let mut pos = vec![0u64; 65536];
    let mut neg = vec![0u64; 65536];
    for (s, r) in soft.iter().zip(reference) {
        for (&code, &label) in s.codes().iter().zip(r.data()) {
            if label != 0 {
                pos[code as usize] += 1;
            } else {
                neg[code as usize] += 1;
            }
        }
    }
    let total_pos: u64 = pos.iter().sum();
    let mut pos_at_least = vec![0u64; 65537];
    let mut neg_at_least = vec![0u64; 65537];
    for c in (0..65536).rev() {
        pos_at_least[c] = pos_at_least[c + 1] + pos[c];
        neg_at_least[c] = neg_at_least[c + 1] + neg[c];
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let first = first_code_at_least(t);
            let tp = pos_at_least[first];
            let fp = neg_at_least[first];
            PrPoint::from_counts(t, tp, fp, total_pos - tp)
        })
        .collect())
}

/// Smallest 16-bit code whose probability passes `t`, or 65536 if none.
fn first_code_at_least(t: f64) -> usize {
    // code_at_least is monotone in the code
    let (mut lo, mut hi) = (0usize, 65536usize);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if code_at_least(mid as u16, t) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Threshold of the highest-Dice point; ties go to the larger threshold.
pub fn best_dice_threshold(sweep: &[PrPoint]) -> Result<f64> {
    let first = sweep
        .first()
        .ok_or_else(|| Error::Empty("precision-recall sweep is empty".into()))?;
    let best = sweep.iter().fold(first, |best, p| {
        if p.dice > best.dice || (p.dice == best.dice && p.threshold > best.threshold) {
            p
        } else {
            best
        }
    });
    Ok(best.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with(w: u32, on: impl Fn(u32) -> bool) -> BinaryMask {
        BinaryMask::from_fn(w, 1, |x, _| on(x))
    }

    #[test]
    fn dice_and_iou_basics() {
        let a = mask_with(10, |x| x < 5);
        let b = mask_with(10, |x| x >= 5);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        let e = BinaryMask::empty(10, 1);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert!(dice(&a, &BinaryMask::empty(3, 3)).is_err());
    }

    #[test]
    fn half_overlap() {
        let p = mask_with(300, |x| x < 100);
        let g = mask_with(300, |x| (50..150).contains(&x));
        assert_eq!(dice(&p, &g).unwrap(), 0.5);
        assert!((iou(&p, &g).unwrap() - 50.0 / 150.0).abs() < 1e-15);
        let d = dice(&p, &g).unwrap();
        assert!((iou(&p, &g).unwrap() - d / (2.0 - d)).abs() < 1e-12);
    }

    #[test]
    fn binarize_thresholds() {
        let soft = SoftMask::from_probabilities(5, 1, &[0.0, 0.5, 0.8, 0.9, 1.0]).unwrap();
        assert_eq!(binarize(&soft, 0.0).count(), 5);
        assert_eq!(binarize(&soft, 1.0).count(), 1);
        assert_eq!(binarize(&soft, 0.8).count(), 3);
    }

    #[test]
    fn sweep_edges() {
        let soft = SoftMask::from_probabilities(4, 1, &[0.1, 0.2, 0.6, 0.7]).unwrap();
        let gt = mask_with(4, |x| x >= 2);
        let s = pr_sweep(&[soft.clone()], &[gt.clone()], &[0.0, 0.9]).unwrap();
        assert_eq!(s[0].recall, 1.0);
        assert_eq!(s[0].precision, 0.5);
        assert_eq!(s[1].precision, 0.0);
        assert_eq!(s[1].dice, 0.0);
        assert!(pr_sweep(&[soft], &[], &[0.5]).is_err());
    }

    #[test]
    fn best_threshold_rules() {
        let p = |t, d| PrPoint { threshold: t, precision: 0.0, recall: 0.0, dice: d };
        assert_eq!(best_dice_threshold(&[p(0.3, 0.1)]).unwrap(), 0.3);
        assert_eq!(best_dice_threshold(&[p(0.1, 0.9), p(0.2, 0.5), p(0.3, 0.1)]).unwrap(), 0.1);
        assert_eq!(best_dice_threshold(&[p(0.1, 0.5), p(0.2, 0.7), p(0.3, 0.7), p(0.4, 0.2)]).unwrap(), 0.3);
        assert!(best_dice_threshold(&[]).is_err());
    }

    #[test]
    fn first_code_matches_predicate() {
        assert_eq!(first_code_at_least(0.0), 0);
        assert_eq!(first_code_at_least(1.0), 65535);
        assert_eq!(first_code_at_least(0.8), 52428);
        assert_eq!(first_code_at_least(1.5), 65536);
    }
}
