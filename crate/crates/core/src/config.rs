//! Generation hyperparameters and the fish-count distribution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Fish colour-matched to the background patch they cover.
    #[serde(rename = "1", alias = "stage1")]
    One,
    /// Fish colour-matched to high-confidence pseudo-label pixels.
    #[serde(rename = "2", alias = "stage2")]
    Two,
}

/// Discrete distribution over the number of fish planted in one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FishCountDistribution {
    entries: Vec<(u32, f64)>,
}

impl FishCountDistribution {
    pub fn new(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidDistribution("no entries".into()));
        }
        if let Some((c, p)) = entries.iter().find(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "probability {p} for count {c} is not a non-negative number"
            )));
        }
        let sum: f64 = entries.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        entries.sort_by_key(|(c, _)| *c);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidDistribution("duplicate count".into()));
        }
        Ok(Self { entries })
    }

    /// P(count = i) = 1/max for i in 1..=max.
    pub fn uniform(max: u32) -> Result<Self> {
        if max == 0 {
            return Err(Error::InvalidDistribution("uniform:0 is empty".into()));
        }
        let p = 1.0 / max as f64;
        Self::new((1..=max).map(|c| (c, p)).collect())
    }

    pub fn constant(count: u32) -> Self {
        Self {
            entries: vec![(count, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn max_count(&self) -> u32 {
        self.entries
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(c, _)| *c)
            .max()
            .unwrap_or(0)
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut Rng) -> u32 {
        let u = rng.unit();
        let mut cum = 0.0;
        for &(count, p) in &self.entries {
            cum += p;
            if u < cum {
                return count;
            }
        }
        // u landed in the rounding slack above the final cumulative sum.
        self.entries
            .iter()
            .rev()
            .find(|(_, p)| *p > 0.0)
            .map(|(c, _)| *c)
            .unwrap_or(self.entries[0].0)
    }
}

/// Parses `"c:p,c:p,..."` or `"uniform:N"`.
impl FromStr for FishCountDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(n) = s.strip_prefix("uniform:") {
            let n = n
                .trim()
                .parse()
                .map_err(|_| Error::InvalidDistribution(format!("bad uniform bound in {s:?}")))?;
            return Self::uniform(n);
        }
        let entries = s
            .split(',')
            .map(|pair| {
                let (c, p) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidDistribution(format!("expected c:p, got {pair:?}")))?;
                let c = c
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidDistribution(format!("bad count in {pair:?}")))?;
                let p = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidDistribution(format!("bad probability in {pair:?}")))?;
                Ok((c, p))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

impl fmt::Display for FishCountDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .entries
            .iter()
            .map(|(c, p)| format!("{c}:{p}"))
            .collect();
        f.write_str(&parts.join(","))
    }
}

impl TryFrom<String> for FishCountDistribution {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FishCountDistribution> for String {
    fn from(d: FishCountDistribution) -> String {
        d.to_string()
    }
}

/// Every hyperparameter of the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub stage: Stage,
    /// Interval for (scaled fish largest dimension) / (background largest dimension).
    pub size_ratio: (f64, f64),
    pub tps_points: usize,
    /// Displacement bound as a fraction of the asset's width/height.
    pub tps_fraction: f64,
    /// Fraction of the reference region sampled for histogram matching.
    pub hm_sample_fraction: f64,
    pub conf_threshold: f64,
    /// Minimum fraction of image pixels at `conf_threshold` for Stage 2 placement.
    pub min_positive_fraction: f64,
    /// Threshold used to binarize the soft mask into the Stage 2 pseudo-label.
    pub label_threshold: f64,
    pub fish_count: FishCountDistribution,
    pub seed: u64,
    pub max_placement_tries: u32,
    pub alpha_cutoff: u8,
    /// Minimum fraction of a fish's opaque pixels that must land in frame.
    pub min_visibility: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self::deepfish(Stage::One)
    }
}

impl GenConfig {
    /// Smaller fish, up to three per empty habitat.
    pub fn deepfish(stage: Stage) -> Self {
        let fish_count = match stage {
            Stage::One => FishCountDistribution::uniform(3).expect("valid"),
            Stage::Two => FishCountDistribution::new(vec![(0, 0.2), (1, 0.8)]).expect("valid"),
        };
        Self::base(stage, (0.1, 1.0 / 3.0), fish_count)
    }

    /// Larger fish, up to six per empty habitat.
    pub fn deepsalmon(stage: Stage) -> Self {
        let fish_count = match stage {
            Stage::One => FishCountDistribution::uniform(6).expect("valid"),
            Stage::Two => {
                FishCountDistribution::new(vec![(0, 0.2), (1, 0.4), (2, 0.4)]).expect("valid")
            }
        };
        Self::base(stage, (0.2, 2.0 / 3.0), fish_count)
    }

    fn base(stage: Stage, size_ratio: (f64, f64), fish_count: FishCountDistribution) -> Self {
        Self {
            stage,
            size_ratio,
            tps_points: 3,
            tps_fraction: 0.2,
            hm_sample_fraction: 0.10,
            conf_threshold: 0.8,
            min_positive_fraction: 0.01,
            label_threshold: 0.5,
            fish_count,
            seed: 0,
            max_placement_tries: 100,
            alpha_cutoff: 127,
            min_visibility: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let (lo, hi) = self.size_ratio;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("size ratio interval [{lo}, {hi}] must satisfy 0 < lo <= hi"));
        }
        if self.tps_points < 3 {
            return bad(format!("tps_points must be >= 3, got {}", self.tps_points));
        }
        if !(self.tps_fraction > 0.0 && self.tps_fraction <= 0.5) {
            return bad(format!("tps_fraction must be in (0, 0.5], got {}", self.tps_fraction));
        }
        for (name, v) in [
            ("hm_sample_fraction", self.hm_sample_fraction),
            ("min_positive_fraction", self.min_positive_fraction),
            ("min_visibility", self.min_visibility),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        if !(self.conf_threshold > 0.0 && self.conf_threshold < 1.0) {
            return bad(format!("conf_threshold must be in (0, 1), got {}", self.conf_threshold));
        }
        if !(0.0..=1.0).contains(&self.label_threshold) {
            return bad(format!("label_threshold must be in [0, 1], got {}", self.label_threshold));
        }
        if self.max_placement_tries == 0 {
            return bad("max_placement_tries must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    #[test]
    fn presets_carry_published_hyperparameters() {
        let f1 = GenConfig::deepfish(Stage::One);
        assert_eq!(f1.size_ratio, (0.1, 1.0 / 3.0));
        assert_eq!(f1.tps_points, 3);
        assert_eq!(f1.tps_fraction, 0.2);
        assert_eq!(f1.hm_sample_fraction, 0.1);
        assert_eq!(f1.conf_threshold, 0.8);
        assert_eq!(f1.min_positive_fraction, 0.01);
        assert_eq!(f1.fish_count.max_count(), 3);
        assert_eq!(
            GenConfig::deepfish(Stage::Two).fish_count.entries(),
            &[(0, 0.2), (1, 0.8)]
        );
        let s1 = GenConfig::deepsalmon(Stage::One);
        assert_eq!(s1.size_ratio, (0.2, 2.0 / 3.0));
        assert_eq!(s1.fish_count.max_count(), 6);
        assert_eq!(
            GenConfig::deepsalmon(Stage::Two).fish_count.entries(),
            &[(0, 0.2), (1, 0.4), (2, 0.4)]
        );
        f1.validate().unwrap();
        s1.validate().unwrap();
    }

    #[test]
    fn distribution_parsing() {
        let d: FishCountDistribution = "0:0.2, 1:0.8".parse().unwrap();
        assert_eq!(d.entries(), &[(0, 0.2), (1, 0.8)]);
        let u: FishCountDistribution = "uniform:3".parse().unwrap();
        assert_eq!(u.entries().len(), 3);
        assert!("0:0.5,1:0.4".parse::<FishCountDistribution>().is_err());
        assert!("0:0.5,0:0.5".parse::<FishCountDistribution>().is_err());
        assert!("1:-0.5,2:1.5".parse::<FishCountDistribution>().is_err());
        assert!("x".parse::<FishCountDistribution>().is_err());
        let rt: FishCountDistribution = d.to_string().parse().unwrap();
        assert_eq!(rt, d);
    }

    #[test]
    fn single_entry_always_draws_it() {
        let d: FishCountDistribution = "2:1.0".parse().unwrap();
        let mut rng = RngState::new(3, 3).rng();
        assert!((0..1000).all(|_| d.sample(&mut rng) == 2));
    }

    #[test]
    fn draws_follow_the_table() {
        let d = FishCountDistribution::new(vec![(0, 0.2), (1, 0.8)]).unwrap();
        let mut rng = RngState::new(9, 1).rng();
        let n = 200_000;
        let zeros = (0..n).filter(|_| d.sample(&mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - 0.2).abs() < 0.005);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = GenConfig::default();
        c.size_ratio = (0.5, 0.2);
        assert!(c.validate().is_err());
        let mut c = GenConfig::default();
        c.tps_points = 2;
        assert!(c.validate().is_err());
        let mut c = GenConfig::default();
        c.conf_threshold = 1.0;
        assert!(c.validate().is_err());
    }
}
