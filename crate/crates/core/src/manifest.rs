//! Run manifest: every sampled parameter of a generation run, enough to
//! regenerate each output byte for byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::affine::AffineParams;
use crate::config::{GenConfig, Stage};
use crate::error::{Error, Result};
use crate::histmatch::ReferenceRegion;
use crate::rng::RngState;
use crate::tps::ControlPointSet;

pub const MANIFEST_FORMAT: &str = "fishforge-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Order in which every fish is transformed.
pub const TRANSFORM_ORDER: [&str; 3] = ["affine", "tps", "histogram_match"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: PathBuf,
    pub sha256: String,
    pub width: u32,
    pub height: u32,
}

/// Histogram-matching reference as recorded: where it came from and the
/// exact sampled counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub region: ReferenceRegion,
    pub fraction: f64,
    pub sample_size: u64,
    /// Nonzero `(level, count)` pairs for R, G and B.
    pub histogram: [Vec<(u8, u64)>; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FishRecord {
    /// Index into the manifest's asset pool.
    pub asset: usize,
    pub steps: Vec<String>,
    pub affine: AffineParams,
    pub tps: ControlPointSet,
    /// Background position of the warped fish canvas' top-left pixel.
    pub origin: (i64, i64),
    pub reference: ReferenceRecord,
}

/// What was generated for one image, independent of file locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    /// Drawn fish count; 0 when gated.
    pub fish_count: u32,
    /// Stage 2 only: too few confident positives, nothing was placed.
    #[serde(default)]
    pub gated: bool,
    /// Stage 2 only: threshold that produced the pseudo-label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_threshold: Option<f64>,
    pub fish: Vec<FishRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stem: String,
    pub round: u32,
    pub rng: RngState,
    pub input: InputRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_mask: Option<FileRef>,
    pub output_image: String,
    pub output_mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_instances: Option<String>,
    pub image_sha256: String,
    pub mask_sha256: String,
    #[serde(flatten)]
    pub example: ExampleRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub input: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub stage: Stage,
    pub seed: u64,
    pub rounds: u32,
    pub config: GenConfig,
    pub assets: Vec<FileRef>,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub skipped: Vec<SkipRecord>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(s).map_err(|e| Error::Manifest(e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Manifest(format!(
                "unsupported manifest format {:?}",
                m.format
            )));
        }
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = self.to_json()?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::Write {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_json(&s)
    }

    pub fn placed_fish(&self) -> usize {
        self.entries.iter().map(|e| e.example.fish.len()).sum()
    }
}
