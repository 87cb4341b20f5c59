//! Dataset plumbing: trimap weak labels, manifests, PNG encodings, the
//! synthetic blob dataset and labeled-pixel statistics.

mod io;
mod stats;
mod synth;

pub use io::{load_sample, resize_image, resize_mask_nearest, resize_trimap_nearest, save_sample};
pub use stats::{labeled_pixel_stats, StatsReport};
pub use synth::{scribble_from_dense, synthesize_dataset, SynthConfig};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

/// Per-pixel weak annotation state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelLabel {
    Background,
    Unknown,
    Foreground,
}

impl PixelLabel {
    /// Grayscale encoding used on disk: 0 background, 128 unknown,
    /// 255 foreground.
    pub fn to_u8(self) -> u8 {
        match self {
            PixelLabel::Background => 0,
            PixelLabel::Unknown => 128,
            PixelLabel::Foreground => 255,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(PixelLabel::Background),
            128 => Ok(PixelLabel::Unknown),
            255 => Ok(PixelLabel::Foreground),
            other => Err(Error::data(format!("invalid trimap value {other}"))),
        }
    }
}

/// Sparse scribble annotation: a trimap over the image grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakLabelMap {
    pub h: usize,
    pub w: usize,
    pub labels: Vec<PixelLabel>,
}

impl WeakLabelMap {
    pub fn unknown(h: usize, w: usize) -> Self {
        WeakLabelMap {
            h,
            w,
            labels: vec![PixelLabel::Unknown; h * w],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> PixelLabel {
        self.labels[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, l: PixelLabel) {
        self.labels[y * self.w + x] = l;
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == PixelLabel::Foreground).count()
    }

    pub fn background_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == PixelLabel::Background).count()
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != PixelLabel::Unknown).count()
    }
}

/// Dense binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(h: usize, w: usize) -> Self {
        Mask {
            h,
            w,
            data: vec![false; h * w],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// One image with optional dense ground truth (evaluation only) and optional
/// trimap. A sample with a trimap belongs to the labeled subset.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    /// `[3, h, w]`, values in [0, 1].
    pub image: Tensor,
    pub dense_gt: Option<Mask>,
    pub trimap: Option<WeakLabelMap>,
}

impl Sample {
    pub fn is_labeled(&self) -> bool {
        self.trimap.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trimap: Option<String>,
    pub split: Split,
}

/// Index of a dataset on disk. Paths are relative to `root`, which is in
/// turn relative to the manifest file location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: String,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, base: PathBuf) -> Self {
        DatasetManifest {
            root: ".".to_string(),
            entries,
            base,
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Loads and validates: unique ids and every referenced file present.
    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let mut manifest: DatasetManifest = serde_json::from_str(&json)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.base = dir.join(&manifest.root);
        let mut seen = BTreeSet::new();
        for entry in &manifest.entries {
            if !seen.insert(entry.id.as_str()) {
                return Err(Error::data(format!("duplicate sample id {}", entry.id)));
            }
            for rel in [Some(&entry.image), entry.gt.as_ref(), entry.trimap.as_ref()]
                .into_iter()
                .flatten()
            {
                let p = manifest.base.join(rel);
                if !p.is_file() {
                    return Err(Error::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("missing dataset file {}", p.display()),
                    )));
                }
            }
        }
        Ok(manifest)
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Loads every sample of a split into memory.
    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        self.split_entries(split)
            .map(|e| load_sample(&self.base, e))
            .collect()
    }
}
