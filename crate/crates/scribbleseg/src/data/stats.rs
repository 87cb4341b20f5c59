//! Labeled-pixel statistics over the train split.

use super::io::load_trimap_png;
use super::{DatasetManifest, Split};
use crate::error::Result;
use std::io::Write;
use std::path::Path;

const BIN_WIDTH: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct StatsReport {
    /// Per train image: (id, labeled percent). Unlabeled images count as 0.
    pub per_image: Vec<(String, f64)>,
    /// Histogram over 0.5 percent bins: (bin lower edge, image count).
    pub histogram: Vec<(f64, usize)>,
    /// Mean of the per-image percentages.
    pub mean_percent: f64,
    /// Total labeled pixels over total pixels of the split.
    pub overall_percent: f64,
}

/// Computes per-image labeled percentages, a histogram in 0.5 percent bins
/// and the split-wide share.
pub fn labeled_pixel_stats(manifest: &DatasetManifest) -> Result<StatsReport> {
    let mut per_image = Vec::new();
    let mut labeled_px = 0usize;
    let mut total_px = 0usize;
    for entry in manifest.split_entries(Split::Train) {
        let (pct, labeled, total) = match &entry.trimap {
            Some(rel) => {
                let tm = load_trimap_png(&manifest.base_dir().join(rel))?;
                let labeled = tm.labeled_count();
                let total = tm.h * tm.w;
                (100.0 * labeled as f64 / total as f64, labeled, total)
            }
            None => {
                // image decode is only needed for the pixel count
                let img = super::io::load_image_png(&manifest.base_dir().join(&entry.image))?;
                (0.0, 0, img.shape[1] * img.shape[2])
            }
        };
        labeled_px += labeled;
        total_px += total;
        per_image.push((entry.id.clone(), pct));
    }

    let max_bin = per_image
        .iter()
        .map(|(_, p)| (p / BIN_WIDTH).floor() as usize)
        .max()
        .unwrap_or(0);
    let mut histogram = vec![0usize; max_bin + 1];
    for (_, p) in &per_image {
        histogram[(p / BIN_WIDTH).floor() as usize] += 1;
    }
    let histogram: Vec<(f64, usize)> = histogram
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * BIN_WIDTH, c))
        .collect();

    let mean_percent = if per_image.is_empty() {
        0.0
    } else {
        per_image.iter().map(|(_, p)| p).sum::<f64>() / per_image.len() as f64
    };
    let overall_percent = if total_px == 0 {
        0.0
    } else {
        100.0 * labeled_px as f64 / total_px as f64
    };
    Ok(StatsReport {
        per_image,
        histogram,
        mean_percent,
        overall_percent,
    })
}

impl StatsReport {
    /// CSV layout: `record,id,value` with one `image` row per train sample,
    /// one `bin` row per histogram bucket, and `mean`/`overall` summary rows
    /// rounded to two decimals.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "record,id,value")?;
        for (id, pct) in &self.per_image {
            writeln!(f, "image,{id},{pct}")?;
        }
        for &(lo, count) in &self.histogram {
            writeln!(f, "bin,{lo}-{},{count}", lo + BIN_WIDTH)?;
        }
        writeln!(f, "mean,,{:.2}", self.mean_percent)?;
        writeln!(f, "overall,,{:.2}", self.overall_percent)?;
        f.flush()?;
        Ok(())
    }
}
