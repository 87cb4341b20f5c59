//! Synthetic scribble-annotated blob dataset.
//!
//! Images are value-noise backgrounds with one or two smooth blobs (random
//! radial perturbations of rotated ellipses) in a contrasting palette. Dense
//! ground truth is the blob mask; a configurable fraction of the train split
//! carries scribble trimaps whose overall labeled-pixel share lands around
//! 1.9 percent of the split.

use super::io::{save_image_png, save_mask_png, save_trimap_png};
use super::{DatasetManifest, ManifestEntry, Mask, PixelLabel, Split, WeakLabelMap};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;
use std::path::Path;

/// Fraction of the scribble budget spent on the foreground stroke.
const FG_BUDGET_SHARE: f64 = 0.42;
/// Per-image labeled share is drawn uniformly from this range. With roughly
/// half the train split labeled this puts the split-wide share near 1.9%.
const PER_IMAGE_SHARE: (f64, f64) = (0.032, 0.042);

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub size: (usize, usize),
    /// Fraction of train samples that receive a trimap.
    pub labeled_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 200,
            n_test: 50,
            size: (64, 64),
            labeled_fraction: 750.0 / 1450.0,
        }
    }
}

/// Smoothstep-interpolated lattice noise in [-amp, amp].
fn value_noise(h: usize, w: usize, cell: usize, amp: f64, rng: &mut Rng) -> Vec<f64> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let v = y as f64 / cell as f64;
        let y0 = v.floor() as usize;
        let fy = smooth(v - y0 as f64);
        for x in 0..w {
            let u = x as f64 / cell as f64;
            let x0 = u.floor() as usize;
            let fx = smooth(u - x0 as f64);
            let l = |yy: usize, xx: usize| lattice[yy * gw + xx];
            let top = l(y0, x0) * (1.0 - fx) + l(y0, x0 + 1) * fx;
            let bot = l(y0 + 1, x0) * (1.0 - fx) + l(y0 + 1, x0 + 1) * fx;
            out[y * w + x] = amp * (top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

struct Blob {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos_t: f64,
    sin_t: f64,
    harmonics: [(f64, f64, f64); 3], // (k, amplitude, phase)
}

impl Blob {
    fn sample(h: usize, w: usize, rng: &mut Rng) -> Self {
        let m = h.min(w) as f64;
        let theta = rng.uniform(0.0, std::f64::consts::TAU);
        Blob {
            cx: rng.uniform(0.25, 0.75) * w as f64,
            cy: rng.uniform(0.25, 0.75) * h as f64,
            rx: rng.uniform(0.14, 0.26) * m,
            ry: rng.uniform(0.14, 0.26) * m,
            cos_t: theta.cos(),
            sin_t: theta.sin(),
            harmonics: [
                (2.0, rng.uniform(0.0, 0.12), rng.uniform(0.0, std::f64::consts::TAU)),
                (3.0, rng.uniform(0.0, 0.10), rng.uniform(0.0, std::f64::consts::TAU)),
                (4.0, rng.uniform(0.0, 0.08), rng.uniform(0.0, std::f64::consts::TAU)),
            ],
        }
    }

    /// Normalized radial distance; inside when <= the perturbed boundary.
    fn radial(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let xr = (self.cos_t * dx + self.sin_t * dy) / self.rx;
        let yr = (-self.sin_t * dx + self.cos_t * dy) / self.ry;
        ((xr * xr + yr * yr).sqrt(), yr.atan2(xr))
    }

    fn boundary(&self, phi: f64) -> f64 {
        let mut b = 1.0;
        for &(k, a, ps) in &self.harmonics {
            b += a * (k * phi + ps).sin();
        }
        b
    }

    fn inside(&self, x: f64, y: f64) -> (bool, f64) {
        let (rho, phi) = self.radial(x, y);
        let b = self.boundary(phi);
        (rho <= b, rho / b)
    }
}

/// One image plus its dense mask. Blobs are warm, smooth, radially shaded
/// regions; the background carries cool noise plus a few small warm
/// distractor patches (flat-textured, unshaded) that overlap the blob
/// palette, so color alone does not solve the task.
fn generate_image(h: usize, w: usize, rng: &mut Rng) -> (Tensor, Mask) {
    let bg_base = [
        rng.uniform(0.32, 0.55),
        rng.uniform(0.35, 0.58),
        rng.uniform(0.38, 0.62),
    ];
    let blob_base = [
        rng.uniform(0.50, 0.78),
        rng.uniform(0.28, 0.48),
        rng.uniform(0.24, 0.44),
    ];
    let n_blobs = if rng.next_f64() < 0.35 { 2 } else { 1 };
    let blobs: Vec<Blob> = (0..n_blobs).map(|_| Blob::sample(h, w, rng)).collect();

    // small warm patches in the background; part of the background class
    let n_distract = 2 + rng.next_below(3);
    let distractors: Vec<Blob> = (0..n_distract)
        .map(|_| {
            let m = h.min(w) as f64;
            let theta = rng.uniform(0.0, std::f64::consts::TAU);
            Blob {
                cx: rng.uniform(0.1, 0.9) * w as f64,
                cy: rng.uniform(0.1, 0.9) * h as f64,
                rx: rng.uniform(0.04, 0.09) * m,
                ry: rng.uniform(0.04, 0.09) * m,
                cos_t: theta.cos(),
                sin_t: theta.sin(),
                harmonics: [
                    (2.0, rng.uniform(0.0, 0.2), rng.uniform(0.0, std::f64::consts::TAU)),
                    (3.0, 0.0, 0.0),
                    (4.0, 0.0, 0.0),
                ],
            }
        })
        .collect();
    let distract_base = [
        blob_base[0] + rng.uniform(-0.08, 0.08),
        blob_base[1] + rng.uniform(-0.08, 0.08),
        blob_base[2] + rng.uniform(-0.08, 0.08),
    ];

    let bg_noise: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let coarse = value_noise(h, w, 8, 0.16, rng);
            let fine = value_noise(h, w, 4, 0.06, rng);
            coarse.iter().zip(&fine).map(|(a, b)| a + b).collect()
        })
        .collect();
    let blob_noise: Vec<Vec<f64>> = (0..3).map(|_| value_noise(h, w, 4, 0.08, rng)).collect();
    let distract_noise: Vec<f64> = value_noise(h, w, 2, 0.10, rng);

    let mut data = vec![0.0; 3 * h * w];
    let mut mask = Mask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut hit: Option<f64> = None;
            for blob in &blobs {
                let (inside, rho) = blob.inside(fx, fy);
                if inside {
                    hit = Some(hit.map_or(rho, |r: f64| r.min(rho)));
                }
            }
            mask.data[i] = hit.is_some();
            let distracted = hit.is_none() && distractors.iter().any(|d| d.inside(fx, fy).0);
            for c in 0..3 {
                let v = match hit {
                    Some(rho) => (blob_base[c] + blob_noise[c][i]) * (1.0 - 0.18 * rho),
                    None if distracted => distract_base[c] + distract_noise[i],
                    None => bg_base[c] + bg_noise[c][i],
                };
                data[c * h * w + y * w + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    (Tensor::new(vec![3, h, w], data).expect("synthetic image"), mask)
}

/// Momentum random walk painting a width-1..2 stroke restricted to `region`,
/// stopping once `budget` new pixels are labeled.
fn paint_stroke(
    region: &[bool],
    h: usize,
    w: usize,
    budget: usize,
    rng: &mut Rng,
    trimap: &mut WeakLabelMap,
    label: PixelLabel,
) -> usize {
    if budget == 0 {
        return 0;
    }
    let pixels: Vec<usize> = (0..h * w).filter(|&i| region[i]).collect();
    if pixels.is_empty() {
        return 0;
    }
    let width2 = rng.next_f64() < 0.5;
    let start = pixels[rng.next_below(pixels.len())];
    let mut px = (start % w) as f64 + 0.5;
    let mut py = (start / w) as f64 + 0.5;
    let mut theta = rng.uniform(0.0, std::f64::consts::TAU);
    let mut painted = 0usize;
    let max_steps = budget * 6 + 32;

    for _ in 0..max_steps {
        let ix = px as usize;
        let iy = py as usize;
        let offsets: &[(usize, usize)] = if width2 {
            &[(0, 0), (0, 1), (1, 0), (1, 1)]
        } else {
            &[(0, 0)]
        };
        for &(dy, dx) in offsets {
            let (yy, xx) = (iy + dy, ix + dx);
            if yy < h && xx < w && region[yy * w + xx] {
                let i = yy * w + xx;
                if trimap.labels[i] != label {
                    trimap.labels[i] = label;
                    painted += 1;
                    if painted >= budget {
                        return painted;
                    }
                }
            }
        }
        theta += rng.uniform(-0.4, 0.4);
        let mut placed = false;
        for attempt in 0..8 {
            let nx = px + theta.cos();
            let ny = py + theta.sin();
            let inside = nx >= 0.0
                && ny >= 0.0
                && (nx as usize) < w
                && (ny as usize) < h
                && region[(ny as usize) * w + nx as usize];
            if inside {
                px = nx;
                py = ny;
                placed = true;
                break;
            }
            let _ = attempt;
            theta = rng.uniform(0.0, std::f64::consts::TAU);
        }
        if !placed {
            // stuck in a pocket; hop to a fresh region pixel
            let p = pixels[rng.next_below(pixels.len())];
            px = (p % w) as f64 + 0.5;
            py = (p / w) as f64 + 0.5;
            theta = rng.uniform(0.0, std::f64::consts::TAU);
        }
    }
    painted
}

/// Draws one foreground stroke inside the mask and one background stroke in
/// its complement. Stroke pixels never cross the object boundary and the
/// labeled share stays at a few percent of the image.
pub fn scribble_from_dense(gt: &Mask, rng: &mut Rng) -> Result<WeakLabelMap> {
    let (h, w) = (gt.h, gt.w);
    let fg_area = gt.count();
    let bg_area = h * w - fg_area;
    if fg_area == 0 || bg_area == 0 {
        return Err(Error::data(
            "scribble_from_dense: mask must contain both foreground and background",
        ));
    }
    let mut trimap = WeakLabelMap::unknown(h, w);
    let budget = ((h * w) as f64 * rng.uniform(PER_IMAGE_SHARE.0, PER_IMAGE_SHARE.1)).round() as usize;
    let fg_budget = ((budget as f64 * FG_BUDGET_SHARE).round() as usize)
        .min((fg_area as f64 * 0.4).round() as usize)
        .max(1);
    let fg_region: Vec<bool> = gt.data.clone();
    let painted_fg = paint_stroke(&fg_region, h, w, fg_budget, rng, &mut trimap, PixelLabel::Foreground);
    let bg_region: Vec<bool> = gt.data.iter().map(|&b| !b).collect();
    let bg_budget = budget.saturating_sub(painted_fg).max(1);
    paint_stroke(&bg_region, h, w, bg_budget, rng, &mut trimap, PixelLabel::Background);
    Ok(trimap)
}

/// Generates the full dataset on disk: `images/`, `gt/`, `trimaps/` and
/// `manifest.json` under `out_dir`. The first `ceil(labeled_fraction *
/// n_train)` train samples receive trimaps; test samples carry dense ground
/// truth only.
pub fn synthesize_dataset(out_dir: &Path, cfg: &SynthConfig, rng: &mut Rng) -> Result<DatasetManifest> {
    if !(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0) {
        return Err(Error::config(format!(
            "labeled_fraction {} outside (0, 1]",
            cfg.labeled_fraction
        )));
    }
    let (h, w) = cfg.size;
    if h == 0 || w == 0 {
        return Err(Error::config("synthetic image size must be positive"));
    }
    for sub in ["images", "gt", "trimaps"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    let n_labeled = (cfg.labeled_fraction * cfg.n_train as f64).ceil() as usize;
    let mut entries = Vec::with_capacity(cfg.n_train + cfg.n_test);

    for i in 0..cfg.n_train + cfg.n_test {
        let is_train = i < cfg.n_train;
        let id = if is_train {
            format!("train_{:04}", i)
        } else {
            format!("test_{:04}", i - cfg.n_train)
        };
        let (image, mask) = generate_image(h, w, rng);
        let image_rel = format!("images/{id}.png");
        let gt_rel = format!("gt/{id}.png");
        save_image_png(&out_dir.join(&image_rel), &image)?;
        save_mask_png(&out_dir.join(&gt_rel), &mask)?;

        let trimap_rel = if is_train && i < n_labeled {
            let trimap = scribble_from_dense(&mask, rng)?;
            let rel = format!("trimaps/{id}.png");
            save_trimap_png(&out_dir.join(&rel), &trimap)?;
            Some(rel)
        } else {
            None
        };
        entries.push(ManifestEntry {
            id,
            image: image_rel,
            gt: Some(gt_rel),
            trimap: trimap_rel,
            split: if is_train { Split::Train } else { Split::Test },
        });
    }

    let manifest = DatasetManifest::new(entries, out_dir.to_path_buf());
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scribbles_respect_the_boundary() {
        let mut rng = Rng::new(5);
        for round in 0..20 {
            let (image, mask) = generate_image(64, 64, &mut rng);
            assert!(image.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(mask.count() > 0 && mask.count() < 64 * 64);
            let tm = scribble_from_dense(&mask, &mut rng).unwrap();
            for i in 0..64 * 64 {
                match tm.labels[i] {
                    PixelLabel::Foreground => assert!(mask.data[i], "round {round}: fg outside gt"),
                    PixelLabel::Background => assert!(!mask.data[i], "round {round}: bg inside gt"),
                    PixelLabel::Unknown => {}
                }
            }
            let share = tm.labeled_count() as f64 / (64.0 * 64.0);
            assert!(share <= 0.05, "round {round}: labeled share {share}");
            assert!(tm.foreground_count() > 0 && tm.background_count() > 0);
        }
    }

    #[test]
    fn degenerate_mask_rejected() {
        let mut rng = Rng::new(1);
        let empty = Mask::new(8, 8);
        assert!(scribble_from_dense(&empty, &mut rng).is_err());
        let mut full = Mask::new(8, 8);
        full.data.iter_mut().for_each(|b| *b = true);
        assert!(scribble_from_dense(&full, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_trimap() {
        let mut rng = Rng::new(3);
        let (_, mask) = generate_image(32, 32, &mut rng);
        let a = scribble_from_dense(&mask, &mut Rng::new(42)).unwrap();
        let b = scribble_from_dense(&mask, &mut Rng::new(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_layout_and_split_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_train: 8,
            n_test: 3,
            size: (32, 32),
            labeled_fraction: 0.5,
        };
        let mut rng = Rng::new(9);
        let manifest = synthesize_dataset(dir.path(), &cfg, &mut rng).unwrap();
        assert_eq!(manifest.split_entries(Split::Train).count(), 8);
        assert_eq!(manifest.split_entries(Split::Test).count(), 3);
        let labeled = manifest
            .split_entries(Split::Train)
            .filter(|e| e.trimap.is_some())
            .count();
        assert_eq!(labeled, 4);
        assert!(manifest
            .split_entries(Split::Test)
            .all(|e| e.trimap.is_none() && e.gt.is_some()));
        // reload passes validation and samples decode
        let loaded = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        let samples = loaded.load_split(Split::Train).unwrap();
        assert_eq!(samples.len(), 8);
        assert!(samples.iter().filter(|s| s.is_labeled()).count() == 4);
    }
}
