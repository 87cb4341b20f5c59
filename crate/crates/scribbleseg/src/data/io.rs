//! PNG encodings and resize helpers.
//!
//! Images are 8-bit RGB; dense ground truth is 8-bit grayscale {0, 255};
//! trimaps are 8-bit grayscale {0 background, 128 unknown, 255 foreground}.
//! All three round-trip losslessly.

use super::{ManifestEntry, Mask, PixelLabel, Sample, WeakLabelMap};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use image::{DynamicImage, GrayImage, RgbImage};
use std::path::Path;

pub fn save_image_png(path: &Path, image: &Tensor) -> Result<()> {
    let (h, w) = (image.shape[1], image.shape[2]);
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [0, 1, 2].map(|c| {
                (image.data[c * h * w + y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8
            });
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img.save(path).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_image_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let rgb = match img {
        DynamicImage::ImageRgb8(rgb) => rgb,
        other => other.to_rgb8(),
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let px = rgb.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                data[c * h * w + y * w + x] = px[c] as f64 / 255.0;
            }
        }
    }
    Tensor::new(vec![3, h, w], data)
}

pub fn save_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let mut img = GrayImage::new(mask.w as u32, mask.h as u32);
    for y in 0..mask.h {
        for x in 0..mask.w {
            img.put_pixel(x as u32, y as u32, image::Luma([if mask.at(y, x) { 255 } else { 0 }]));
        }
    }
    img.save(path).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_mask_png(path: &Path) -> Result<Mask> {
    let gray = load_gray(path)?;
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut mask = Mask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            match gray.get_pixel(x as u32, y as u32)[0] {
                0 => {}
                255 => mask.data[y * w + x] = true,
                v => {
                    return Err(Error::format(
                        path,
                        format!("ground-truth value {v} is not in {{0, 255}}"),
                    ))
                }
            }
        }
    }
    Ok(mask)
}

pub fn save_trimap_png(path: &Path, trimap: &WeakLabelMap) -> Result<()> {
    let mut img = GrayImage::new(trimap.w as u32, trimap.h as u32);
    for y in 0..trimap.h {
        for x in 0..trimap.w {
            img.put_pixel(x as u32, y as u32, image::Luma([trimap.at(y, x).to_u8()]));
        }
    }
    img.save(path).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_trimap_png(path: &Path) -> Result<WeakLabelMap> {
    let gray = load_gray(path)?;
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut trimap = WeakLabelMap::unknown(h, w);
    for y in 0..h {
        for x in 0..w {
            let v = gray.get_pixel(x as u32, y as u32)[0];
            trimap.labels[y * w + x] =
                PixelLabel::from_u8(v).map_err(|_| {
                    Error::format(path, format!("trimap value {v} is not in {{0, 128, 255}}"))
                })?;
        }
    }
    Ok(trimap)
}

fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(match img {
        DynamicImage::ImageLuma8(g) => g,
        other => other.to_luma8(),
    })
}

pub fn save_sample(
    sample: &Sample,
    image_path: &Path,
    gt_path: Option<&Path>,
    trimap_path: Option<&Path>,
) -> Result<()> {
    save_image_png(image_path, &sample.image)?;
    if let (Some(p), Some(gt)) = (gt_path, sample.dense_gt.as_ref()) {
        save_mask_png(p, gt)?;
    }
    if let (Some(p), Some(tm)) = (trimap_path, sample.trimap.as_ref()) {
        save_trimap_png(p, tm)?;
    }
    Ok(())
}

pub fn load_sample(base: &Path, entry: &ManifestEntry) -> Result<Sample> {
    let image = load_image_png(&base.join(&entry.image))?;
    let dense_gt = entry
        .gt
        .as_ref()
        .map(|p| load_mask_png(&base.join(p)))
        .transpose()?;
    let trimap = entry
        .trimap
        .as_ref()
        .map(|p| load_trimap_png(&base.join(p)))
        .transpose()?;
    Ok(Sample {
        id: entry.id.clone(),
        image,
        dense_gt,
        trimap,
    })
}

/// Bilinear resize for image tensors (outside any tape).
pub fn resize_image(image: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = (image.shape[0], image.shape[1], image.shape[2]);
    if (h, w) == (out_h, out_w) {
        return image.clone();
    }
    let axis = |len_in: usize, len_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = len_in as f64 / len_out as f64;
        (0..len_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len_in - 1) as f64);
                let i0 = s.floor() as usize;
                (i0, (i0 + 1).min(len_in - 1), s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(w, out_w);
    let ys = axis(h, out_h);
    let mut data = vec![0.0; c * out_h * out_w];
    for ci in 0..c {
        let plane = &image.data[ci * h * w..(ci + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = (1.0 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1];
                let bot = (1.0 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1];
                data[ci * out_h * out_w + oy * out_w + ox] = (1.0 - fy) * top + fy * bot;
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], data).expect("resized image")
}

fn nearest_axis(len_in: usize, len_out: usize) -> Vec<usize> {
    let scale = len_in as f64 / len_out as f64;
    (0..len_out)
        .map(|o| {
            (((o as f64 + 0.5) * scale - 0.5).round().clamp(0.0, (len_in - 1) as f64)) as usize
        })
        .collect()
}

/// Nearest-neighbor resize; keeps labels exact.
pub fn resize_mask_nearest(mask: &Mask, out_h: usize, out_w: usize) -> Mask {
    if (mask.h, mask.w) == (out_h, out_w) {
        return mask.clone();
    }
    let xs = nearest_axis(mask.w, out_w);
    let ys = nearest_axis(mask.h, out_h);
    let mut out = Mask::new(out_h, out_w);
    for (oy, &sy) in ys.iter().enumerate() {
        for (ox, &sx) in xs.iter().enumerate() {
            out.data[oy * out_w + ox] = mask.at(sy, sx);
        }
    }
    out
}

/// Nearest-neighbor resize; keeps the trimap states exact.
pub fn resize_trimap_nearest(trimap: &WeakLabelMap, out_h: usize, out_w: usize) -> WeakLabelMap {
    if (trimap.h, trimap.w) == (out_h, out_w) {
        return trimap.clone();
    }
    let xs = nearest_axis(trimap.w, out_w);
    let ys = nearest_axis(trimap.h, out_h);
    let mut out = WeakLabelMap::unknown(out_h, out_w);
    for (oy, &sy) in ys.iter().enumerate() {
        for (ox, &sx) in xs.iter().enumerate() {
            out.labels[oy * out_w + ox] = trimap.at(sy, sx);
        }
    }
    out
}
