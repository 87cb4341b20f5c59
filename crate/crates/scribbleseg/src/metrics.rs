//! Dice and IoU over binary masks.

use crate::data::Mask;
use crate::error::{Error, Result};

fn counts(pred: &Mask, gt: &Mask) -> Result<(usize, usize, usize)> {
    if (pred.h, pred.w) != (gt.h, gt.w) {
        return Err(Error::shape(format!(
            "mask size mismatch: {}x{} vs {}x{}",
            pred.h, pred.w, gt.h, gt.w
        )));
    }
    let mut inter = 0usize;
    let mut p = 0usize;
    let mut g = 0usize;
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        p += a as usize;
        g += b as usize;
        inter += (a && b) as usize;
    }
    Ok((inter, p, g))
}

/// `2|P∩G| / (|P| + |G|)`; two empty masks count as a perfect 1.0.
pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    let (inter, p, g) = counts(pred, gt)?;
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// `|P∩G| / |P∪G|`; two empty masks count as a perfect 1.0.
pub fn iou(pred: &Mask, gt: &Mask) -> Result<f64> {
    let (inter, p, g) = counts(pred, gt)?;
    let union = p + g - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Fraction of background pixels predicted as foreground.
pub fn false_positive_rate(pred: &Mask, gt: &Mask) -> Result<f64> {
    let (inter, p, g) = counts(pred, gt)?;
    let bg = pred.data.len() - g;
    if bg == 0 {
        return Ok(0.0);
    }
    Ok((p - inter) as f64 / bg as f64)
}
