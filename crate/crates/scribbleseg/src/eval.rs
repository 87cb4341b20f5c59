//! Model evaluation: per-image Dice/IoU and dataset aggregates.

use crate::autodiff::Tape;
use crate::data::{Mask, Sample};
use crate::error::{Error, Result};
use crate::metrics::{dice, iou};
use crate::model::SegModel;
use crate::rng::Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub id: String,
    pub dice: f64,
    pub iou: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mdice: f64,
    pub miou: f64,
    pub threshold: f64,
    pub checkpoint_id: String,
}

/// Binarization: ties break to foreground.
pub fn binarize(pred: &[f64], h: usize, w: usize, threshold: f64) -> Mask {
    Mask {
        h,
        w,
        data: pred.iter().map(|&v| v >= threshold).collect(),
    }
}

/// Inference-mode probability map for one image, `h*w` row-major values.
pub fn predict_map(model: &SegModel, sample: &Sample) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false)?;
    let img = tape.constant(sample.image.clone())?;
    // inference mode: dropout disabled, rng untouched
    let mut rng = Rng::new(0);
    let pred = model.forward(&mut tape, &bound, img, false, &mut rng)?;
    Ok(tape.data(pred).to_vec())
}

/// Evaluation over samples with a caller-supplied prediction function; used
/// directly by tests to substitute oracle predictors.
pub fn evaluate_with<F>(
    predict: F,
    samples: &[Sample],
    threshold: f64,
    checkpoint_id: &str,
) -> Result<EvalReport>
where
    F: Fn(&Sample) -> Result<Vec<f64>> + Sync,
{
    if samples.is_empty() {
        return Err(Error::data("evaluate: no samples in split"));
    }
    for s in samples {
        if s.dense_gt.is_none() {
            return Err(Error::data(format!("evaluate: sample {} has no dense ground truth", s.id)));
        }
    }
    let mut rows: Vec<EvalRow> = samples
        .par_iter()
        .map(|s| {
            let gt = s.dense_gt.as_ref().expect("checked above");
            let pred_vals = predict(s)?;
            if pred_vals.len() != gt.h * gt.w {
                return Err(Error::shape(format!(
                    "evaluate: prediction length {} vs ground truth {}x{}",
                    pred_vals.len(),
                    gt.h,
                    gt.w
                )));
            }
            let pred = binarize(&pred_vals, gt.h, gt.w, threshold);
            Ok(EvalRow {
                id: s.id.clone(),
                dice: dice(&pred, gt)?,
                iou: iou(&pred, gt)?,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let n = rows.len() as f64;
    let mdice = rows.iter().map(|r| r.dice).sum::<f64>() / n;
    let miou = rows.iter().map(|r| r.iou).sum::<f64>() / n;
    Ok(EvalReport {
        rows,
        mdice,
        miou,
        threshold,
        checkpoint_id: checkpoint_id.to_string(),
    })
}

/// Standard model evaluation: inference per image (fanned out over a thread
/// pool, each image on its own tape), binarize at `threshold`, aggregate.
pub fn evaluate(
    model: &SegModel,
    samples: &[Sample],
    threshold: f64,
    checkpoint_id: &str,
) -> Result<EvalReport> {
    evaluate_with(|s| predict_map(model, s), samples, threshold, checkpoint_id)
}

impl EvalReport {
    /// CSV layout: header `id,dice,iou`, one row per image sorted by id, and
    /// a final `mean` row carrying mDice and mIoU.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "id,dice,iou")?;
        for row in &self.rows {
            writeln!(f, "{},{},{}", row.id, row.dice, row.iou)?;
        }
        writeln!(f, "mean,{},{}", self.mdice, self.miou)?;
        f.flush()?;
        Ok(())
    }
}
