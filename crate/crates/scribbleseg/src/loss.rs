//! Weakly- and semi-supervised loss suite.
//!
//! All cross-entropy terms are the standard negative form (losses are
//! non-negative) with log inputs clamped to `[EPS, 1-EPS]`. Per-pixel losses
//! are averaged image-wise; batch functions then average image values.

use crate::autodiff::{Tape, Tensor, TensorId};
use crate::data::{PixelLabel, WeakLabelMap};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Clamp bound for every log input.
pub const EPS: f64 = 1e-7;

/// Loss components for one batch (or one image), with the tape handle of the
/// total so callers can backpropagate.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub total: f64,
    pub components: BTreeMap<String, f64>,
    pub batch_had_labels: bool,
    pub total_id: TensorId,
}

fn check_pred_shape(tape: &Tape, pred: TensorId, labels: &WeakLabelMap, what: &str) -> Result<()> {
    let s = tape.shape(pred);
    if s != [1, labels.h, labels.w] {
        return Err(Error::shape(format!(
            "{what}: prediction {s:?} vs labels [1, {}, {}]",
            labels.h, labels.w
        )));
    }
    Ok(())
}

fn mask_const(tape: &mut Tape, labels: &WeakLabelMap, which: PixelLabel) -> Result<TensorId> {
    let data: Vec<f64> = labels
        .labels
        .iter()
        .map(|&l| if l == which { 1.0 } else { 0.0 })
        .collect();
    tape.constant(Tensor::new(vec![1, labels.h, labels.w], data)?)
}

/// Binary cross-entropy over the labeled (non-unknown) pixels of one image.
/// Unknown pixels contribute nothing; an empty labeled set gives 0.
pub fn partial_ce(tape: &mut Tape, pred: TensorId, labels: &WeakLabelMap) -> Result<TensorId> {
    check_pred_shape(tape, pred, labels, "partial_ce")?;
    let n_labeled = labels.labeled_count();
    if n_labeled == 0 {
        return tape.scalar_const(0.0);
    }
    let fg = mask_const(tape, labels, PixelLabel::Foreground)?;
    let bg = mask_const(tape, labels, PixelLabel::Background)?;

    let p = tape.clamp(pred, EPS, 1.0 - EPS)?;
    let logp = tape.log(p)?;
    let fg_term = tape.mul(logp, fg)?;
    let fg_sum = tape.sum(fg_term)?;

    let q = tape.rsub_scalar(1.0, pred)?;
    let q = tape.clamp(q, EPS, 1.0 - EPS)?;
    let logq = tape.log(q)?;
    let bg_term = tape.mul(logq, bg)?;
    let bg_sum = tape.sum(bg_term)?;

    let s = tape.add(fg_sum, bg_sum)?;
    tape.mul_scalar(s, -1.0 / n_labeled as f64)
}

/// Cross-entropy restricted to the foreground scribble pixels, where the
/// target is identically one: the mean of `-log(pred)` over those pixels.
/// An empty foreground set gives 0.
pub fn sparse_foreground_loss(
    tape: &mut Tape,
    pred: TensorId,
    labels: &WeakLabelMap,
) -> Result<TensorId> {
    check_pred_shape(tape, pred, labels, "sparse_foreground_loss")?;
    let n_fg = labels.foreground_count();
    if n_fg == 0 {
        return tape.scalar_const(0.0);
    }
    let fg = mask_const(tape, labels, PixelLabel::Foreground)?;
    let p = tape.clamp(pred, EPS, 1.0 - EPS)?;
    let logp = tape.log(p)?;
    let fg_term = tape.mul(logp, fg)?;
    let fg_sum = tape.sum(fg_term)?;
    tape.mul_scalar(fg_sum, -1.0 / n_fg as f64)
}

/// Weakly-supervised total for one image: `l_p + alpha * l_f`.
pub fn weak_loss(
    tape: &mut Tape,
    pred: TensorId,
    labels: &WeakLabelMap,
    alpha: f64,
) -> Result<LossReport> {
    let lp = partial_ce(tape, pred, labels)?;
    let lf = sparse_foreground_loss(tape, pred, labels)?;
    let scaled = tape.mul_scalar(lf, alpha)?;
    let total = tape.add(lp, scaled)?;
    let mut components = BTreeMap::new();
    components.insert("l_p".to_string(), tape.scalar_value(lp));
    components.insert("l_f".to_string(), tape.scalar_value(lf));
    components.insert("l_weak".to_string(), tape.scalar_value(total));
    Ok(LossReport {
        total: tape.scalar_value(total),
        components,
        batch_had_labels: labels.labeled_count() > 0,
        total_id: total,
    })
}

/// Mean absolute difference between the two prediction maps of one image.
/// The teacher side must be a constant (gradient-detached) tensor.
pub fn consistency_loss(
    tape: &mut Tape,
    student_pred: TensorId,
    teacher_pred: TensorId,
) -> Result<TensorId> {
    if tape.shape(student_pred) != tape.shape(teacher_pred) {
        return Err(Error::shape(format!(
            "consistency_loss: student {:?} vs teacher {:?}",
            tape.shape(student_pred),
            tape.shape(teacher_pred)
        )));
    }
    let diff = tape.sub(student_pred, teacher_pred)?;
    let a = tape.abs(diff)?;
    tape.mean(a)
}

/// Batch gating for semi-supervised training: with any labeled sample in the
/// batch the total is `mean(l_weak over labeled) + beta1 * mean(l_c over
/// all)`; a fully unlabeled batch uses `beta2 * mean(l_c over all)`.
#[allow(clippy::too_many_arguments)]
pub fn semi_loss(
    tape: &mut Tape,
    student_preds: &[TensorId],
    teacher_preds: &[TensorId],
    labels: &[Option<&WeakLabelMap>],
    alpha: f64,
    beta1: f64,
    beta2: f64,
) -> Result<LossReport> {
    let n = student_preds.len();
    if n == 0 || teacher_preds.len() != n || labels.len() != n {
        return Err(Error::config(format!(
            "semi_loss: inconsistent batch arity ({n} preds, {} teacher, {} labels)",
            teacher_preds.len(),
            labels.len()
        )));
    }

    let mut cons_sum: Option<TensorId> = None;
    let mut cons_vals = Vec::with_capacity(n);
    for i in 0..n {
        let c = consistency_loss(tape, student_preds[i], teacher_preds[i])?;
        cons_vals.push(tape.scalar_value(c));
        cons_sum = Some(match cons_sum {
            Some(acc) => tape.add(acc, c)?,
            None => c,
        });
    }
    let cons_mean = tape.mul_scalar(cons_sum.expect("non-empty batch"), 1.0 / n as f64)?;
    let l_c = tape.scalar_value(cons_mean);

    let labeled_idx: Vec<usize> = (0..n).filter(|&i| labels[i].is_some()).collect();
    let batch_had_labels = !labeled_idx.is_empty();

    let mut components = BTreeMap::new();
    components.insert("l_c".to_string(), l_c);

    let total_id = if batch_had_labels {
        let mut weak_sum: Option<TensorId> = None;
        let (mut lp_sum, mut lf_sum, mut lw_sum) = (0.0, 0.0, 0.0);
        for &i in &labeled_idx {
            let report = weak_loss(tape, student_preds[i], labels[i].unwrap(), alpha)?;
            lp_sum += report.components["l_p"];
            lf_sum += report.components["l_f"];
            lw_sum += report.components["l_weak"];
            weak_sum = Some(match weak_sum {
                Some(acc) => tape.add(acc, report.total_id)?,
                None => report.total_id,
            });
        }
        let n_lab = labeled_idx.len() as f64;
        let weak_mean = tape.mul_scalar(weak_sum.expect("labeled batch"), 1.0 / n_lab)?;
        components.insert("l_p".to_string(), lp_sum / n_lab);
        components.insert("l_f".to_string(), lf_sum / n_lab);
        components.insert("l_weak".to_string(), lw_sum / n_lab);
        let scaled_c = tape.mul_scalar(cons_mean, beta1)?;
        tape.add(weak_mean, scaled_c)?
    } else {
        components.insert("l_p".to_string(), 0.0);
        components.insert("l_f".to_string(), 0.0);
        components.insert("l_weak".to_string(), 0.0);
        tape.mul_scalar(cons_mean, beta2)?
    };

    Ok(LossReport {
        total: tape.scalar_value(total_id),
        components,
        batch_had_labels,
        total_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn pred_leaf(tape: &mut Tape, h: usize, w: usize, values: &[f64]) -> TensorId {
        tape.leaf(
            Tensor::new(vec![1, h, w], values.to_vec())
                .unwrap()
                .with_grad(),
        )
        .unwrap()
    }

    fn trimap(h: usize, w: usize, fg: &[(usize, usize)], bg: &[(usize, usize)]) -> WeakLabelMap {
        let mut tm = WeakLabelMap::unknown(h, w);
        for &(y, x) in fg {
            tm.set(y, x, PixelLabel::Foreground);
        }
        for &(y, x) in bg {
            tm.set(y, x, PixelLabel::Background);
        }
        tm
    }

    #[test]
    fn perfect_prediction_is_tiny() {
        let mut tape = Tape::new();
        let tm = trimap(1, 2, &[(0, 0)], &[(0, 1)]);
        let pred = pred_leaf(&mut tape, 1, 2, &[1.0 - EPS, EPS]);
        let l = partial_ce(&mut tape, pred, &tm).unwrap();
        let v = tape.scalar_value(l);
        assert!((v - EPS).abs() < 1e-8, "loss {v}");
    }

    #[test]
    fn all_unknown_gives_zero() {
        let mut tape = Tape::new();
        let tm = WeakLabelMap::unknown(3, 3);
        let pred = pred_leaf(&mut tape, 3, 3, &[0.3; 9]);
        let l = partial_ce(&mut tape, pred, &tm).unwrap();
        assert_eq!(tape.scalar_value(l), 0.0);
    }

    #[test]
    fn two_pixel_hand_value_is_ln2() {
        let mut tape = Tape::new();
        let tm = trimap(1, 2, &[(0, 0)], &[(0, 1)]);
        let pred = pred_leaf(&mut tape, 1, 2, &[0.5, 0.5]);
        let l = partial_ce(&mut tape, pred, &tm).unwrap();
        assert!((tape.scalar_value(l) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sparse_foreground_hand_values() {
        let mut tape = Tape::new();
        let tm = trimap(2, 2, &[(0, 0), (0, 1), (1, 0)], &[]);
        let pred = pred_leaf(&mut tape, 2, 2, &[0.5, 0.5, 0.5, 0.9]);
        let l = sparse_foreground_loss(&mut tape, pred, &tm).unwrap();
        assert!((tape.scalar_value(l) - 2.0f64.ln()).abs() < 1e-12);

        let none = trimap(2, 2, &[], &[(1, 1)]);
        let l0 = sparse_foreground_loss(&mut tape, pred, &none).unwrap();
        assert_eq!(tape.scalar_value(l0), 0.0);
    }

    #[test]
    fn weak_loss_arithmetic() {
        // l_p = l_f = ln 2 and alpha = 0.5 gives 1.5 ln 2
        let mut tape = Tape::new();
        let tm = trimap(1, 4, &[(0, 0), (0, 1)], &[(0, 2), (0, 3)]);
        let pred = pred_leaf(&mut tape, 1, 4, &[0.5; 4]);
        let report = weak_loss(&mut tape, pred, &tm, 0.5).unwrap();
        assert!((report.total - 1.5 * 2.0f64.ln()).abs() < 1e-12);
        assert!((report.total - 1.0397).abs() < 1e-4);

        let report0 = weak_loss(&mut tape, pred, &tm, 0.0).unwrap();
        assert_eq!(report0.total, report0.components["l_p"]);
    }

    #[test]
    fn consistency_hand_values_and_detach() {
        let mut tape = Tape::new();
        let s = pred_leaf(&mut tape, 2, 2, &[0.5; 4]);
        let t_same = tape
            .constant(Tensor::new(vec![1, 2, 2], vec![0.5; 4]).unwrap())
            .unwrap();
        let zero = consistency_loss(&mut tape, s, t_same).unwrap();
        assert_eq!(tape.scalar_value(zero), 0.0);

        let t_gap = tape
            .constant(Tensor::new(vec![1, 2, 2], vec![0.7; 4]).unwrap())
            .unwrap();
        let l = consistency_loss(&mut tape, s, t_gap).unwrap();
        assert!((tape.scalar_value(l) - 0.2).abs() < 1e-12);

        tape.backward(l).unwrap();
        assert!(tape.grad(s).is_some());
        assert!(tape.grad(t_gap).is_none(), "teacher must stay detached");
    }

    #[test]
    fn semi_loss_unlabeled_branch_value() {
        // constant gap 0.2 everywhere, fully unlabeled: 0.5 * 0.2 = 0.1
        let mut tape = Tape::new();
        let s: Vec<TensorId> = (0..2).map(|_| pred_leaf(&mut tape, 2, 2, &[0.5; 4])).collect();
        let t: Vec<TensorId> = (0..2)
            .map(|_| {
                tape.constant(Tensor::new(vec![1, 2, 2], vec![0.7; 4]).unwrap())
                    .unwrap()
            })
            .collect();
        let report = semi_loss(&mut tape, &s, &t, &[None, None], 0.5, 0.1, 0.5).unwrap();
        assert!(!report.batch_had_labels);
        assert!((report.total - 0.1).abs() < 1e-12);
    }

    #[test]
    fn semi_loss_gating_flips_with_one_label() {
        let tm = trimap(2, 2, &[(0, 0)], &[(1, 1)]);
        let mut tape = Tape::new();
        let s: Vec<TensorId> = (0..3).map(|_| pred_leaf(&mut tape, 2, 2, &[0.5; 4])).collect();
        let t: Vec<TensorId> = (0..3)
            .map(|_| {
                tape.constant(Tensor::new(vec![1, 2, 2], vec![0.5; 4]).unwrap())
                    .unwrap()
            })
            .collect();
        let unlabeled = semi_loss(&mut tape, &s, &t, &[None, None, None], 0.5, 0.1, 0.5).unwrap();
        assert!(!unlabeled.batch_had_labels);
        let mixed = semi_loss(&mut tape, &s, &t, &[None, Some(&tm), None], 0.5, 0.1, 0.5).unwrap();
        assert!(mixed.batch_had_labels);
        // reconstruction under the active branch
        let expect = mixed.components["l_weak"] + 0.1 * mixed.components["l_c"];
        assert!((mixed.total - expect).abs() < 1e-12);
    }

    #[test]
    fn semi_loss_vanishes_when_student_matches_teacher_and_scribbles() {
        let tm = trimap(2, 2, &[(0, 0)], &[(1, 1)]);
        let mut tape = Tape::new();
        let vals = [1.0 - EPS, 0.5, 0.5, EPS];
        let s = vec![pred_leaf(&mut tape, 2, 2, &vals)];
        let t = vec![tape
            .constant(Tensor::new(vec![1, 2, 2], vals.to_vec()).unwrap())
            .unwrap()];
        let report = semi_loss(&mut tape, &s, &t, &[Some(&tm)], 0.5, 0.1, 0.5).unwrap();
        assert!(report.total < 1e-6, "total {}", report.total);
    }

    #[test]
    fn unknown_pixels_do_not_change_losses() {
        let mut rng = Rng::new(99);
        for _ in 0..100 {
            let (h, w) = (4 + rng.next_below(4), 4 + rng.next_below(4));
            let mut tm = WeakLabelMap::unknown(h, w);
            for _ in 0..3 {
                tm.set(rng.next_below(h), rng.next_below(w), PixelLabel::Foreground);
            }
            for _ in 0..3 {
                tm.set(rng.next_below(h), rng.next_below(w), PixelLabel::Background);
            }
            let pred_vals: Vec<f64> = (0..h * w).map(|_| rng.uniform(0.05, 0.95)).collect();

            let eval = |labels: &WeakLabelMap, vals: &[f64]| {
                let mut tape = Tape::new();
                let pred = tape
                    .leaf(Tensor::new(vec![1, h, w], vals.to_vec()).unwrap())
                    .unwrap();
                let lp = partial_ce(&mut tape, pred, labels).unwrap();
                let lf = sparse_foreground_loss(&mut tape, pred, labels).unwrap();
                (tape.scalar_value(lp), tape.scalar_value(lf))
            };

            let (lp_a, lf_a) = eval(&tm, &pred_vals);
            // flip some unknown pixels' predictions; losses cannot move
            let mut altered = pred_vals.clone();
            for (i, l) in tm.labels.iter().enumerate() {
                if *l == PixelLabel::Unknown {
                    altered[i] = rng.uniform(0.05, 0.95);
                }
            }
            let (lp_b, lf_b) = eval(&tm, &altered);
            assert!((lp_a - lp_b).abs() < 1e-12);
            assert!((lf_a - lf_b).abs() < 1e-12);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_case() -> impl Strategy<Value = (usize, usize, Vec<u8>, Vec<f64>, f64)> {
            (2usize..6, 2usize..6)
                .prop_flat_map(|(h, w)| {
                    (
                        Just(h),
                        Just(w),
                        proptest::collection::vec(0u8..3, h * w),
                        proptest::collection::vec(0.01f64..0.99, h * w),
                        0.0f64..2.0,
                    )
                })
        }

        proptest! {
            #[test]
            fn losses_nonnegative_and_affine_in_alpha((h, w, lab, pred_vals, alpha) in arb_case()) {
                let mut tm = WeakLabelMap::unknown(h, w);
                for (i, &v) in lab.iter().enumerate() {
                    tm.labels[i] = match v {
                        0 => PixelLabel::Background,
                        1 => PixelLabel::Unknown,
                        _ => PixelLabel::Foreground,
                    };
                }
                let mut tape = Tape::new();
                let pred = tape
                    .leaf(Tensor::new(vec![1, h, w], pred_vals).unwrap())
                    .unwrap();
                let report = weak_loss(&mut tape, pred, &tm, alpha).unwrap();
                let lp = report.components["l_p"];
                let lf = report.components["l_f"];
                prop_assert!(lp >= 0.0 && lp.is_finite());
                prop_assert!(lf >= 0.0 && lf.is_finite());
                prop_assert!((report.total - (lp + alpha * lf)).abs() < 1e-12);
            }
        }
    }
}
