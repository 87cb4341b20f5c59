//! Two-stage training: a weakly-supervised teacher on the labeled subset,
//! frozen pseudo-labels for the whole train split, then a semi-supervised
//! student over labeled and unlabeled data with batch-wise loss gating.

use crate::autodiff::{Tape, Tensor, TensorId};
use crate::data::{
    resize_image, resize_mask_nearest, resize_trimap_nearest, DatasetManifest, Sample, Split,
    WeakLabelMap,
};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::loss::{semi_loss, weak_loss};
use crate::model::{read_records, write_records, ModelConfig, Role, SegModel};
use crate::rng::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Decorrelates the training stream from the parameter-init stream.
const TRAIN_STREAM_SALT: u64 = 0x5452414e;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Learning-rate multiplier applied once per epoch.
    pub lr_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 4,
            lr_decay: 0.95,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0
            || self.weight_decay < 0.0
            || !(0.0..1.0).contains(&self.momentum)
            || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0)
        {
            return Err(Error::config(format!("invalid sgd config {self:?}")));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Weak,
    Semi,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StagePlan {
    pub stage: Stage,
    pub epochs: usize,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub input_size: (usize, usize),
}

impl Default for StagePlan {
    fn default() -> Self {
        StagePlan {
            stage: Stage::Weak,
            epochs: 30,
            alpha: 0.5,
            beta1: 0.1,
            beta2: 0.5,
            seed: 1,
            input_size: (64, 64),
        }
    }
}

impl StagePlan {
    pub fn weak(seed: u64) -> Self {
        StagePlan {
            stage: Stage::Weak,
            seed,
            ..Default::default()
        }
    }

    pub fn semi(seed: u64) -> Self {
        StagePlan {
            stage: Stage::Semi,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.alpha < 0.0 || self.beta1 < 0.0 || self.beta2 < 0.0 {
            return Err(Error::config("loss weights must be non-negative"));
        }
        let (h, w) = self.input_size;
        if h % 16 != 0 || w % 16 != 0 {
            return Err(Error::config(format!(
                "input size {h}x{w} must be divisible by 16"
            )));
        }
        Ok(())
    }
}

/// Classic momentum SGD with L2-in-gradient weight decay:
/// `v <- momentum*v + grad + weight_decay*param; param <- param - lr*v`.
/// A non-finite gradient aborts the step before any parameter moves.
pub fn sgd_step(
    params: &mut BTreeMap<String, Tensor>,
    grads: &BTreeMap<String, Vec<f64>>,
    velocity: &mut BTreeMap<String, Vec<f64>>,
    cfg: &SgdConfig,
) -> Result<()> {
    for (name, g) in grads {
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::numerics(format!(
                "non-finite gradient for {name}; step aborted"
            )));
        }
    }
    for (name, param) in params.iter_mut() {
        let Some(g) = grads.get(name) else { continue };
        let v = velocity
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; param.data.len()]);
        for ((pv, vv), &gv) in param.data.iter_mut().zip(v.iter_mut()).zip(g) {
            *vv = cfg.momentum * *vv + gv + cfg.weight_decay * *pv;
            *pv -= cfg.learning_rate * *vv;
        }
    }
    Ok(())
}

/// Per-epoch mean losses plus gating bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct TrainSummary {
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub labeled_batches: usize,
    pub unlabeled_batches: usize,
}

struct MetricsLog {
    writer: Option<std::io::BufWriter<std::fs::File>>,
}

impl MetricsLog {
    fn create(path: Option<&Path>) -> Result<Self> {
        let writer = match path {
            Some(p) => {
                let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
                writeln!(w, "epoch,step,l_p,l_f,l_weak,l_c,total,branch")?;
                Some(w)
            }
            None => None,
        };
        Ok(MetricsLog { writer })
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &mut self,
        epoch: usize,
        step: usize,
        l_p: f64,
        l_f: f64,
        l_weak: f64,
        l_c: f64,
        total: f64,
        branch: &str,
    ) -> Result<()> {
        if let Some(w) = &mut self.writer {
            writeln!(w, "{epoch},{step},{l_p},{l_f},{l_weak},{l_c},{total},{branch}")?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.flush()?;
        }
        Ok(())
    }
}

/// Loads the train split resized to the configured input size.
pub fn prepare_train_samples(
    manifest: &DatasetManifest,
    input_size: (usize, usize),
) -> Result<Vec<Sample>> {
    let (h, w) = input_size;
    let samples = manifest.load_split(Split::Train)?;
    Ok(samples
        .into_iter()
        .map(|mut s| {
            s.image = resize_image(&s.image, h, w);
            s.dense_gt = s.dense_gt.map(|m| resize_mask_nearest(&m, h, w));
            s.trimap = s.trimap.map(|t| resize_trimap_nearest(&t, h, w));
            s
        })
        .collect())
}

fn collect_grads(
    tape: &mut Tape,
    bound: &crate::model::BoundParams,
) -> BTreeMap<String, Vec<f64>> {
    bound
        .ids
        .iter()
        .map(|(name, &id)| {
            let g = tape
                .take_grad(id)
                .unwrap_or_else(|| vec![0.0; tape.value(id).numel()]);
            (name.clone(), g)
        })
        .collect()
}

/// Stage one: trains a fresh teacher on the labeled subset only, minimizing
/// the weak loss. Saves the checkpoint and an optional per-step metrics CSV.
pub fn train_weak_stage(
    manifest: &DatasetManifest,
    plan: &StagePlan,
    sgd: &SgdConfig,
    model_cfg: &ModelConfig,
    out_ckpt: &Path,
    metrics_csv: Option<&Path>,
) -> Result<TrainSummary> {
    plan.validate()?;
    sgd.validate()?;
    let samples = prepare_train_samples(manifest, plan.input_size)?;
    let labeled: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].is_labeled()).collect();
    if labeled.is_empty() {
        return Err(Error::config("weak stage requires a non-empty labeled subset"));
    }

    let mut model = SegModel::new(model_cfg.clone(), Role::Teacher, plan.seed)?;
    let mut velocity = BTreeMap::new();
    let mut rng = Rng::new(plan.seed ^ TRAIN_STREAM_SALT);
    let mut log = MetricsLog::create(metrics_csv)?;
    let mut summary = TrainSummary::default();

    for epoch in 0..plan.epochs {
        let cfg_epoch = SgdConfig {
            learning_rate: sgd.learning_rate * sgd.lr_decay.powi(epoch as i32),
            ..sgd.clone()
        };
        let mut order = labeled.clone();
        rng.shuffle(&mut order);
        let mut epoch_total = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(sgd.batch_size) {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true)?;
            let mut total_sum: Option<TensorId> = None;
            let (mut lp, mut lf, mut lw) = (0.0, 0.0, 0.0);
            for &i in batch {
                let s = &samples[i];
                let img = tape.constant(s.image.clone())?;
                let pred = model.forward(&mut tape, &bound, img, true, &mut rng)?;
                let report = weak_loss(&mut tape, pred, s.trimap.as_ref().unwrap(), plan.alpha)?;
                lp += report.components["l_p"];
                lf += report.components["l_f"];
                lw += report.components["l_weak"];
                total_sum = Some(match total_sum {
                    Some(acc) => tape.add(acc, report.total_id)?,
                    None => report.total_id,
                });
            }
            let nb = batch.len() as f64;
            let total = tape.mul_scalar(total_sum.expect("non-empty batch"), 1.0 / nb)?;
            let total_val = tape.scalar_value(total);
            tape.backward(total)?;
            let grads = collect_grads(&mut tape, &bound);
            sgd_step(model.params_mut(), &grads, &mut velocity, &cfg_epoch)?;
            log.row(
                epoch,
                summary.steps,
                lp / nb,
                lf / nb,
                lw / nb,
                0.0,
                total_val,
                "weak",
            )?;
            summary.steps += 1;
            summary.labeled_batches += 1;
            epoch_total += total_val;
            epoch_batches += 1;
        }
        summary.epoch_losses.push(epoch_total / epoch_batches as f64);
    }
    model.save(out_ckpt)?;
    log.finish()?;
    Ok(summary)
}

/// Detached teacher predictions for every train sample, keyed by sample id.
#[derive(Debug, Clone, Default)]
pub struct PseudoLabelCache {
    pub entries: BTreeMap<String, Tensor>,
}

impl PseudoLabelCache {
    pub fn save(&self, path: &Path) -> Result<()> {
        let records: Vec<(&str, &Tensor)> =
            self.entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        write_records(path, &records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (name, tensor) in read_records(path)? {
            entries.insert(name, tensor);
        }
        Ok(PseudoLabelCache { entries })
    }

    /// Every sample must have a matching-size prediction in the cache.
    pub fn verify_complete(&self, samples: &[Sample]) -> Result<()> {
        for s in samples {
            let (h, w) = (s.image.shape[1], s.image.shape[2]);
            match self.entries.get(&s.id) {
                Some(t) if t.shape == [1, h, w] => {}
                Some(t) => {
                    return Err(Error::config(format!(
                        "pseudo-label for {} has shape {:?}, expected [1, {h}, {w}]",
                        s.id, t.shape
                    )))
                }
                None => {
                    return Err(Error::config(format!(
                        "pseudo-label cache is incomplete: missing {}",
                        s.id
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Inference-mode teacher predictions over the whole train split (labeled
/// and unlabeled), fanned out over a thread pool.
pub fn generate_pseudo_labels(teacher: &SegModel, samples: &[Sample]) -> Result<PseudoLabelCache> {
    let preds: Vec<(String, Tensor)> = samples
        .par_iter()
        .map(|s| {
            let vals = crate::eval::predict_map(teacher, s)?;
            let (h, w) = (s.image.shape[1], s.image.shape[2]);
            Ok((s.id.clone(), Tensor::new(vec![1, h, w], vals)?))
        })
        .collect::<Result<_>>()?;
    Ok(PseudoLabelCache {
        entries: preds.into_iter().collect(),
    })
}

/// Stage two: trains a fresh student (seed + 1) over the full train split.
/// Batches mixing labeled samples use `l_weak + beta1*l_c`; fully unlabeled
/// batches use `beta2*l_c`. Pseudo-labels stay frozen throughout.
pub fn train_semi_stage(
    manifest: &DatasetManifest,
    cache: &PseudoLabelCache,
    plan: &StagePlan,
    sgd: &SgdConfig,
    model_cfg: &ModelConfig,
    out_ckpt: &Path,
    metrics_csv: Option<&Path>,
) -> Result<TrainSummary> {
    plan.validate()?;
    sgd.validate()?;
    let samples = prepare_train_samples(manifest, plan.input_size)?;
    if samples.is_empty() {
        return Err(Error::config("semi stage requires train samples"));
    }
    cache.verify_complete(&samples)?;

    let student_seed = plan.seed + 1;
    let mut model = SegModel::new(model_cfg.clone(), Role::Student, student_seed)?;
    let mut velocity = BTreeMap::new();
    let mut rng = Rng::new(student_seed ^ TRAIN_STREAM_SALT);
    let mut log = MetricsLog::create(metrics_csv)?;
    let mut summary = TrainSummary::default();

    for epoch in 0..plan.epochs {
        let cfg_epoch = SgdConfig {
            learning_rate: sgd.learning_rate * sgd.lr_decay.powi(epoch as i32),
            ..sgd.clone()
        };
        let mut order: Vec<usize> = (0..samples.len()).collect();
        rng.shuffle(&mut order);
        let mut epoch_total = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(sgd.batch_size) {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true)?;
            let mut student_preds = Vec::with_capacity(batch.len());
            let mut teacher_preds = Vec::with_capacity(batch.len());
            let mut labels: Vec<Option<&WeakLabelMap>> = Vec::with_capacity(batch.len());
            for &i in batch {
                let s = &samples[i];
                let img = tape.constant(s.image.clone())?;
                student_preds.push(model.forward(&mut tape, &bound, img, true, &mut rng)?);
                teacher_preds.push(tape.constant(cache.entries[&s.id].clone())?);
                labels.push(s.trimap.as_ref());
            }
            let report = semi_loss(
                &mut tape,
                &student_preds,
                &teacher_preds,
                &labels,
                plan.alpha,
                plan.beta1,
                plan.beta2,
            )?;
            tape.backward(report.total_id)?;
            let grads = collect_grads(&mut tape, &bound);
            sgd_step(model.params_mut(), &grads, &mut velocity, &cfg_epoch)?;
            let branch = if report.batch_had_labels {
                summary.labeled_batches += 1;
                "labeled"
            } else {
                summary.unlabeled_batches += 1;
                "unlabeled"
            };
            log.row(
                epoch,
                summary.steps,
                report.components["l_p"],
                report.components["l_f"],
                report.components["l_weak"],
                report.components["l_c"],
                report.total,
                branch,
            )?;
            summary.steps += 1;
            epoch_total += report.total;
            epoch_batches += 1;
        }
        summary.epoch_losses.push(epoch_total / epoch_batches as f64);
    }
    model.save(out_ckpt)?;
    log.finish()?;
    Ok(summary)
}

/// Grid specification for the hyperparameter sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub manifest: PathBuf,
    pub seeds: Vec<u64>,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<(f64, f64)>,
    pub threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            manifest: PathBuf::from("manifest.json"),
            seeds: vec![1, 2, 3],
            alpha_grid: vec![0.0, 0.5, 1.0],
            beta_grid: vec![(0.5, 0.5), (0.3, 0.5), (0.1, 0.5), (0.0, 0.5)],
            threshold: 0.5,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs the alpha grid (weak stage only) and the beta grid (full two-stage
/// pipeline with an alpha=0.5 teacher) over every seed, writing one CSV row
/// per run plus a median row per grid point. Intermediate checkpoints land
/// in `work_dir`.
#[allow(clippy::too_many_arguments)]
pub fn ablation_sweep(
    sweep: &SweepConfig,
    plan: &StagePlan,
    sgd: &SgdConfig,
    model_cfg: &ModelConfig,
    work_dir: &Path,
    out_csv: &Path,
) -> Result<()> {
    std::fs::create_dir_all(work_dir)?;
    let manifest = DatasetManifest::load(&sweep.manifest)?;
    let test_samples: Vec<Sample> = {
        let (h, w) = plan.input_size;
        manifest
            .load_split(Split::Test)?
            .into_iter()
            .map(|mut s| {
                s.image = resize_image(&s.image, h, w);
                s.dense_gt = s.dense_gt.map(|m| resize_mask_nearest(&m, h, w));
                s
            })
            .collect()
    };

    let mut rows: Vec<(String, f64, Option<(f64, f64)>, u64, f64, f64, bool)> = Vec::new();
    // (kind, alpha, beta, seed, mdice, miou, default)

    for &seed in &sweep.seeds {
        for &alpha in &sweep.alpha_grid {
            let ckpt = work_dir.join(format!("weak_a{alpha}_s{seed}.ckpt"));
            let run_plan = StagePlan {
                alpha,
                seed,
                stage: Stage::Weak,
                ..plan.clone()
            };
            train_weak_stage(&manifest, &run_plan, sgd, model_cfg, &ckpt, None)?;
            let model = SegModel::load(&ckpt, model_cfg.clone(), Role::Teacher)?;
            let report = evaluate(&model, &test_samples, sweep.threshold, &ckpt.display().to_string())?;
            rows.push((
                "alpha".into(),
                alpha,
                None,
                seed,
                report.mdice,
                report.miou,
                alpha == 0.5,
            ));
        }

        if !sweep.beta_grid.is_empty() {
            let teacher_ckpt = work_dir.join(format!("teacher_s{seed}.ckpt"));
            let teacher_plan = StagePlan {
                alpha: 0.5,
                seed,
                stage: Stage::Weak,
                ..plan.clone()
            };
            train_weak_stage(&manifest, &teacher_plan, sgd, model_cfg, &teacher_ckpt, None)?;
            let teacher = SegModel::load(&teacher_ckpt, model_cfg.clone(), Role::Teacher)?;
            let train_samples = prepare_train_samples(&manifest, plan.input_size)?;
            let cache = generate_pseudo_labels(&teacher, &train_samples)?;
            for &(beta1, beta2) in &sweep.beta_grid {
                let ckpt = work_dir.join(format!("semi_b{beta1}_{beta2}_s{seed}.ckpt"));
                let run_plan = StagePlan {
                    alpha: 0.5,
                    beta1,
                    beta2,
                    seed,
                    stage: Stage::Semi,
                    ..plan.clone()
                };
                train_semi_stage(&manifest, &cache, &run_plan, sgd, model_cfg, &ckpt, None)?;
                let model = SegModel::load(&ckpt, model_cfg.clone(), Role::Student)?;
                let report =
                    evaluate(&model, &test_samples, sweep.threshold, &ckpt.display().to_string())?;
                rows.push((
                    "beta".into(),
                    0.5,
                    Some((beta1, beta2)),
                    seed,
                    report.mdice,
                    report.miou,
                    (beta1, beta2) == (0.1, 0.5),
                ));
            }
        }
    }

    let mut f = std::io::BufWriter::new(std::fs::File::create(out_csv)?);
    writeln!(f, "kind,alpha,beta1,beta2,seed,mdice,miou,default")?;
    let fmt_beta = |b: Option<(f64, f64)>| match b {
        Some((b1, b2)) => (b1.to_string(), b2.to_string()),
        None => (String::new(), String::new()),
    };
    for (kind, alpha, beta, seed, mdice, miou, default) in &rows {
        let (b1, b2) = fmt_beta(*beta);
        writeln!(f, "{kind},{alpha},{b1},{b2},{seed},{mdice},{miou},{default}")?;
    }
    // median rows per grid point
    let mut points: Vec<(String, f64, Option<(f64, f64)>, bool)> = Vec::new();
    for (kind, alpha, beta, _, _, _, default) in &rows {
        let key = (kind.clone(), *alpha, *beta, *default);
        if !points.contains(&key) {
            points.push(key);
        }
    }
    for (kind, alpha, beta, default) in points {
        let mut dices: Vec<f64> = rows
            .iter()
            .filter(|r| r.0 == kind && r.1 == alpha && r.2 == beta)
            .map(|r| r.4)
            .collect();
        let mut ious: Vec<f64> = rows
            .iter()
            .filter(|r| r.0 == kind && r.1 == alpha && r.2 == beta)
            .map(|r| r.5)
            .collect();
        let (b1, b2) = fmt_beta(beta);
        writeln!(
            f,
            "{kind},{alpha},{b1},{b2},median,{},{},{default}",
            median(&mut dices),
            median(&mut ious)
        )?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_vanilla_step() {
        let mut params = BTreeMap::new();
        params.insert("w".to_string(), Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![0.5, -1.0]);
        let mut vel = BTreeMap::new();
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            ..Default::default()
        };
        sgd_step(&mut params, &grads, &mut vel, &cfg).unwrap();
        let w = &params["w"].data;
        assert!((w[0] - 0.95).abs() < 1e-15);
        assert!((w[1] - 2.1).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_moves_with_zero_grad() {
        let mut params = BTreeMap::new();
        params.insert("w".to_string(), Tensor::new(vec![1], vec![1.0]).unwrap());
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![0.0]);
        let mut vel = BTreeMap::new();
        vel.insert("w".to_string(), vec![2.0]);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            ..Default::default()
        };
        sgd_step(&mut params, &grads, &mut vel, &cfg).unwrap();
        // param moves by -lr * momentum * v = -0.1 * 1.8
        assert!((params["w"].data[0] - (1.0 - 0.18)).abs() < 1e-15);
    }

    #[test]
    fn sgd_weight_decay_term() {
        let mut params = BTreeMap::new();
        params.insert("w".to_string(), Tensor::new(vec![1], vec![2.0]).unwrap());
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![1.0]);
        let mut vel = BTreeMap::new();
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.5,
            ..Default::default()
        };
        sgd_step(&mut params, &grads, &mut vel, &cfg).unwrap();
        // v = 1 + 0.5*2 = 2; w = 2 - 0.2
        assert!((params["w"].data[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_before_mutation() {
        let mut params = BTreeMap::new();
        params.insert("a".to_string(), Tensor::new(vec![1], vec![1.0]).unwrap());
        params.insert("b".to_string(), Tensor::new(vec![1], vec![1.0]).unwrap());
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), vec![1.0]);
        grads.insert("b".to_string(), vec![f64::NAN]);
        let mut vel = BTreeMap::new();
        let cfg = SgdConfig::default();
        assert!(matches!(
            sgd_step(&mut params, &grads, &mut vel, &cfg),
            Err(Error::Numerics(_))
        ));
        assert_eq!(params["a"].data[0], 1.0);
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
