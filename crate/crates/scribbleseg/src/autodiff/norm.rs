use super::tape::{grad_acc, Op, Tape, TensorId};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// Splits a shape into (outer, axis extent, inner) around `axis`.
fn lanes(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let m = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, m, inner)
}

impl Tape {
    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        if axis >= t.rank() {
            return Err(Error::shape(format!(
                "softmax: axis {axis} out of range for shape {:?}",
                t.shape
            )));
        }
        let (outer, m, inner) = lanes(&t.shape, axis);
        let mut data = vec![0.0; t.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * m + j) * inner + i;
                let mut maxv = f64::NEG_INFINITY;
                for j in 0..m {
                    maxv = maxv.max(t.data[at(j)]);
                }
                let mut sum = 0.0;
                for j in 0..m {
                    let e = (t.data[at(j)] - maxv).exp();
                    data[at(j)] = e;
                    sum += e;
                }
                for j in 0..m {
                    data[at(j)] /= sum;
                }
            }
        }
        let shape = t.shape.clone();
        let req = t.requires_grad;
        self.push(shape, data, Op::Softmax { a: a.0, axis }, req, "softmax")
    }

    /// Normalizes along `axis` to zero mean and unit variance, then applies
    /// the affine `gamma, beta` (both of the axis extent).
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        axis: usize,
    ) -> Result<TensorId> {
        let (tx, tg, tb) = (&self.tensors[x.0], &self.tensors[gamma.0], &self.tensors[beta.0]);
        if axis >= tx.rank() {
            return Err(Error::shape(format!(
                "layer_norm: axis {axis} out of range for shape {:?}",
                tx.shape
            )));
        }
        let m = tx.shape[axis];
        if tg.shape != [m] || tb.shape != [m] {
            return Err(Error::shape(format!(
                "layer_norm: gamma {:?} / beta {:?} must be [{m}]",
                tg.shape, tb.shape
            )));
        }
        let (outer, _, inner) = lanes(&tx.shape, axis);
        let mut data = vec![0.0; tx.numel()];
        let mut stats = vec![0.0; outer * inner * 2];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * m + j) * inner + i;
                let mut mean = 0.0;
                for j in 0..m {
                    mean += tx.data[at(j)];
                }
                mean /= m as f64;
                let mut var = 0.0;
                for j in 0..m {
                    let d = tx.data[at(j)] - mean;
                    var += d * d;
                }
                var /= m as f64;
                let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                let lane = o * inner + i;
                stats[lane * 2] = mean;
                stats[lane * 2 + 1] = inv_std;
                for j in 0..m {
                    let xh = (tx.data[at(j)] - mean) * inv_std;
                    data[at(j)] = tg.data[j] * xh + tb.data[j];
                }
            }
        }
        let shape = tx.shape.clone();
        let req = tx.requires_grad || tg.requires_grad || tb.requires_grad;
        let op = Op::LayerNorm { x: x.0, gamma: gamma.0, beta: beta.0, axis, stats };
        self.push(shape, data, op, req, "layer_norm")
    }

    /// `x` where positive, `slope * x` elsewhere; `slope` is a `[1]` tensor.
    pub fn prelu(&mut self, x: TensorId, slope: TensorId) -> Result<TensorId> {
        let (tx, ts) = (&self.tensors[x.0], &self.tensors[slope.0]);
        if ts.numel() != 1 {
            return Err(Error::shape(format!(
                "prelu: slope must be a scalar tensor, got {:?}",
                ts.shape
            )));
        }
        let s = ts.data[0];
        let data = tx
            .data
            .iter()
            .map(|&v| if v > 0.0 { v } else { s * v })
            .collect();
        let shape = tx.shape.clone();
        let req = tx.requires_grad || ts.requires_grad;
        self.push(shape, data, Op::Prelu { x: x.0, slope: slope.0 }, req, "prelu")
    }

    /// Training mode: zeroes each element with probability `rate` and scales
    /// survivors by `1/(1-rate)`. Inference mode (or `rate == 0`) is the
    /// identity and records nothing.
    pub fn dropout(
        &mut self,
        x: TensorId,
        rate: f64,
        training: bool,
        rng: &mut Rng,
    ) -> Result<TensorId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let t = &self.tensors[x.0];
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..t.numel())
            .map(|_| if rng.next_f64() < rate { 0.0 } else { keep })
            .collect();
        let data = t.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = t.shape.clone();
        let req = t.requires_grad;
        self.push(shape, data, Op::Dropout { x: x.0, mask }, req, "dropout")
    }
}

pub(crate) fn softmax_backward(
    tensors: &[Tensor],
    a: usize,
    out: usize,
    axis: usize,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let y = &tensors[out].data;
    let (outer, m, inner) = lanes(&tensors[out].shape, axis);
    if let Some(ga) = grad_acc(tensors, grads, a) {
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * m + j) * inner + i;
                let mut dot = 0.0;
                for j in 0..m {
                    dot += g[at(j)] * y[at(j)];
                }
                for j in 0..m {
                    ga[at(j)] += y[at(j)] * (g[at(j)] - dot);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward(
    tensors: &[Tensor],
    x: usize,
    gamma: usize,
    beta: usize,
    axis: usize,
    stats: &[f64],
    _out: usize,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let tx = &tensors[x];
    let tg = &tensors[gamma];
    let (outer, m, inner) = lanes(&tx.shape, axis);
    let mf = m as f64;

    // dgamma / dbeta
    if tensors[gamma].requires_grad || tensors[beta].requires_grad {
        let mut dgamma = vec![0.0; m];
        let mut dbeta = vec![0.0; m];
        for o in 0..outer {
            for i in 0..inner {
                let lane = o * inner + i;
                let (mean, inv_std) = (stats[lane * 2], stats[lane * 2 + 1]);
                for j in 0..m {
                    let at = (o * m + j) * inner + i;
                    let xh = (tx.data[at] - mean) * inv_std;
                    dgamma[j] += g[at] * xh;
                    dbeta[j] += g[at];
                }
            }
        }
        if let Some(gg) = grad_acc(tensors, grads, gamma) {
            for (o, d) in gg.iter_mut().zip(&dgamma) {
                *o += d;
            }
        }
        if let Some(gb) = grad_acc(tensors, grads, beta) {
            for (o, d) in gb.iter_mut().zip(&dbeta) {
                *o += d;
            }
        }
    }

    if tensors[x].requires_grad {
        let gd = &tg.data;
        let xd = &tx.data;
        if let Some(gx) = grad_acc(tensors, grads, x) {
            for o in 0..outer {
                for i in 0..inner {
                    let lane = o * inner + i;
                    let (mean, inv_std) = (stats[lane * 2], stats[lane * 2 + 1]);
                    let at = |j: usize| (o * m + j) * inner + i;
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..m {
                        let gh = g[at(j)] * gd[j];
                        let xh = (xd[at(j)] - mean) * inv_std;
                        s1 += gh;
                        s2 += gh * xh;
                    }
                    for j in 0..m {
                        let gh = g[at(j)] * gd[j];
                        let xh = (xd[at(j)] - mean) * inv_std;
                        gx[at(j)] += inv_std * (gh - s1 / mf - xh * s2 / mf);
                    }
                }
            }
        }
    }
}

pub(crate) fn prelu_backward(
    tensors: &[Tensor],
    x: usize,
    slope: usize,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let s = tensors[slope].data[0];
    let xd = &tensors[x].data;
    if let Some(gx) = grad_acc(tensors, grads, x) {
        for ((o, &gi), &xi) in gx.iter_mut().zip(g).zip(xd) {
            *o += gi * if xi > 0.0 { 1.0 } else { s };
        }
    }
    if let Some(gs) = grad_acc(tensors, grads, slope) {
        gs[0] += g
            .iter()
            .zip(xd)
            .filter(|(_, &xi)| xi <= 0.0)
            .map(|(&gi, &xi)| gi * xi)
            .sum::<f64>();
    }
}
