use super::tape::{grad_acc, Op, Tape, TensorId};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Tape {
    /// Zero-padded cross-correlation.
    /// `x: [n, c, h, w]`, `kernel: [c_out, c, kh, kw]` with odd kernel extents.
    pub fn conv2d(
        &mut self,
        x: TensorId,
        kernel: TensorId,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let (tx, tk) = (&self.tensors[x.0], &self.tensors[kernel.0]);
        if tx.rank() != 4 || tk.rank() != 4 {
            return Err(Error::shape(format!(
                "conv2d: x {:?}, kernel {:?}",
                tx.shape, tk.shape
            )));
        }
        let (n, cin, h, w) = (tx.shape[0], tx.shape[1], tx.shape[2], tx.shape[3]);
        let (cout, kc, kh, kw) = (tk.shape[0], tk.shape[1], tk.shape[2], tk.shape[3]);
        if kc != cin {
            return Err(Error::shape(format!(
                "conv2d: kernel channels {kc} != input channels {cin}"
            )));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::shape(format!("conv2d: kernel extents must be odd, got {kh}x{kw}")));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d: stride must be positive"));
        }
        let ho = out_extent(h, kh, stride, pad)?;
        let wo = out_extent(w, kw, stride, pad)?;
        let dims = ConvDims { n, cin, h, w, cout, kh, kw, stride, pad, ho, wo };
        let mut out = vec![0.0; n * cout * ho * wo];
        forward(&tx.data, &tk.data, &dims, &mut out);
        let req = tx.requires_grad || tk.requires_grad;
        let shape = vec![n, cout, ho, wo];
        self.push(shape, out, Op::Conv2d { x: x.0, k: kernel.0, dims }, req, "conv2d")
    }

    /// `[n, c, h, w] + [c]`, broadcast over batch and space.
    pub fn add_chan_bias(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId> {
        let (tx, tb) = (&self.tensors[x.0], &self.tensors[bias.0]);
        if tx.rank() != 4 || tb.rank() != 1 || tb.shape[0] != tx.shape[1] {
            return Err(Error::shape(format!(
                "add_chan_bias: {:?} + {:?}",
                tx.shape, tb.shape
            )));
        }
        let (n, c) = (tx.shape[0], tx.shape[1]);
        let plane = tx.shape[2] * tx.shape[3];
        let mut data = tx.data.clone();
        for ni in 0..n {
            for ci in 0..c {
                let b = tb.data[ci];
                for v in &mut data[(ni * c + ci) * plane..(ni * c + ci + 1) * plane] {
                    *v += b;
                }
            }
        }
        let shape = tx.shape.clone();
        let req = tx.requires_grad || tb.requires_grad;
        self.push(shape, data, Op::AddChanBias { x: x.0, b: bias.0 }, req, "add_chan_bias")
    }
}

fn out_extent(len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = len + 2 * pad;
    if padded < k {
        return Err(Error::shape(format!(
            "conv2d: kernel {k} larger than padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// Output indices `o` with `0 <= o*stride + kpos - pad < len_in`.
#[inline]
fn valid_range(len_in: usize, len_out: usize, kpos: usize, stride: usize, pad: usize) -> Option<(usize, usize)> {
    let lo_num = pad as isize - kpos as isize;
    let lo = if lo_num <= 0 {
        0
    } else {
        (lo_num as usize).div_ceil(stride)
    };
    let hi_num = len_in as isize - 1 - kpos as isize + pad as isize;
    if hi_num < 0 {
        return None;
    }
    let hi = ((hi_num as usize) / stride).min(len_out - 1);
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

fn forward(x: &[f64], k: &[f64], d: &ConvDims, out: &mut [f64]) {
    for ni in 0..d.n {
        for co in 0..d.cout {
            let yplane = &mut out[(ni * d.cout + co) * d.ho * d.wo..(ni * d.cout + co + 1) * d.ho * d.wo];
            for ci in 0..d.cin {
                let xplane = &x[(ni * d.cin + ci) * d.h * d.w..(ni * d.cin + ci + 1) * d.h * d.w];
                let kbase = (co * d.cin + ci) * d.kh * d.kw;
                for ky in 0..d.kh {
                    let Some((oy_lo, oy_hi)) = valid_range(d.h, d.ho, ky, d.stride, d.pad) else {
                        continue;
                    };
                    for kx in 0..d.kw {
                        let kv = k[kbase + ky * d.kw + kx];
                        let Some((ox_lo, ox_hi)) = valid_range(d.w, d.wo, kx, d.stride, d.pad) else {
                            continue;
                        };
                        for oy in oy_lo..=oy_hi {
                            let iy = oy * d.stride + ky - d.pad;
                            let ix0 = ox_lo * d.stride + kx - d.pad;
                            let yrow = &mut yplane[oy * d.wo + ox_lo..oy * d.wo + ox_hi + 1];
                            if d.stride == 1 {
                                let xrow = &xplane[iy * d.w + ix0..iy * d.w + ix0 + yrow.len()];
                                for (o, &xv) in yrow.iter_mut().zip(xrow) {
                                    *o += kv * xv;
                                }
                            } else {
                                let mut ix = ix0;
                                for o in yrow.iter_mut() {
                                    *o += kv * xplane[iy * d.w + ix];
                                    ix += d.stride;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn backward_x(k: &[f64], dy: &[f64], d: &ConvDims, dx: &mut [f64]) {
    for ni in 0..d.n {
        for co in 0..d.cout {
            let gplane = &dy[(ni * d.cout + co) * d.ho * d.wo..(ni * d.cout + co + 1) * d.ho * d.wo];
            for ci in 0..d.cin {
                let dxplane = &mut dx[(ni * d.cin + ci) * d.h * d.w..(ni * d.cin + ci + 1) * d.h * d.w];
                let kbase = (co * d.cin + ci) * d.kh * d.kw;
                for ky in 0..d.kh {
                    let Some((oy_lo, oy_hi)) = valid_range(d.h, d.ho, ky, d.stride, d.pad) else {
                        continue;
                    };
                    for kx in 0..d.kw {
                        let kv = k[kbase + ky * d.kw + kx];
                        let Some((ox_lo, ox_hi)) = valid_range(d.w, d.wo, kx, d.stride, d.pad) else {
                            continue;
                        };
                        for oy in oy_lo..=oy_hi {
                            let iy = oy * d.stride + ky - d.pad;
                            let ix0 = ox_lo * d.stride + kx - d.pad;
                            let grow = &gplane[oy * d.wo + ox_lo..oy * d.wo + ox_hi + 1];
                            if d.stride == 1 {
                                let dxrow = &mut dxplane[iy * d.w + ix0..iy * d.w + ix0 + grow.len()];
                                for (o, &gv) in dxrow.iter_mut().zip(grow) {
                                    *o += kv * gv;
                                }
                            } else {
                                let mut ix = ix0;
                                for &gv in grow {
                                    dxplane[iy * d.w + ix] += kv * gv;
                                    ix += d.stride;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn backward_k(x: &[f64], dy: &[f64], d: &ConvDims, dk: &mut [f64]) {
    for ni in 0..d.n {
        for co in 0..d.cout {
            let gplane = &dy[(ni * d.cout + co) * d.ho * d.wo..(ni * d.cout + co + 1) * d.ho * d.wo];
            for ci in 0..d.cin {
                let xplane = &x[(ni * d.cin + ci) * d.h * d.w..(ni * d.cin + ci + 1) * d.h * d.w];
                let kbase = (co * d.cin + ci) * d.kh * d.kw;
                for ky in 0..d.kh {
                    let Some((oy_lo, oy_hi)) = valid_range(d.h, d.ho, ky, d.stride, d.pad) else {
                        continue;
                    };
                    for kx in 0..d.kw {
                        let Some((ox_lo, ox_hi)) = valid_range(d.w, d.wo, kx, d.stride, d.pad) else {
                            continue;
                        };
                        let mut acc = 0.0;
                        for oy in oy_lo..=oy_hi {
                            let iy = oy * d.stride + ky - d.pad;
                            let ix0 = ox_lo * d.stride + kx - d.pad;
                            let grow = &gplane[oy * d.wo + ox_lo..oy * d.wo + ox_hi + 1];
                            if d.stride == 1 {
                                let xrow = &xplane[iy * d.w + ix0..iy * d.w + ix0 + grow.len()];
                                acc += grow.iter().zip(xrow).map(|(&g, &xv)| g * xv).sum::<f64>();
                            } else {
                                let mut ix = ix0;
                                for &gv in grow {
                                    acc += gv * xplane[iy * d.w + ix];
                                    ix += d.stride;
                                }
                            }
                        }
                        dk[kbase + ky * d.kw + kx] += acc;
                    }
                }
            }
        }
    }
}

pub(crate) fn backward(
    tensors: &[Tensor],
    x: usize,
    k: usize,
    dims: &ConvDims,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let kd = &tensors[k].data;
    if let Some(gx) = grad_acc(tensors, grads, x) {
        backward_x(kd, g, dims, gx);
    }
    let xd = &tensors[x].data;
    if let Some(gk) = grad_acc(tensors, grads, k) {
        backward_k(xd, g, dims, gk);
    }
}

pub(crate) fn chan_bias_backward(
    tensors: &[Tensor],
    x: usize,
    b: usize,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    if let Some(gx) = grad_acc(tensors, grads, x) {
        for (o, &gi) in gx.iter_mut().zip(g) {
            *o += gi;
        }
    }
    let (n, c) = (tensors[x].shape[0], tensors[x].shape[1]);
    let plane = tensors[x].shape[2] * tensors[x].shape[3];
    if let Some(gb) = grad_acc(tensors, grads, b) {
        for ni in 0..n {
            for ci in 0..c {
                gb[ci] += g[(ni * c + ci) * plane..(ni * c + ci + 1) * plane]
                    .iter()
                    .sum::<f64>();
            }
        }
    }
}
