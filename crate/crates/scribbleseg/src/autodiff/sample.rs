use super::tape::{grad_acc, Op, Tape, TensorId};
use super::Tensor;
use crate::error::{Error, Result};

/// Four-corner tap for bilinear interpolation on an `[h, w]` plane.
/// Out-of-bounds corners carry index `-1` and read as zero.
#[derive(Clone, Copy)]
struct Tap {
    fx: f64,
    fy: f64,
    /// v00, v01, v10, v11 linear indices (row-major), -1 when outside.
    idx: [isize; 4],
}

fn tap(u: f64, v: f64, h: usize, w: usize) -> Tap {
    let x0f = u.floor();
    let y0f = v.floor();
    let fx = u - x0f;
    let fy = v - y0f;
    let x0 = x0f as isize;
    let y0 = y0f as isize;
    let at = |yy: isize, xx: isize| -> isize {
        if yy >= 0 && yy < h as isize && xx >= 0 && xx < w as isize {
            yy * w as isize + xx
        } else {
            -1
        }
    };
    Tap {
        fx,
        fy,
        idx: [at(y0, x0), at(y0, x0 + 1), at(y0 + 1, x0), at(y0 + 1, x0 + 1)],
    }
}

impl Tap {
    #[inline]
    fn weights(&self) -> [f64; 4] {
        let (fx, fy) = (self.fx, self.fy);
        [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ]
    }

    #[inline]
    fn gather(&self, plane: &[f64]) -> [f64; 4] {
        let mut v = [0.0; 4];
        for (o, &i) in v.iter_mut().zip(&self.idx) {
            if i >= 0 {
                *o = plane[i as usize];
            }
        }
        v
    }

    #[inline]
    fn interp(&self, vals: &[f64; 4]) -> f64 {
        let w = self.weights();
        w[0] * vals[0] + w[1] * vals[1] + w[2] * vals[2] + w[3] * vals[3]
    }

    /// d interp / d(u, v) given the corner values.
    #[inline]
    fn coord_grad(&self, vals: &[f64; 4]) -> (f64, f64) {
        let (fx, fy) = (self.fx, self.fy);
        let du = (1.0 - fy) * (vals[1] - vals[0]) + fy * (vals[3] - vals[2]);
        let dv = (1.0 - fx) * (vals[2] - vals[0]) + fx * (vals[3] - vals[1]);
        (du, dv)
    }
}

/// Normalized point coordinates map through pixel centers: the center of
/// pixel (x, y) in an `[h, w]` grid sits at ((x+0.5)/w, (y+0.5)/h).
#[inline]
fn to_pixel_coords(px: f64, py: f64, h: usize, w: usize) -> (f64, f64) {
    (px * w as f64 - 0.5, py * h as f64 - 0.5)
}

/// Static geometry for the fused deformable aggregation op.
#[derive(Debug, Clone)]
pub struct DeformMeta {
    /// Reference points, `[n_in, 2]` flattened (x then y), normalized.
    pub ref_points: Vec<f64>,
    /// (h, w) per feature level.
    pub level_shapes: Vec<(usize, usize)>,
    /// Row offset of each level inside the flattened pixel axis.
    pub level_starts: Vec<usize>,
    pub heads: usize,
    pub points_per_level: usize,
}

impl Tape {
    /// Samples `map [c, h, w]` at `points [k, 2]` (normalized (0,1) coords,
    /// x then y). Bilinear over the four neighboring pixel centers with zero
    /// padding outside; differentiable in both the map and the points.
    pub fn bilinear_sample(&mut self, map: TensorId, points: TensorId) -> Result<TensorId> {
        let (tm, tp) = (&self.tensors[map.0], &self.tensors[points.0]);
        if tm.rank() != 3 {
            return Err(Error::shape(format!("bilinear_sample: map {:?}", tm.shape)));
        }
        if tp.rank() != 2 || tp.shape[1] != 2 {
            return Err(Error::shape(format!("bilinear_sample: points {:?}", tp.shape)));
        }
        let (c, h, w) = (tm.shape[0], tm.shape[1], tm.shape[2]);
        let k = tp.shape[0];
        let taps: Vec<Tap> = (0..k)
            .map(|i| {
                let (u, v) = to_pixel_coords(tp.data[2 * i], tp.data[2 * i + 1], h, w);
                tap(u, v, h, w)
            })
            .collect();
        let mut out = vec![0.0; c * k];
        for ci in 0..c {
            let plane = &tm.data[ci * h * w..(ci + 1) * h * w];
            for (i, t) in taps.iter().enumerate() {
                out[ci * k + i] = t.interp(&t.gather(plane));
            }
        }
        let req = tm.requires_grad || tp.requires_grad;
        let op = Op::BilinearSample { map: map.0, points: points.0 };
        self.push(vec![c, k], out, op, req, "bilinear_sample")
    }

    /// Bilinear resize of `map [c, h, w]` to `[c, out_h, out_w]` using the
    /// align-corners=false convention (edges replicate).
    pub fn interpolate_bilinear(
        &mut self,
        map: TensorId,
        out_h: usize,
        out_w: usize,
    ) -> Result<TensorId> {
        let tm = &self.tensors[map.0];
        if tm.rank() != 3 {
            return Err(Error::shape(format!("interpolate_bilinear: map {:?}", tm.shape)));
        }
        if out_h == 0 || out_w == 0 {
            return Err(Error::shape("interpolate_bilinear: zero output extent"));
        }
        let (c, h, w) = (tm.shape[0], tm.shape[1], tm.shape[2]);
        let xw = resize_axis(w, out_w);
        let yw = resize_axis(h, out_h);
        let mut out = vec![0.0; c * out_h * out_w];
        for ci in 0..c {
            let plane = &tm.data[ci * h * w..(ci + 1) * h * w];
            let oplane = &mut out[ci * out_h * out_w..(ci + 1) * out_h * out_w];
            for (oy, &(y0, y1, fy)) in yw.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xw.iter().enumerate() {
                    let top = (1.0 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1];
                    let bot = (1.0 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1];
                    oplane[oy * out_w + ox] = (1.0 - fy) * top + fy * bot;
                }
            }
        }
        let req = tm.requires_grad;
        self.push(
            vec![c, out_h, out_w],
            out,
            Op::Interpolate { map: map.0 },
            req,
            "interpolate_bilinear",
        )
    }

    /// Weighted multi-scale aggregation at offset sampling locations: for each
    /// query pixel and head, samples the per-head slice of `value` around the
    /// reference point shifted by `offsets`, in every level, and sums with
    /// `weights`.
    ///
    /// `value: [n_in, c]`, `offsets: [n_in, heads*levels*points*2]`,
    /// `weights: [n_in, heads*levels*points]` -> `[n_in, c]`.
    pub fn deform_agg(
        &mut self,
        value: TensorId,
        offsets: TensorId,
        weights: TensorId,
        meta: DeformMeta,
    ) -> Result<TensorId> {
        let (tv, to, tw) = (
            &self.tensors[value.0],
            &self.tensors[offsets.0],
            &self.tensors[weights.0],
        );
        let levels = meta.level_shapes.len();
        let n_in: usize = meta.level_shapes.iter().map(|&(h, w)| h * w).sum();
        let c = if tv.rank() == 2 { tv.shape[1] } else { 0 };
        if tv.shape != [n_in, c] || c == 0 || c % meta.heads != 0 {
            return Err(Error::shape(format!(
                "deform_agg: value {:?} (n_in {n_in}, heads {})",
                tv.shape, meta.heads
            )));
        }
        let hlp = meta.heads * levels * meta.points_per_level;
        if to.shape != [n_in, hlp * 2] {
            return Err(Error::shape(format!(
                "deform_agg: offsets {:?}, expected [{n_in}, {}]",
                to.shape,
                hlp * 2
            )));
        }
        if tw.shape != [n_in, hlp] {
            return Err(Error::shape(format!(
                "deform_agg: weights {:?}, expected [{n_in}, {hlp}]",
                tw.shape
            )));
        }
        if meta.ref_points.len() != n_in * 2 {
            return Err(Error::shape("deform_agg: reference point count mismatch"));
        }
        let d = c / meta.heads;
        let mut out = vec![0.0; n_in * c];
        let mut corner_vals = vec![0.0; d];
        for n in 0..n_in {
            let (rx, ry) = (meta.ref_points[2 * n], meta.ref_points[2 * n + 1]);
            for hd in 0..meta.heads {
                let col0 = hd * d;
                for (li, &(lh, lw)) in meta.level_shapes.iter().enumerate() {
                    let start = meta.level_starts[li];
                    for p in 0..meta.points_per_level {
                        let s = ((hd * levels + li) * meta.points_per_level + p) * 2;
                        let widx = s / 2;
                        let wt = tw.data[n * hlp + widx];
                        let px = rx + to.data[n * hlp * 2 + s];
                        let py = ry + to.data[n * hlp * 2 + s + 1];
                        let (u, v) = to_pixel_coords(px, py, lh, lw);
                        let t = tap(u, v, lh, lw);
                        let cw = t.weights();
                        corner_vals.iter_mut().for_each(|x| *x = 0.0);
                        for (&i, &wc) in t.idx.iter().zip(&cw) {
                            if i >= 0 {
                                let row = start + i as usize;
                                let slice = &tv.data[row * c + col0..row * c + col0 + d];
                                let f = wt * wc;
                                for (o, &sv) in corner_vals.iter_mut().zip(slice) {
                                    *o += f * sv;
                                }
                            }
                        }
                        let orow = &mut out[n * c + col0..n * c + col0 + d];
                        for (o, &cv) in orow.iter_mut().zip(&corner_vals) {
                            *o += cv;
                        }
                    }
                }
            }
        }
        let req = tv.requires_grad || to.requires_grad || tw.requires_grad;
        let op = Op::DeformAgg {
            value: value.0,
            offsets: offsets.0,
            weights: weights.0,
            meta: Box::new(meta),
        };
        self.push(vec![n_in, c], out, op, req, "deform_agg")
    }
}

/// Source taps per output index for align-corners=false resizing.
fn resize_axis(len_in: usize, len_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = len_in as f64 / len_out as f64;
    (0..len_out)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len_in - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(len_in - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

pub(crate) fn bilinear_sample_backward(
    tensors: &[Tensor],
    map: usize,
    points: usize,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let tm = &tensors[map];
    let tp = &tensors[points];
    let (c, h, w) = (tm.shape[0], tm.shape[1], tm.shape[2]);
    let k = tp.shape[0];
    let taps: Vec<Tap> = (0..k)
        .map(|i| {
            let (u, v) = to_pixel_coords(tp.data[2 * i], tp.data[2 * i + 1], h, w);
            tap(u, v, h, w)
        })
        .collect();

    if tensors[map].requires_grad {
        if let Some(gm) = grad_acc(tensors, grads, map) {
            for ci in 0..c {
                let gplane = &mut gm[ci * h * w..(ci + 1) * h * w];
                for (i, t) in taps.iter().enumerate() {
                    let gi = g[ci * k + i];
                    for (&idx, &wc) in t.idx.iter().zip(&t.weights()) {
                        if idx >= 0 {
                            gplane[idx as usize] += gi * wc;
                        }
                    }
                }
            }
        }
    }
    if tensors[points].requires_grad {
        let md = &tm.data;
        if let Some(gp) = grad_acc(tensors, grads, points) {
            for (i, t) in taps.iter().enumerate() {
                let mut du = 0.0;
                let mut dv = 0.0;
                for ci in 0..c {
                    let plane = &md[ci * h * w..(ci + 1) * h * w];
                    let vals = t.gather(plane);
                    let (cu, cv) = t.coord_grad(&vals);
                    du += g[ci * k + i] * cu;
                    dv += g[ci * k + i] * cv;
                }
                gp[2 * i] += du * w as f64;
                gp[2 * i + 1] += dv * h as f64;
            }
        }
    }
}

pub(crate) fn interpolate_backward(
    tensors: &[Tensor],
    map: usize,
    out: usize,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let (c, h, w) = (
        tensors[map].shape[0],
        tensors[map].shape[1],
        tensors[map].shape[2],
    );
    let (oh, ow) = (tensors[out].shape[1], tensors[out].shape[2]);
    let xw = resize_axis(w, ow);
    let yw = resize_axis(h, oh);
    if let Some(gm) = grad_acc(tensors, grads, map) {
        for ci in 0..c {
            let gplane = &mut gm[ci * h * w..(ci + 1) * h * w];
            let oplane = &g[ci * oh * ow..(ci + 1) * oh * ow];
            for (oy, &(y0, y1, fy)) in yw.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xw.iter().enumerate() {
                    let gi = oplane[oy * ow + ox];
                    gplane[y0 * w + x0] += gi * (1.0 - fx) * (1.0 - fy);
                    gplane[y0 * w + x1] += gi * fx * (1.0 - fy);
                    gplane[y1 * w + x0] += gi * (1.0 - fx) * fy;
                    gplane[y1 * w + x1] += gi * fx * fy;
                }
            }
        }
    }
}

pub(crate) fn deform_agg_backward(
    tensors: &[Tensor],
    value: usize,
    offsets: usize,
    weights: usize,
    meta: &DeformMeta,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let tv = &tensors[value];
    let to = &tensors[offsets];
    let tw = &tensors[weights];
    let levels = meta.level_shapes.len();
    let n_in = tv.shape[0];
    let c = tv.shape[1];
    let d = c / meta.heads;
    let hlp = meta.heads * levels * meta.points_per_level;

    let need_v = tv.requires_grad;
    let need_o = to.requires_grad;
    let need_w = tw.requires_grad;
    let mut gv = if need_v { vec![0.0; n_in * c] } else { Vec::new() };
    let mut go = if need_o { vec![0.0; n_in * hlp * 2] } else { Vec::new() };
    let mut gw = if need_w { vec![0.0; n_in * hlp] } else { Vec::new() };

    for n in 0..n_in {
        let (rx, ry) = (meta.ref_points[2 * n], meta.ref_points[2 * n + 1]);
        for hd in 0..meta.heads {
            let col0 = hd * d;
            let gout = &g[n * c + col0..n * c + col0 + d];
            for (li, &(lh, lw)) in meta.level_shapes.iter().enumerate() {
                let start = meta.level_starts[li];
                for p in 0..meta.points_per_level {
                    let s = ((hd * levels + li) * meta.points_per_level + p) * 2;
                    let widx = s / 2;
                    let wt = tw.data[n * hlp + widx];
                    let px = rx + to.data[n * hlp * 2 + s];
                    let py = ry + to.data[n * hlp * 2 + s + 1];
                    let (u, v) = to_pixel_coords(px, py, lh, lw);
                    let t = tap(u, v, lh, lw);
                    let cw = t.weights();

                    if need_w || need_o {
                        // per-channel interpolated values and coordinate grads
                        let mut dot_interp = 0.0;
                        let mut du_acc = 0.0;
                        let mut dv_acc = 0.0;
                        for (ci, &gc) in gout.iter().enumerate() {
                            let mut vals = [0.0; 4];
                            for (o, &idx) in vals.iter_mut().zip(&t.idx) {
                                if idx >= 0 {
                                    let row = start + idx as usize;
                                    *o = tv.data[row * c + col0 + ci];
                                }
                            }
                            dot_interp += gc * t.interp(&vals);
                            if need_o {
                                let (cu, cv) = t.coord_grad(&vals);
                                du_acc += gc * cu;
                                dv_acc += gc * cv;
                            }
                        }
                        if need_w {
                            gw[n * hlp + widx] += dot_interp;
                        }
                        if need_o {
                            go[n * hlp * 2 + s] += wt * du_acc * lw as f64;
                            go[n * hlp * 2 + s + 1] += wt * dv_acc * lh as f64;
                        }
                    }
                    if need_v {
                        for (&idx, &wc) in t.idx.iter().zip(&cw) {
                            if idx >= 0 {
                                let row = start + idx as usize;
                                let f = wt * wc;
                                let grow = &mut gv[row * c + col0..row * c + col0 + d];
                                for (o, &gc) in grow.iter_mut().zip(gout) {
                                    *o += f * gc;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if need_v {
        if let Some(buf) = grad_acc(tensors, grads, value) {
            for (o, &x) in buf.iter_mut().zip(&gv) {
                *o += x;
            }
        }
    }
    if need_o {
        if let Some(buf) = grad_acc(tensors, grads, offsets) {
            for (o, &x) in buf.iter_mut().zip(&go) {
                *o += x;
            }
        }
    }
    if need_w {
        if let Some(buf) = grad_acc(tensors, grads, weights) {
            for (o, &x) in buf.iter_mut().zip(&gw) {
                *o += x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: Vec<usize>, data: Vec<f64>) -> TensorId {
        tape.leaf(Tensor::new(shape, data).unwrap().with_grad()).unwrap()
    }

    #[test]
    fn sample_at_pixel_center_returns_pixel() {
        let mut tape = Tape::new();
        let map = leaf(&mut tape, vec![1, 2, 3], (0..6).map(f64::from).collect());
        // center of pixel (x=1, y=1) in a 2x3 grid
        let pts = leaf(&mut tape, vec![1, 2], vec![1.5 / 3.0, 1.5 / 2.0]);
        let y = tape.bilinear_sample(map, pts).unwrap();
        assert!((tape.data(y)[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sample_midway_between_centers_is_average() {
        let mut tape = Tape::new();
        let map = leaf(&mut tape, vec![1, 1, 2], vec![2.0, 6.0]);
        // midway between the two horizontal pixel centers
        let pts = leaf(&mut tape, vec![1, 2], vec![0.5, 0.5]);
        let y = tape.bilinear_sample(map, pts).unwrap();
        assert!((tape.data(y)[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sample_outside_is_zero_padded() {
        let mut tape = Tape::new();
        let map = leaf(&mut tape, vec![1, 2, 2], vec![1.0; 4]);
        let pts = leaf(&mut tape, vec![2, 2], vec![-2.0, 0.5, 3.0, 0.5]);
        let y = tape.bilinear_sample(map, pts).unwrap();
        assert_eq!(tape.data(y), &[0.0, 0.0]);
    }

    #[test]
    fn interpolate_identity_when_same_size() {
        let mut tape = Tape::new();
        let map = leaf(&mut tape, vec![2, 2, 2], (0..8).map(f64::from).collect());
        let y = tape.interpolate_bilinear(map, 2, 2).unwrap();
        assert_eq!(tape.data(y), tape.data(map));
    }

    #[test]
    fn interpolate_constant_stays_constant() {
        let mut tape = Tape::new();
        let map = leaf(&mut tape, vec![1, 3, 3], vec![0.7; 9]);
        let y = tape.interpolate_bilinear(map, 7, 5).unwrap();
        for &v in tape.data(y) {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolate_hand_example() {
        // [0, 1] resized 2 -> 4 under align-corners=false
        let mut tape = Tape::new();
        let map = leaf(&mut tape, vec![1, 1, 2], vec![0.0, 1.0]);
        let y = tape.interpolate_bilinear(map, 1, 4).unwrap();
        let expect = [0.0, 0.25, 0.75, 1.0];
        for (a, b) in tape.data(y).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
