use super::{conv, matmul, norm, sample, Tensor};
use crate::error::{Error, Result};

/// Handle to a tensor stored on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

pub(crate) enum Op {
    Leaf,
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    AddScalar { a: usize },
    MulScalar { a: usize, s: f64 },
    /// s - a
    RsubScalar { a: usize },
    Abs { a: usize },
    Log { a: usize },
    Sigmoid { a: usize },
    Clamp { a: usize, lo: f64, hi: f64 },
    Sum { a: usize },
    Mean { a: usize },
    Reshape { a: usize },
    Transpose { a: usize },
    ConcatCols { parts: Vec<usize> },
    SliceCols { a: usize, start: usize },
    Matmul { a: usize, b: usize },
    AddRowVec { a: usize, v: usize },
    AddColVec { a: usize, v: usize },
    Softmax { a: usize, axis: usize },
    LayerNorm { x: usize, gamma: usize, beta: usize, axis: usize, stats: Vec<f64> },
    Prelu { x: usize, slope: usize },
    Dropout { x: usize, mask: Vec<f64> },
    Conv2d { x: usize, k: usize, dims: conv::ConvDims },
    AddChanBias { x: usize, b: usize },
    BilinearSample { map: usize, points: usize },
    Interpolate { map: usize },
    DeformAgg { value: usize, offsets: usize, weights: usize, meta: Box<sample::DeformMeta> },
}

/// Records a forward computation so gradients can be propagated backwards.
pub struct Tape {
    pub(crate) tensors: Vec<Tensor>,
    pub(crate) ops: Vec<Op>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            tensors: Vec::new(),
            ops: Vec::new(),
        }
    }

    /// Registers an input tensor. Gradients are retained only for leaves
    /// with `requires_grad` set.
    pub fn leaf(&mut self, tensor: Tensor) -> Result<TensorId> {
        if !tensor.data.iter().all(|v| v.is_finite()) {
            return Err(Error::numerics("non-finite value in leaf tensor"));
        }
        self.tensors.push(tensor);
        self.ops.push(Op::Leaf);
        Ok(TensorId(self.tensors.len() - 1))
    }

    /// Registers a constant (no gradient tracking).
    pub fn constant(&mut self, tensor: Tensor) -> Result<TensorId> {
        let mut t = tensor;
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn scalar_const(&mut self, value: f64) -> Result<TensorId> {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.tensors[id.0].shape
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.tensors[id.0].data
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.tensors[id.0].numel(), 1);
        self.tensors[id.0].data[0]
    }

    /// Gradient buffer of a leaf, available after `backward`.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.tensors[id.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, id: TensorId) -> Option<Vec<f64>> {
        self.tensors[id.0].grad.take()
    }

    pub(crate) fn push(
        &mut self,
        shape: Vec<usize>,
        data: Vec<f64>,
        op: Op,
        requires_grad: bool,
        what: &str,
    ) -> Result<TensorId> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::numerics(format!("non-finite value produced by {what}")));
        }
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            shape,
            data,
            requires_grad,
            grad: None,
        });
        self.ops.push(op);
        Ok(TensorId(self.tensors.len() - 1))
    }

    pub(crate) fn req(&self, id: usize) -> bool {
        self.tensors[id].requires_grad
    }

    // ---- element-wise suite ----------------------------------------------

    fn binary_shape(&self, a: TensorId, b: TensorId, what: &str) -> Result<Vec<usize>> {
        let (ta, tb) = (&self.tensors[a.0], &self.tensors[b.0]);
        if ta.shape == tb.shape {
            Ok(ta.shape.clone())
        } else if tb.numel() == 1 {
            Ok(ta.shape.clone())
        } else if ta.numel() == 1 {
            Ok(tb.shape.clone())
        } else {
            Err(Error::shape(format!(
                "{what}: incompatible shapes {:?} vs {:?}",
                ta.shape, tb.shape
            )))
        }
    }

    fn binary(
        &mut self,
        a: TensorId,
        b: TensorId,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        let shape = self.binary_shape(a, b, what)?;
        let (da, db) = (&self.tensors[a.0].data, &self.tensors[b.0].data);
        let data = if da.len() == db.len() {
            da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect()
        } else if db.len() == 1 {
            da.iter().map(|&x| f(x, db[0])).collect()
        } else {
            db.iter().map(|&y| f(da[0], y)).collect()
        };
        let req = self.req(a.0) || self.req(b.0);
        self.push(shape, data, op, req, what)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add { a: a.0, b: b.0 })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul { a: a.0, b: b.0 })
    }

    pub fn add_scalar(&mut self, a: TensorId, s: f64) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let data = t.data.iter().map(|&x| x + s).collect();
        let (shape, req) = (t.shape.clone(), t.requires_grad);
        self.push(shape, data, Op::AddScalar { a: a.0 }, req, "add_scalar")
    }

    pub fn mul_scalar(&mut self, a: TensorId, s: f64) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let data = t.data.iter().map(|&x| x * s).collect();
        let (shape, req) = (t.shape.clone(), t.requires_grad);
        self.push(shape, data, Op::MulScalar { a: a.0, s }, req, "mul_scalar")
    }

    /// s - a, element-wise.
    pub fn rsub_scalar(&mut self, s: f64, a: TensorId) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let data = t.data.iter().map(|&x| s - x).collect();
        let (shape, req) = (t.shape.clone(), t.requires_grad);
        self.push(shape, data, Op::RsubScalar { a: a.0 }, req, "rsub_scalar")
    }

    pub fn abs(&mut self, a: TensorId) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let data = t.data.iter().map(|&x| x.abs()).collect();
        let (shape, req) = (t.shape.clone(), t.requires_grad);
        self.push(shape, data, Op::Abs { a: a.0 }, req, "abs")
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let data = t.data.iter().map(|&x| x.ln()).collect();
        let (shape, req) = (t.shape.clone(), t.requires_grad);
        self.push(shape, data, Op::Log { a: a.0 }, req, "log")
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let data = t.data.iter().map(|&x| sigmoid(x)).collect();
        let (shape, req) = (t.shape.clone(), t.requires_grad);
        self.push(shape, data, Op::Sigmoid { a: a.0 }, req, "sigmoid")
    }

    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let data = t.data.iter().map(|&x| x.clamp(lo, hi)).collect();
        let (shape, req) = (t.shape.clone(), t.requires_grad);
        self.push(shape, data, Op::Clamp { a: a.0, lo, hi }, req, "clamp")
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let s = t.data.iter().sum();
        let req = t.requires_grad;
        self.push(vec![1], vec![s], Op::Sum { a: a.0 }, req, "sum")
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let s: f64 = t.data.iter().sum();
        let n = t.numel() as f64;
        let req = t.requires_grad;
        self.push(vec![1], vec![s / n], Op::Mean { a: a.0 }, req, "mean")
    }

    // ---- shape plumbing ----------------------------------------------------

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let numel: usize = shape.iter().product();
        if numel != t.numel() {
            return Err(Error::shape(format!(
                "reshape: {:?} -> {:?} changes element count",
                t.shape, shape
            )));
        }
        let (data, req) = (t.data.clone(), t.requires_grad);
        self.push(shape, data, Op::Reshape { a: a.0 }, req, "reshape")
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        let [r, c]: [usize; 2] = t
            .shape
            .as_slice()
            .try_into()
            .map_err(|_| Error::shape(format!("transpose expects rank 2, got {:?}", t.shape)))?;
        let mut data = vec![0.0; r * c];
        transpose_into(&t.data, r, c, &mut data);
        let req = t.requires_grad;
        self.push(vec![c, r], data, Op::Transpose { a: a.0 }, req, "transpose")
    }

    /// Concatenates `[c, n_i]` tensors along the column axis.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols: no inputs"));
        }
        let c = self.tensors[parts[0].0].shape[0];
        let mut total = 0usize;
        for &p in parts {
            let t = &self.tensors[p.0];
            if t.rank() != 2 || t.shape[0] != c {
                return Err(Error::shape(format!(
                    "concat_cols: expected [{c}, *], got {:?}",
                    t.shape
                )));
            }
            total += t.shape[1];
        }
        let mut data = vec![0.0; c * total];
        let mut col = 0usize;
        for &p in parts {
            let t = &self.tensors[p.0];
            let n = t.shape[1];
            for row in 0..c {
                data[row * total + col..row * total + col + n]
                    .copy_from_slice(&t.data[row * n..(row + 1) * n]);
            }
            col += n;
        }
        let req = parts.iter().any(|&p| self.req(p.0));
        let op = Op::ConcatCols {
            parts: parts.iter().map(|p| p.0).collect(),
        };
        self.push(vec![c, total], data, op, req, "concat_cols")
    }

    /// Extracts columns `[start, start+len)` of a `[c, n]` tensor.
    pub fn slice_cols(&mut self, a: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let t = &self.tensors[a.0];
        if t.rank() != 2 {
            return Err(Error::shape(format!("slice_cols expects rank 2, got {:?}", t.shape)));
        }
        let (c, n) = (t.shape[0], t.shape[1]);
        if start + len > n {
            return Err(Error::shape(format!(
                "slice_cols: [{start}, {}) out of {n} columns",
                start + len
            )));
        }
        let mut data = vec![0.0; c * len];
        for row in 0..c {
            data[row * len..(row + 1) * len]
                .copy_from_slice(&t.data[row * n + start..row * n + start + len]);
        }
        let req = t.requires_grad;
        self.push(vec![c, len], data, Op::SliceCols { a: a.0, start }, req, "slice_cols")
    }

    // ---- backward ----------------------------------------------------------

    /// Backpropagates from a single-element output. Leaf tensors with
    /// `requires_grad` receive their accumulated gradient; fan-out adds.
    pub fn backward(&mut self, target: TensorId) -> Result<()> {
        if self.tensors[target.0].numel() != 1 {
            return Err(Error::shape(format!(
                "backward target must be a scalar, got {:?}",
                self.tensors[target.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.tensors.len()];
        grads[target.0] = Some(vec![1.0]);
        let mut leaf_grads: Vec<(usize, Vec<f64>)> = Vec::new();

        for i in (0..=target.0).rev() {
            if !self.tensors[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = self.ops[i] {
                leaf_grads.push((i, g));
            } else {
                backprop_node(&self.tensors, &self.ops[i], i, &g, &mut grads);
            }
        }
        for (i, g) in leaf_grads {
            self.tensors[i].grad = Some(g);
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn transpose_into(src: &[f64], r: usize, c: usize, dst: &mut [f64]) {
    for i in 0..r {
        for j in 0..c {
            dst[j * r + i] = src[i * c + j];
        }
    }
}

/// Gradient buffer for input `j`, or None when it does not track gradients.
pub(crate) fn grad_acc<'a>(
    tensors: &[Tensor],
    grads: &'a mut [Option<Vec<f64>>],
    j: usize,
) -> Option<&'a mut Vec<f64>> {
    if !tensors[j].requires_grad {
        return None;
    }
    Some(grads[j].get_or_insert_with(|| vec![0.0; tensors[j].data.len()]))
}

fn backprop_node(
    tensors: &[Tensor],
    op: &Op,
    out: usize,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    match op {
        Op::Leaf => unreachable!("leaf handled by caller"),
        Op::Add { a, b } => {
            for &(j, _other) in &[(*a, *b), (*b, *a)] {
                if let Some(gj) = grad_acc(tensors, grads, j) {
                    accumulate_maybe_bcast(gj, g);
                }
            }
        }
        Op::Sub { a, b } => {
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                accumulate_maybe_bcast(ga, g);
            }
            if let Some(gb) = grad_acc(tensors, grads, *b) {
                if gb.len() == g.len() {
                    for (o, &gi) in gb.iter_mut().zip(g) {
                        *o -= gi;
                    }
                } else {
                    gb[0] -= g.iter().sum::<f64>();
                }
            }
        }
        Op::Mul { a, b } => {
            let (da, db) = (&tensors[*a].data, &tensors[*b].data);
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                mul_backward_side(ga, g, db);
            }
            if let Some(gb) = grad_acc(tensors, grads, *b) {
                mul_backward_side(gb, g, da);
            }
        }
        Op::AddScalar { a } => {
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for (o, &gi) in ga.iter_mut().zip(g) {
                    *o += gi;
                }
            }
        }
        Op::MulScalar { a, s } => {
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for (o, &gi) in ga.iter_mut().zip(g) {
                    *o += s * gi;
                }
            }
        }
        Op::RsubScalar { a } => {
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for (o, &gi) in ga.iter_mut().zip(g) {
                    *o -= gi;
                }
            }
        }
        Op::Abs { a } => {
            let x = &tensors[*a].data;
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                    *o += gi * sign(xi);
                }
            }
        }
        Op::Log { a } => {
            let x = &tensors[*a].data;
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                    *o += gi / xi;
                }
            }
        }
        Op::Sigmoid { a } => {
            let y = &tensors[out].data;
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for ((o, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                    *o += gi * yi * (1.0 - yi);
                }
            }
        }
        Op::Clamp { a, lo, hi } => {
            let x = &tensors[*a].data;
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                    if xi > *lo && xi < *hi {
                        *o += gi;
                    }
                }
            }
        }
        Op::Sum { a } => {
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                let gi = g[0];
                for o in ga.iter_mut() {
                    *o += gi;
                }
            }
        }
        Op::Mean { a } => {
            let n = tensors[*a].data.len() as f64;
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                let gi = g[0] / n;
                for o in ga.iter_mut() {
                    *o += gi;
                }
            }
        }
        Op::Reshape { a } => {
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for (o, &gi) in ga.iter_mut().zip(g) {
                    *o += gi;
                }
            }
        }
        Op::Transpose { a } => {
            let [c, r]: [usize; 2] = tensors[out].shape.as_slice().try_into().unwrap();
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                // out = aᵀ, so da += gᵀ
                for i in 0..c {
                    for j in 0..r {
                        ga[j * c + i] += g[i * r + j];
                    }
                }
            }
        }
        Op::ConcatCols { parts } => {
            let total = tensors[out].shape[1];
            let c = tensors[out].shape[0];
            let mut col = 0usize;
            for &p in parts {
                let n = tensors[p].shape[1];
                if let Some(gp) = grad_acc(tensors, grads, p) {
                    for row in 0..c {
                        for k in 0..n {
                            gp[row * n + k] += g[row * total + col + k];
                        }
                    }
                }
                col += n;
            }
        }
        Op::SliceCols { a, start } => {
            let n = tensors[*a].shape[1];
            let c = tensors[out].shape[0];
            let len = tensors[out].shape[1];
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for row in 0..c {
                    for k in 0..len {
                        ga[row * n + start + k] += g[row * len + k];
                    }
                }
            }
        }
        Op::Matmul { a, b } => matmul::backward(tensors, *a, *b, out, g, grads),
        Op::AddRowVec { a, v } => {
            let m = tensors[*v].data.len();
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for (o, &gi) in ga.iter_mut().zip(g) {
                    *o += gi;
                }
            }
            if let Some(gv) = grad_acc(tensors, grads, *v) {
                for (i, &gi) in g.iter().enumerate() {
                    gv[i % m] += gi;
                }
            }
        }
        Op::AddColVec { a, v } => {
            let c = tensors[*v].data.len();
            let n = tensors[out].shape[1];
            if let Some(ga) = grad_acc(tensors, grads, *a) {
                for (o, &gi) in ga.iter_mut().zip(g) {
                    *o += gi;
                }
            }
            if let Some(gv) = grad_acc(tensors, grads, *v) {
                for row in 0..c {
                    gv[row] += g[row * n..(row + 1) * n].iter().sum::<f64>();
                }
            }
        }
        Op::Softmax { a, axis } => norm::softmax_backward(tensors, *a, out, *axis, g, grads),
        Op::LayerNorm { x, gamma, beta, axis, stats } => {
            norm::layer_norm_backward(tensors, *x, *gamma, *beta, *axis, stats, out, g, grads)
        }
        Op::Prelu { x, slope } => norm::prelu_backward(tensors, *x, *slope, g, grads),
        Op::Dropout { x, mask } => {
            if let Some(gx) = grad_acc(tensors, grads, *x) {
                for ((o, &gi), &mi) in gx.iter_mut().zip(g).zip(mask) {
                    *o += gi * mi;
                }
            }
        }
        Op::Conv2d { x, k, dims } => conv::backward(tensors, *x, *k, dims, g, grads),
        Op::AddChanBias { x, b } => conv::chan_bias_backward(tensors, *x, *b, g, grads),
        Op::BilinearSample { map, points } => {
            sample::bilinear_sample_backward(tensors, *map, *points, g, grads)
        }
        Op::Interpolate { map } => sample::interpolate_backward(tensors, *map, out, g, grads),
        Op::DeformAgg { value, offsets, weights, meta } => {
            sample::deform_agg_backward(tensors, *value, *offsets, *weights, meta, g, grads)
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate_maybe_bcast(gj: &mut [f64], g: &[f64]) {
    if gj.len() == g.len() {
        for (o, &gi) in gj.iter_mut().zip(g) {
            *o += gi;
        }
    } else {
        gj[0] += g.iter().sum::<f64>();
    }
}

fn mul_backward_side(gj: &mut Vec<f64>, g: &[f64], other: &[f64]) {
    if gj.len() == g.len() {
        if other.len() == g.len() {
            for ((o, &gi), &v) in gj.iter_mut().zip(g).zip(other) {
                *o += gi * v;
            }
        } else {
            let v = other[0];
            for (o, &gi) in gj.iter_mut().zip(g) {
                *o += gi * v;
            }
        }
    } else {
        // this side is the scalar operand
        gj[0] += g.iter().zip(other).map(|(&gi, &v)| gi * v).sum::<f64>();
    }
}
