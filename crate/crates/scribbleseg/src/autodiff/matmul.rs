use super::tape::{grad_acc, Op, Tape, TensorId};
use super::Tensor;
use crate::error::{Error, Result};

impl Tape {
    /// 2-D matrix product: `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ta, tb) = (&self.tensors[a.0], &self.tensors[b.0]);
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(Error::shape(format!(
                "matmul: {:?} x {:?}",
                ta.shape, tb.shape
            )));
        }
        let (n, k, m) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut out = vec![0.0; n * m];
        mm_nn(&ta.data, &tb.data, n, k, m, &mut out);
        let req = ta.requires_grad || tb.requires_grad;
        self.push(vec![n, m], out, Op::Matmul { a: a.0, b: b.0 }, req, "matmul")
    }

    /// `[n, m] + [m]`, broadcast over rows.
    pub fn add_row_vec(&mut self, a: TensorId, v: TensorId) -> Result<TensorId> {
        let (ta, tv) = (&self.tensors[a.0], &self.tensors[v.0]);
        if ta.rank() != 2 || tv.rank() != 1 || tv.shape[0] != ta.shape[1] {
            return Err(Error::shape(format!(
                "add_row_vec: {:?} + {:?}",
                ta.shape, tv.shape
            )));
        }
        let m = ta.shape[1];
        let data: Vec<f64> = ta
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tv.data[i % m])
            .collect();
        let shape = ta.shape.clone();
        let req = ta.requires_grad || tv.requires_grad;
        self.push(shape, data, Op::AddRowVec { a: a.0, v: v.0 }, req, "add_row_vec")
    }

    /// `[c, n] + [c]`, broadcast over columns.
    pub fn add_col_vec(&mut self, a: TensorId, v: TensorId) -> Result<TensorId> {
        let (ta, tv) = (&self.tensors[a.0], &self.tensors[v.0]);
        if ta.rank() != 2 || tv.rank() != 1 || tv.shape[0] != ta.shape[0] {
            return Err(Error::shape(format!(
                "add_col_vec: {:?} + {:?}",
                ta.shape, tv.shape
            )));
        }
        let n = ta.shape[1];
        let mut data = ta.data.clone();
        for (row, &vv) in tv.data.iter().enumerate() {
            for x in &mut data[row * n..(row + 1) * n] {
                *x += vv;
            }
        }
        let shape = ta.shape.clone();
        let req = ta.requires_grad || tv.requires_grad;
        self.push(shape, data, Op::AddColVec { a: a.0, v: v.0 }, req, "add_col_vec")
    }

    /// Affine map `x @ weight + bias` with `x: [n, k]`, `weight: [k, m]`,
    /// `bias: [m]`.
    pub fn linear(&mut self, x: TensorId, weight: TensorId, bias: TensorId) -> Result<TensorId> {
        let y = self.matmul(x, weight)?;
        self.add_row_vec(y, bias)
    }
}

pub(crate) fn backward(
    tensors: &[Tensor],
    a: usize,
    b: usize,
    _out: usize,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let (n, k) = (tensors[a].shape[0], tensors[a].shape[1]);
    let m = tensors[b].shape[1];
    // da = g @ bᵀ
    let bd = &tensors[b].data;
    if let Some(ga) = grad_acc(tensors, grads, a) {
        mm_nt(g, bd, n, m, k, ga);
    }
    // db = aᵀ @ g
    let ad = &tensors[a].data;
    if let Some(gb) = grad_acc(tensors, grads, b) {
        mm_tn(ad, g, n, k, m, gb);
    }
}

/// out += a[n,k] @ b[k,m]
pub(crate) fn mm_nn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out += a[n,k] @ b[m,k]ᵀ  ->  [n, m]
fn mm_nt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            let dot: f64 = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
            out[i * m + j] += dot;
        }
    }
}

/// out += a[n,k]ᵀ @ b[n,m]  ->  [k, m]
fn mm_tn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}
