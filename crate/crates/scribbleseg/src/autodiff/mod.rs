//! Dense-tensor reverse-mode autodiff engine.
//!
//! A [`Tape`] owns every tensor produced during a forward computation and
//! records one operation node per output. [`Tape::backward`] walks the nodes
//! in reverse, accumulating gradients additively on fan-out, and deposits the
//! result into the `grad` field of each leaf tensor that requested it.
//!
//! Tensors are immutable once created; a tape is single-owner. Evaluating
//! independent samples concurrently means giving each its own tape.

mod conv;
mod matmul;
mod norm;
mod sample;
mod tape;

pub use sample::DeformMeta;
pub use tape::{Tape, TensorId};

use crate::error::{Error, Result};

/// Dense N-dimensional array of f64 values in row-major order.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    /// Filled by `Tape::backward` for leaf tensors with `requires_grad`.
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::shape(format!(
                "data length {} does not match shape {:?} (numel {})",
                data.len(),
                shape,
                numel
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }
}
