//! Dense f32 tensors and the handful of layers the classifiers need, each
//! with a hand-derived backward pass.

mod layers;

pub use layers::*;

use crate::error::{Error, Result};

/// Row-major f32 buffer with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.iter().all(|&e| e >= 1), "tensor extents must be positive: {shape:?}");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Shape(format!("invalid extents {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Extent of the last axis.
    pub fn row_width(&self) -> usize {
        *self.shape.last().unwrap()
    }

    /// Number of rows when viewed as a matrix over the last axis.
    pub fn num_rows(&self) -> usize {
        self.data.len() / self.row_width()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.row_width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let w = self.row_width();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn fill(&mut self, v: f32) {
        self.data.fill(v);
    }
}

/// How the optimizer treats a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Embedding table; row 0 (empty-space token) is frozen at zero.
    Embedding,
    /// Weight matrix or kernel; subject to weight decay.
    Weight,
    /// Bias vector; no weight decay.
    Bias,
}

/// A named trainable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub role: ParamRole,
    pub value: Tensor,
    pub grad: Tensor,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, role: ParamRole, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            role,
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
