//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Feature maps use the channels × height × width layout. Operations are
//! recorded on a [`Tape`] and differentiated with [`Tape::backward`].

mod conv;
mod gradcheck;
mod pool;
mod resample;
mod tape;

pub use conv::{conv_output_len, ConvSpec, Padding};
pub use gradcheck::{grad_check, GradCheck};
pub use pool::{pool_output_len, PoolSpec};
pub use resample::{center_crop, reflect_index};
pub use tape::{Tape, Var};

use thiserror::Error;

/// Errors raised by tensor operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch in {dim}: expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        dim: String,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: expected a tensor of rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: reflect padding of {amount} requires a spatial extent above {amount}, got {extent}")]
    ReflectTooLarge {
        op: &'static str,
        amount: usize,
        extent: usize,
    },
    #[error("{op}: kernel extent {extent} exceeds padded input extent {input}")]
    KernelTooLarge {
        op: &'static str,
        extent: usize,
        input: usize,
    },
    #[error("bilinear_upsample: target {target_h}x{target_w} is smaller than input {h}x{w}")]
    UpsampleTarget {
        h: usize,
        w: usize,
        target_h: usize,
        target_w: usize,
    },
    #[error("{op}: invalid parameter: {what}")]
    InvalidSpec { op: &'static str, what: String },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{op}: index {index} out of range {len}")]
    OutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{0}: selection is empty")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major array of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "Tensor::new",
                dim: "element count".into(),
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when every element is neither NaN nor infinite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Returns `(channels, height, width)` for a rank-3 feature map.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            _ => Err(TensorError::Rank {
                op: "chw",
                expected: 3,
                shape: self.shape.clone(),
            }),
        }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                dim: "element count".into(),
                expected: self.data.len(),
                actual: n,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Copies channels `start..start + len` of a rank-3 tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let (c, h, w) = self.chw()?;
        if start + len > c {
            return Err(TensorError::OutOfRange {
                op: "slice_channels",
                index: start + len,
                len: c,
            });
        }
        let plane = h * w;
        Ok(Tensor {
            shape: vec![len, h, w],
            data: self.data[start * plane..(start + len) * plane].to_vec(),
        })
    }
}
