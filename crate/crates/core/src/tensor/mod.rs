//! Dense tensors and a small reverse-mode autodiff tape.
//!
//! Everything differentiable in the crate (MLP forward passes, the contrastive
//! losses, distribution matching) is expressed as a sequence of primitive ops
//! recorded on a [`Tape`]. Training loops run at `f32`; the gradient oracles
//! and verification paths instantiate the same code at `f64`.

mod gradcheck;
pub(crate) mod kernels;
mod tape;

use std::fmt::{Debug, Display};

use num_traits::Float;
use thiserror::Error;

pub use gradcheck::{finite_difference_grad, relative_error};
pub use tape::{Gradients, Tape, Var};

/// Scalar element type of a tensor.
pub trait Element: Float + Default + Debug + Display + Send + Sync + 'static {
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} holds {expected} elements but {found} were given")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("variable {0} does not belong to this tape")]
    UnknownVar(usize),
    #[error("{0}")]
    Invalid(String),
}

pub type TensorResult<T> = std::result::Result<T, TensorError>;

/// Row-major dense array with an optional gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F = f32> {
    shape: Vec<usize>,
    data: Vec<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
}

impl<F: Element> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> TensorResult<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ElementCount {
                shape,
                expected,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "Tensor::new" });
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![F::zero(); n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn full(shape: Vec<usize>, value: F) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(value: F) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = F::one();
        }
        t
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<F>]) -> TensorResult<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(TensorError::ShapeMismatch {
                op: "from_rows",
                left: vec![cols],
                right: vec![bad.len()],
            });
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    /// Lifts `f64` values into this precision.
    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> TensorResult<Self> {
        Self::new(shape, data.iter().map(|&v| F::of_f64(v)).collect())
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<F>) -> TensorResult<()> {
        if grad.len() != self.data.len() {
            return Err(TensorError::ElementCount {
                shape: self.shape.clone(),
                expected: self.data.len(),
                found: grad.len(),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> TensorResult<F> {
        if self.data.len() != 1 {
            return Err(TensorError::NonScalarRoot(self.shape.clone()));
        }
        Ok(self.data[0])
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> TensorResult<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::Invalid(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() < 2 {
            self.data.len()
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[F] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Gathers the listed rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> TensorResult<Self> {
        let (rows, cols) = self.dims2()?;
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::Invalid(format!(
                    "row index {i} out of range for {rows} rows"
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            shape: vec![indices.len(), cols],
            data,
            grad: None,
            requires_grad: false,
        })
    }

    /// In-place update that keeps the finiteness invariant.
    pub fn update<G>(&mut self, mut f: G) -> TensorResult<()>
    where
        G: FnMut(usize, F) -> F,
    {
        for (i, v) in self.data.iter_mut().enumerate() {
            *v = f(i, *v);
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "update" });
        }
        Ok(())
    }

    pub fn transpose(&self) -> TensorResult<Self> {
        let (r, c) = self.dims2()?;
        Ok(Self {
            shape: vec![c, r],
            data: kernels::transpose(&self.data, r, c),
            grad: None,
            requires_grad: false,
        })
    }

    /// Converts to another precision (gradient slot is dropped).
    pub fn cast<G: Element>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::of_f64(v.as_f64())).collect(),
            grad: None,
            requires_grad: self.requires_grad,
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Plain matrix product without recording anything.
    pub fn matmul(&self, other: &Self) -> TensorResult<Self> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Self::new(vec![m, n], kernels::matmul_nn(&self.data, &other.data, m, k, n))
    }

    /// `self · otherᵀ` without recording anything.
    pub fn matmul_t(&self, other: &Self) -> TensorResult<Self> {
        let (m, k) = self.dims2()?;
        let (n, k2) = other.dims2()?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_t",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Self::new(vec![m, n], kernels::matmul_nt(&self.data, &other.data, m, k, n))
    }

    pub fn relu(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| if v > F::zero() { v } else { F::zero() })
                .collect(),
            grad: None,
            requires_grad: false,
        }
    }
}

/// Logistic function evaluated without overflow for either sign.
#[inline]
pub fn stable_sigmoid<F: Element>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_count_is_checked() {
        let err = Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::ElementCount { expected: 6, found: 5, .. }));
    }

    #[test]
    fn non_finite_construction_is_rejected() {
        assert!(Tensor::<f64>::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::<f32>::new(vec![1], vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn set_grad_requires_matching_length() {
        let mut t = Tensor::<f64>::zeros(vec![2, 2]);
        assert!(t.set_grad(vec![0.0; 3]).is_err());
        t.set_grad(vec![1.0; 4]).unwrap();
        assert_eq!(t.grad().unwrap().len(), 4);
    }

    #[test]
    fn identity_matmul_is_noop() {
        let x = Tensor::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let y = Tensor::identity(3).matmul(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn sigmoid_of_five() {
        // 1 / (1 + e^-5)
        assert!((stable_sigmoid(0.5f64 / 0.1) - 0.993_307_149_075_715_3).abs() < 1e-12);
        assert_eq!(stable_sigmoid(0.0f64), 0.5);
        assert!(stable_sigmoid(-800.0f64) >= 0.0);
        assert!(stable_sigmoid(800.0f64) <= 1.0);
    }

    #[test]
    fn select_rows_checks_bounds() {
        let x = Tensor::<f32>::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(x.select_rows(&[1, 1]).unwrap().data(), &[2.0, 2.0]);
        assert!(x.select_rows(&[2]).is_err());
    }
}
