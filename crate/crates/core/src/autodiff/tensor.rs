//! Dense 64-bit float tensors with gradient storage.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Backing storage for a [`Tensor`]: flat row-major values plus an optional
/// gradient buffer of the same length.
pub struct TensorData {
    pub(crate) shape: Vec<usize>,
    pub(crate) values: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: Option<Vec<f64>>,
}

/// A node in a reverse-mode differentiation graph.
///
/// `Tensor` is a cheap shared handle: cloning it clones the handle, not the
/// values. Parameters live outside any graph and keep their accumulated
/// gradients across graph rebuilds until [`Tensor::zero_grad`] is called.
#[derive(Clone)]
pub struct Tensor(Rc<RefCell<TensorData>>);

impl Tensor {
    /// Builds a tensor from flat row-major values.
    pub fn new(shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != values.len() || shape.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "tensor construction",
                left: shape.to_vec(),
                right: vec![values.len()],
            });
        }
        Ok(Tensor(Rc::new(RefCell::new(TensorData {
            shape: shape.to_vec(),
            values,
            requires_grad,
            grad: None,
        }))))
    }

    /// An all-zero tensor.
    pub fn zeros(shape: &[usize], requires_grad: bool) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel], requires_grad).expect("consistent shape")
    }

    /// A single-element tensor of shape `[1]`.
    pub fn scalar(value: f64) -> Tensor {
        Tensor::new(&[1], vec![value], false).expect("consistent shape")
    }

    /// A tensor with entries drawn i.i.d. from `Normal(0, std)`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut impl Rng, requires_grad: bool) -> Tensor {
        let numel: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let values: Vec<f64> = (0..numel).map(|_| dist.sample(rng)).collect();
        Tensor::new(shape, values, requires_grad).expect("consistent shape")
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.0.borrow().values.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.borrow().requires_grad
    }

    /// Copy of the flat row-major values.
    pub fn values(&self) -> Vec<f64> {
        self.0.borrow().values.clone()
    }

    /// The value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let d = self.0.borrow();
        assert_eq!(d.values.len(), 1, "item() requires a single-element tensor");
        d.values[0]
    }

    /// Copy of the accumulated gradient, if any backward pass has reached
    /// this tensor since the last [`Tensor::zero_grad`].
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.borrow().grad.clone()
    }

    /// Clears the accumulated gradient.
    pub fn zero_grad(&self) {
        self.0.borrow_mut().grad = None;
    }

    /// Overwrites the values in place, keeping the shape.
    pub fn set_values(&self, values: &[f64]) -> Result<()> {
        let mut d = self.0.borrow_mut();
        if values.len() != d.values.len() {
            return Err(Error::ShapeMismatch {
                op: "set_values",
                left: d.shape.clone(),
                right: vec![values.len()],
            });
        }
        d.values.copy_from_slice(values);
        Ok(())
    }

    /// Adds `delta` to one coordinate; used by finite differences.
    pub fn nudge(&self, index: usize, delta: f64) {
        self.0.borrow_mut().values[index] += delta;
    }

    /// Two handles referencing the same storage?
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub(crate) fn data(&self) -> Ref<'_, TensorData> {
        self.0.borrow()
    }

    /// Adds a contribution into the gradient buffer, allocating zeros first
    /// if no gradient has been recorded yet.
    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut d = self.0.borrow_mut();
        debug_assert_eq!(delta.len(), d.values.len());
        match &mut d.grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => d.grad = Some(delta.to_vec()),
        }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.0.borrow();
        f.debug_struct("Tensor")
            .field("shape", &d.shape)
            .field("requires_grad", &d.requires_grad)
            .field("values", &d.values)
            .finish()
    }
}
