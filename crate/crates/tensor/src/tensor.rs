use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{grad_enabled, next_node_id};
use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

/// Gradient function of one recorded op: takes the node's output gradient
/// and returns one gradient per parent (`None` for parents that do not
/// require grad).
pub(crate) type BackFn<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>>>;

pub(crate) struct Inner<T: Scalar> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Rc<Vec<T>>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: RefCell<Option<Vec<T>>>,
    pub(crate) parents: Vec<Tensor<T>>,
    pub(crate) backward_fn: Option<BackFn<T>>,
}

/// A dense row-major tensor. Cloning is cheap (shared handle); the value
/// buffer is immutable once created, only the gradient slot mutates.
pub struct Tensor<T: Scalar = f32> {
    pub(crate) inner: Rc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

impl<T: Scalar> Tensor<T> {
    // ── Construction ─────────────────────────────────────────────────

    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::InvalidArgument {
                op: "from_vec",
                msg: format!(
                    "shape {:?} needs {} elements, got {}",
                    shape,
                    numel,
                    data.len()
                ),
            });
        }
        Ok(Self::leaf(data, shape.to_vec(), false))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::leaf(vec![T::zero(); numel], shape.to_vec(), false)
    }

    pub fn full(value: T, shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::leaf(vec![value; numel], shape.to_vec(), false)
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(vec![value], vec![1], false)
    }

    /// Samples i.i.d. `N(0, std^2)` entries from the given RNG.
    pub fn randn<R: Rng>(rng: &mut R, std: f64, shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        let dist = Normal::new(0.0f64, std).expect("std must be finite and non-negative");
        let data = (0..numel).map(|_| T::from_f64(dist.sample(rng))).collect();
        Self::leaf(data, shape.to_vec(), false)
    }

    /// Marks this tensor as a trainable leaf. Consumes and returns the
    /// handle so construction chains read naturally. The result is a new
    /// leaf node; any graph history of `self` is dropped.
    pub fn requires_grad(self, yes: bool) -> Self {
        Tensor {
            inner: Rc::new(Inner {
                id: next_node_id(),
                shape: self.inner.shape.clone(),
                data: Rc::clone(&self.inner.data),
                requires_grad: yes,
                grad: RefCell::new(None),
                parents: Vec::new(),
                backward_fn: None,
            }),
        }
    }

    pub(crate) fn leaf(data: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> Self {
        Tensor {
            inner: Rc::new(Inner {
                id: next_node_id(),
                shape,
                data: Rc::new(data),
                requires_grad,
                grad: RefCell::new(None),
                parents: Vec::new(),
                backward_fn: None,
            }),
        }
    }

    /// Builds an op output node. The backward closure is only constructed
    /// when at least one parent requires grad and grad mode is enabled;
    /// otherwise the result is a detached constant.
    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        back: impl FnOnce() -> BackFn<T>,
    ) -> Self {
        let recording = grad_enabled() && parents.iter().any(|p| p.inner.requires_grad);
        if !recording {
            return Self::leaf(data, shape, false);
        }
        Tensor {
            inner: Rc::new(Inner {
                id: next_node_id(),
                shape,
                data: Rc::new(data),
                requires_grad: true,
                grad: RefCell::new(None),
                parents,
                backward_fn: Some(back()),
            }),
        }
    }

    // ── Accessors ────────────────────────────────────────────────────

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<T>> {
        Rc::clone(&self.inner.data)
    }

    pub fn is_requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// The single value of a 1-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(TensorError::InvalidArgument {
                op: "item",
                msg: format!("tensor has shape {:?}", self.shape()),
            });
        }
        Ok(self.inner.data[0])
    }

    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.inner.shape.as_slice() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(TensorError::BadRank {
                op,
                expected: 4,
                shape: self.inner.shape.clone(),
            }),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    // ── Gradient access ──────────────────────────────────────────────

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn has_grad(&self) -> bool {
        self.inner.grad.borrow().is_some()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn set_grad(&self, g: Vec<T>) {
        *self.inner.grad.borrow_mut() = Some(g);
    }

    pub(crate) fn grad_slot(&self) -> &RefCell<Option<Vec<T>>> {
        &self.inner.grad
    }

    // ── Graph structure ──────────────────────────────────────────────

    pub(crate) fn parents(&self) -> &[Tensor<T>] {
        &self.inner.parents
    }

    pub(crate) fn backward_fn(&self) -> Option<&BackFn<T>> {
        self.inner.backward_fn.as_ref()
    }

    /// A constant view of the same buffer, severed from the graph.
    pub fn detach(&self) -> Self {
        Tensor {
            inner: Rc::new(Inner {
                id: next_node_id(),
                shape: self.inner.shape.clone(),
                data: Rc::clone(&self.inner.data),
                requires_grad: false,
                grad: RefCell::new(None),
                parents: Vec::new(),
                backward_fn: None,
            }),
        }
    }

    /// Same buffer under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.inner.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let src_shape = self.inner.shape.clone();
        Ok(Tensor::from_op(
            self.inner.data.as_ref().clone(),
            shape.to_vec(),
            vec![self.clone()],
            move || {
                let _ = &src_shape;
                Box::new(move |g: &[T]| vec![Some(g.to_vec())])
            },
        ))
    }
}
