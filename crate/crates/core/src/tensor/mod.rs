//! Minimal define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a reference-counted node holding a row-major `f64`
//! buffer. Every forward operation on tensors that require gradients
//! records its inputs, so calling [`Tensor::backward`] on a scalar walks
//! the graph once in reverse topological order and accumulates
//! `∂loss/∂leaf` into each leaf's gradient buffer.
//!
//! Graphs are rebuilt on every forward pass. Tensors are `!Send`: one
//! graph lives on one thread.

mod backward;
mod gradcheck;
mod ops;
mod optim;

use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

pub use gradcheck::grad_check;
pub use optim::{sgd_step, Adam, Optimizer, OptimizerKind, Parameter};

pub(crate) use ops::Op;

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with graph recording disabled on this thread.
///
/// Tensors produced inside never require gradients, which keeps
/// evaluation passes from building graphs nobody will differentiate.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

struct Inner {
    shape: Vec<usize>,
    values: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    node: Option<Node>,
}

pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) inputs: Vec<Tensor>,
}

impl Tensor {
    /// Creates a constant tensor. Fails if `values` does not fill `shape`
    /// or a dimension is zero.
    pub fn new(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        Self::leaf(shape, values, false)
    }

    /// Creates a leaf that accumulates gradients.
    pub fn variable(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        Self::leaf(shape, values, true)
    }

    pub fn scalar(value: f64) -> Self {
        Self::leaf(&[], vec![value], false).expect("scalar shape is valid")
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, vec![0.0; shape.iter().product()])
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::new(shape, vec![1.0; shape.iter().product()])
    }

    /// Builds a `rows × cols` constant from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::contract("ragged rows"));
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    fn leaf(shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Dimension {
                op: "new",
                lhs: shape.to_vec(),
                rhs: vec![values.len()],
            });
        }
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::Dimension {
                op: "new",
                lhs: shape.to_vec(),
                rhs: vec![values.len()],
            });
        }
        Ok(Tensor(Rc::new(Inner {
            shape: shape.to_vec(),
            values: RefCell::new(values),
            grad: RefCell::new(None),
            requires_grad,
            node: None,
        })))
    }

    /// Links a freshly computed buffer into the graph.
    pub(crate) fn record(op: Op, inputs: Vec<Tensor>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(op.name()));
        }
        let requires_grad = grad_enabled() && inputs.iter().any(Tensor::requires_grad);
        let node = requires_grad.then_some(Node { op, inputs });
        Ok(Tensor(Rc::new(Inner {
            shape,
            values: RefCell::new(values),
            grad: RefCell::new(None),
            requires_grad,
            node,
        })))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn len(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.0.shape.first().copied().unwrap_or(1)
    }

    /// Size of the last axis.
    pub fn cols(&self) -> usize {
        self.0.shape.last().copied().unwrap_or(1)
    }

    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        self.0.values.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.values.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.0.values.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// A constant copy cut off from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::new(self.shape(), self.to_vec()).expect("shape already validated")
    }

    #[cfg(test)]
    pub(crate) fn set_values(&self, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.len());
        *self.0.values.borrow_mut() = values;
    }

    pub(crate) fn update_values(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.0.values.borrow_mut());
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn node(&self) -> Option<&Node> {
        self.0.node.as_ref()
    }

    pub(crate) fn id(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let values = self.values();
        let preview: Vec<f64> = values.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("values", &preview)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}
