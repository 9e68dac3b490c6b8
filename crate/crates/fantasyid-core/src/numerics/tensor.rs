use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::scalar::Scalar;

/// Errors raised by tensor construction and ops.
#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: invalid argument: {detail}")]
    Invalid { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Shape { op, detail: detail.into() }
    }
    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Invalid { op, detail: detail.into() }
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with tape recording disabled. Ops executed inside produce
/// plain tensors with no parents, so sampling loops do not retain the
/// whole denoiser graph in memory.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    GRAD_ENABLED.with(|g| {
        let prev = g.replace(false);
        let out = f();
        g.set(prev);
        out
    })
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

struct Node<S: Scalar> {
    parents: Vec<Tensor<S>>,
    /// Receives the gradient of the loss w.r.t. this tensor's data and
    /// accumulates contributions into the parents.
    backward: Box<dyn Fn(&[S])>,
}

struct Inner<S: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<S>>,
    grad: RefCell<Option<Vec<S>>>,
    requires_grad: Cell<bool>,
    node: RefCell<Option<Node<S>>>,
}

/// Reference-counted n-dimensional array participating in a dynamic
/// reverse-mode tape. Cloning is cheap and aliases the same storage.
///
/// Gradients accumulate across `backward` calls; the optimizer (or test)
/// is responsible for zeroing them between steps.
pub struct Tensor<S: Scalar> {
    inner: Rc<Inner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad.get())
            .finish()
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::shape(
                "from_vec",
                format!("shape {:?} wants {} elements, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape: shape.to_vec(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: Cell::new(false),
                node: RefCell::new(None),
            }),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::from_vec(shape, vec![S::zero(); numel]).expect("consistent shape")
    }

    pub fn full(shape: &[usize], v: S) -> Self {
        let numel: usize = shape.iter().product();
        Self::from_vec(shape, vec![v; numel]).expect("consistent shape")
    }

    pub fn scalar(v: S) -> Self {
        Self::from_vec(&[1], vec![v]).expect("consistent shape")
    }

    /// Marks this tensor as a differentiable leaf. Only meaningful on
    /// tensors that are not op outputs.
    pub fn enable_grad(&self) -> &Self {
        self.inner.requires_grad.set(true);
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.borrow().len()
    }

    /// Length of the trailing axis; row-wise ops operate over this.
    pub fn last_dim(&self) -> usize {
        *self.inner.shape.last().unwrap_or(&1)
    }

    /// Number of rows when the tensor is viewed as `[numel / last_dim, last_dim]`.
    pub fn rows(&self) -> usize {
        let ld = self.last_dim();
        if ld == 0 {
            0
        } else {
            self.numel() / ld
        }
    }

    pub fn data(&self) -> Ref<'_, Vec<S>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.inner.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> S {
        let d = self.inner.data.borrow();
        assert_eq!(d.len(), 1, "item() on tensor with {} elements", d.len());
        d[0]
    }

    /// Overwrites leaf storage in place (optimizer update). The tape, if
    /// any, is not informed, so this must only touch leaves.
    pub fn set_data(&self, new: &[S]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), new.len(), "set_data length mismatch");
        d.copy_from_slice(new);
    }

    pub fn grad(&self) -> Option<Vec<S>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Copy of the data as a fresh leaf detached from the tape.
    pub fn detach(&self) -> Tensor<S> {
        Tensor::from_vec(&self.inner.shape, self.to_vec()).expect("same shape")
    }

    /// True when gradients must flow into this tensor: it is either a
    /// differentiable leaf or an op output with live parents.
    pub(crate) fn needs_flow(&self) -> bool {
        self.inner.requires_grad.get() || self.inner.node.borrow().is_some()
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[S]) {
        if !self.needs_flow() {
            return;
        }
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += *ci;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    /// Builds an op output. Records a tape node when grad mode is on and
    /// at least one parent can receive gradient; otherwise the result is
    /// a plain constant tensor.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<S>,
        parents: Vec<Tensor<S>>,
        backward: impl Fn(&[S]) + 'static,
    ) -> Result<Self, TensorError> {
        #[cfg(debug_assertions)]
        {
            if data.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite { op });
            }
        }
        let _ = op;
        let numel: usize = shape.iter().product();
        debug_assert_eq!(numel, data.len(), "{op}: internal shape bug");
        let record = grad_enabled() && parents.iter().any(|p| p.needs_flow());
        let t = Tensor::from_vec(&shape, data)?;
        if record {
            *t.inner.node.borrow_mut() = Some(Node { parents, backward: Box::new(backward) });
        }
        Ok(t)
    }

    /// Reverse-mode sweep from a scalar loss. Populates `grad` on every
    /// reachable differentiable leaf and consumes the tape: intermediate
    /// grads and nodes are dropped as soon as they have been used.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar { shape: self.inner.shape.clone() });
        }

        // Iterative post-order DFS; training graphs are deep enough that
        // recursion is not safe.
        let mut topo: Vec<Tensor<S>> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<S>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                topo.push(t);
                continue;
            }
            if !seen.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = t.inner.node.borrow().as_ref() {
                for p in &node.parents {
                    if !seen.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }

        self.accumulate_grad_seed();
        for t in topo.iter().rev() {
            let node = t.inner.node.borrow_mut().take();
            let grad = if node.is_some() && !t.requires_grad() {
                // Intermediate: its grad is complete (topo order), hand it
                // to the closure and free it.
                t.inner.grad.borrow_mut().take()
            } else {
                t.inner.grad.borrow().clone()
            };
            if let (Some(node), Some(grad)) = (node, grad) {
                (node.backward)(&grad);
            }
        }
        Ok(())
    }

    fn accumulate_grad_seed(&self) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => g[0] += S::one(),
            None => *slot = Some(vec![S::one()]),
        }
    }
}
