//! Dense row-major tensors with tape-free reverse-mode differentiation.
//!
//! Every [`Tensor`] produced by a differentiable op keeps a backpointer to the
//! op that created it and the operand tensors. [`Tensor::backward`] walks that
//! graph in reverse topological order and accumulates gradients into leaf
//! tensors created with [`Tensor::param`]. Intermediate gradients are
//! discarded once propagated.
//!
//! Values are generic over [`Float`] so oracle and finite-difference checks can
//! run in `f64` while training runs in `f32`.

mod autograd;
pub mod gradcheck;
mod nn_ops;
mod ops;
mod shape;

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

pub use gradcheck::{grad_check, relative_error, GradCheckReport, ParamError};
pub(crate) use nn_ops::surrogate_grad;
pub(crate) use ops::sigmoid;
pub use nn_ops::{BnMode, RunningStats};
pub use shape::{broadcast_shapes, numel};

/// Element type of a tensor.
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + 'static
{
    const DTYPE: DType;

    /// `c = alpha * a @ b + beta * c` over strided row/column layouts.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

fn check_extent<T>(buf: &[T], rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < buf.len(), "gemm operand out of bounds");
}

macro_rules! impl_float {
    ($t:ty, $dtype:expr, $kernel:path) => {
        impl Float for $t {
            const DTYPE: DType = $dtype;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                check_extent(a, m, k, rsa, csa);
                check_extent(b, k, n, rsb, csb);
                check_extent(c, m, n, rsc, csc);
                // SAFETY: every operand extent was bounds-checked above.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }
        }
    };
}

impl_float!(f32, DType::F32, matrixmultiply::sgemm);
impl_float!(f64, DType::F64, matrixmultiply::dgemm);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording a graph. Results are detached tensors.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Maps the upstream gradient to one optional gradient per parent. The mask
/// says which parents actually need one.
pub(crate) type BackwardFn<F> = Box<dyn Fn(&[F], &[bool]) -> Vec<Option<Vec<F>>>>;

pub(crate) struct GradFn<F: Float> {
    pub(crate) name: &'static str,
    pub(crate) parents: Vec<Tensor<F>>,
    pub(crate) backward: BackwardFn<F>,
}

pub(crate) struct Node<F: Float> {
    shape: Vec<usize>,
    data: RefCell<Vec<F>>,
    grad: RefCell<Option<Vec<F>>>,
    requires_grad: bool,
    grad_fn: Option<GradFn<F>>,
}

/// Reference-counted handle to a node of the computation graph.
pub struct Tensor<F: Float> {
    node: Rc<Node<F>>,
}

impl<F: Float> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Self {
            node: Rc::clone(&self.node),
        }
    }
}

impl<F: Float> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.node.data.borrow();
        let mut d = f.debug_struct("Tensor");
        d.field("shape", &self.node.shape);
        if data.len() <= 16 {
            d.field("values", &*data);
        }
        if let Some(g) = &self.node.grad_fn {
            d.field("op", &g.name);
        }
        d.field("requires_grad", &self.node.requires_grad).finish()
    }
}

impl<F: Float> Tensor<F> {
    fn make(shape: Vec<usize>, data: Vec<F>, requires_grad: bool, grad_fn: Option<GradFn<F>>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self {
            node: Rc::new(Node {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                grad_fn,
            }),
        }
    }

    /// A constant (non-differentiable) tensor.
    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape("from_vec", shape, &[data.len()]));
        }
        Ok(Self::make(shape.to_vec(), data, false, None))
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&x| F::c(x)).collect())
    }

    /// A trainable leaf that accumulates gradients.
    pub fn param(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape("param", shape, &[data.len()]));
        }
        Ok(Self::make(shape.to_vec(), data, true, None))
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        Self::make(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, F::one())
    }

    pub fn scalar(value: F) -> Self {
        Self::make(Vec::new(), vec![value], false, None)
    }

    /// Creates the output of a differentiable op. The graph edge is only
    /// recorded when grad mode is on and some parent requires a gradient.
    pub(crate) fn from_op(
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<F>,
        parents: Vec<Tensor<F>>,
        backward: BackwardFn<F>,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if track {
            Self::make(
                shape,
                data,
                true,
                Some(GradFn {
                    name,
                    parents,
                    backward,
                }),
            )
        } else {
            Self::make(shape, data, false, None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.node.shape)
    }

    pub fn values(&self) -> Ref<'_, Vec<F>> {
        self.node.data.borrow()
    }

    /// Mutable access to the stored values. Intended for optimizers and
    /// finite-difference probes on leaf tensors.
    pub fn values_mut(&self) -> RefMut<'_, Vec<F>> {
        self.node.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.node.data.borrow().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.node.data.borrow().iter().map(|x| x.f64()).collect()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> F {
        let data = self.node.data.borrow();
        assert_eq!(data.len(), 1, "item() on tensor of shape {:?}", self.node.shape);
        data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Whether this tensor records the op that produced it.
    pub fn has_node(&self) -> bool {
        self.node.grad_fn.is_some()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.node.grad_fn.as_ref().map(|g| g.name)
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[F]) {
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Copy of the values with no graph attached.
    pub fn detach(&self) -> Self {
        Self::make(self.node.shape.clone(), self.to_vec(), false, None)
    }

    pub fn ptr_eq(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.node, &other.node)
    }

    pub(crate) fn node_id(&self) -> usize {
        Rc::as_ptr(&self.node) as usize
    }

    pub(crate) fn grad_fn(&self) -> Option<&GradFn<F>> {
        self.node.grad_fn.as_ref()
    }

    /// Converts to another precision. The result is a constant.
    pub fn cast<G: Float>(&self) -> Tensor<G> {
        let data = self.node.data.borrow().iter().map(|x| G::c(x.f64())).collect();
        Tensor::make(self.node.shape.clone(), data, false, None)
    }
}

/// A tensor whose values are all exactly `0.0` or `1.0`.
#[derive(Clone, Debug)]
pub struct SpikeTensor<F: Float>(Tensor<F>);

impl<F: Float> SpikeTensor<F> {
    /// Validates binarity.
    pub fn try_new(t: Tensor<F>) -> Result<Self> {
        if t.values().iter().all(|&v| v == F::zero() || v == F::one()) {
            Ok(Self(t))
        } else {
            Err(Error::InvalidArgument("tensor is not binary".into()))
        }
    }

    pub(crate) fn new_unchecked(t: Tensor<F>) -> Self {
        Self(t)
    }

    pub fn as_tensor(&self) -> &Tensor<F> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<F> {
        self.0
    }
}

impl<F: Float> std::ops::Deref for SpikeTensor<F> {
    type Target = Tensor<F>;

    fn deref(&self) -> &Tensor<F> {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_len() {
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        let t = Tensor::<f64>::from_vec(&[2, 2], vec![0.0; 4]).unwrap();
        assert_eq!(t.numel(), 4);
        assert!(!t.has_node());
    }

    #[test]
    fn detached_tensor_has_no_node() {
        let w = Tensor::<f64>::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = w.mul(&w).unwrap();
        assert!(y.has_node());
        let d = y.detach();
        assert!(!d.has_node());
        assert!(!d.requires_grad());
        assert_eq!(d.to_vec(), vec![1.0, 4.0]);
    }

    #[test]
    fn no_grad_skips_graph() {
        let w = Tensor::<f64>::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = no_grad(|| w.mul(&w).unwrap());
        assert!(!y.has_node());
        assert!(grad_enabled());
    }

    #[test]
    fn spike_tensor_rejects_non_binary() {
        let t = Tensor::<f32>::from_vec(&[3], vec![0.0, 1.0, 0.5]).unwrap();
        assert!(SpikeTensor::try_new(t).is_err());
        let t = Tensor::<f32>::from_vec(&[2], vec![0.0, 1.0]).unwrap();
        assert!(SpikeTensor::try_new(t).is_ok());
    }
}
