//! Dense-tensor arithmetic with tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive operation applied to [`Tensor`]s
//! created on it. Calling [`Tensor::backward`] on a scalar replays the
//! tape in reverse topological order and accumulates gradients into the
//! tracked leaves (see [`Tape::param`]). Leaves created with
//! [`Tape::constant`] never appear in the resulting [`GradientMap`].
//!
//! Tensors are immutable after creation and the tape is single-writer:
//! run concurrent forward evaluations on independent tapes sharing the
//! same read-only weight [`Array`]s.

mod attention;
mod gradcheck;
mod io;
mod ops;

pub use attention::{mhsa, AttentionWeights};
pub use gradcheck::{finite_diff_gradients, max_rel_error};
pub use io::{load_arrays, save_arrays};

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Scalar type for all tensor data. 64-bit by default; the `real32`
/// feature switches benchmark builds to 32-bit.
#[cfg(not(feature = "real32"))]
pub type Real = f64;
#[cfg(feature = "real32")]
pub type Real = f32;

/// Plain dense array: shape plus row-major data, no differentiation record.
/// Used for weights, inputs, goldens, and I/O.
#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<Real>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<Real>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Array { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Array {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: Vec<usize>, value: Real) -> Self {
        let numel = shape.iter().product();
        Array {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: Real) -> Self {
        Array {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn max_abs(&self) -> Real {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) enum LeafKind {
    Param,
    Constant,
}

/// Backward rule: maps the node's output gradient to one gradient
/// contribution per parent, in parent order.
type BackFn = Box<dyn Fn(&[Real]) -> Vec<Vec<Real>>>;

pub(crate) struct Node {
    shape: Vec<usize>,
    data: Rc<Vec<Real>>,
    parents: Vec<usize>,
    back: Option<BackFn>,
    leaf: Option<LeafKind>,
}

pub(crate) struct TapeInner {
    nodes: Vec<Node>,
    pair_count: u64,
    attn_nanos: u128,
}

/// Ordered record of primitive operations; replaying backward visits them
/// in exact reverse topological order.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                pair_count: 0,
                attn_nanos: 0,
            })),
        }
    }

    fn push(
        &self,
        shape: Vec<usize>,
        data: Vec<Real>,
        parents: Vec<usize>,
        back: Option<BackFn>,
        leaf: Option<LeafKind>,
    ) -> Tensor {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len();
        inner.nodes.push(Node {
            shape: shape.clone(),
            data: Rc::new(data),
            parents,
            back,
            leaf,
        });
        Tensor {
            tape: self.clone(),
            idx,
            shape,
        }
    }

    /// Tracked leaf: its gradient appears in the [`GradientMap`].
    pub fn param(&self, array: &Array) -> Tensor {
        self.push(
            array.shape.clone(),
            array.data.clone(),
            vec![],
            None,
            Some(LeafKind::Param),
        )
    }

    /// Untracked leaf: participates in the forward pass but is excluded
    /// from the gradient map (frozen weights, inputs, zero padding).
    pub fn constant(&self, array: &Array) -> Tensor {
        self.push(
            array.shape.clone(),
            array.data.clone(),
            vec![],
            None,
            Some(LeafKind::Constant),
        )
    }

    pub fn zeros(&self, shape: Vec<usize>) -> Tensor {
        self.constant(&Array::zeros(shape))
    }

    /// Query-key token-pair interactions recorded by [`mhsa`] so far.
    pub fn pair_count(&self) -> u64 {
        self.inner.borrow().pair_count
    }

    pub fn reset_pair_count(&self) {
        self.inner.borrow_mut().pair_count = 0;
    }

    pub(crate) fn add_pairs(&self, n: u64) {
        self.inner.borrow_mut().pair_count += n;
    }

    /// Wall time accumulated inside attention evaluations, in seconds.
    pub fn attn_seconds(&self) -> f64 {
        self.inner.borrow().attn_nanos as f64 * 1e-9
    }

    pub(crate) fn add_attn_nanos(&self, nanos: u128) {
        self.inner.borrow_mut().attn_nanos += nanos;
    }

    pub fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone)]
pub struct Tensor {
    tape: Tape,
    idx: usize,
    shape: Vec<usize>,
}

impl Tensor {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn idx(&self) -> usize {
        self.idx
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<Real>> {
        Rc::clone(&self.tape.inner.borrow().nodes[self.idx].data)
    }

    pub fn value(&self) -> Vec<Real> {
        (*self.data_rc()).clone()
    }

    pub fn array(&self) -> Array {
        Array {
            shape: self.shape.clone(),
            data: self.value(),
        }
    }

    pub fn scalar(&self) -> Result<Real> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data_rc()[0])
    }

    pub(crate) fn push_op(
        &self,
        shape: Vec<usize>,
        data: Vec<Real>,
        parents: Vec<usize>,
        back: BackFn,
    ) -> Tensor {
        self.tape.push(shape, data, parents, Some(back), None)
    }

    pub(crate) fn check_same_tape(&self, other: &Tensor) -> Result<()> {
        if !self.tape.same_tape(&other.tape) {
            return Err(Error::contract(
                "operands recorded on different tapes".to_string(),
            ));
        }
        Ok(())
    }

    /// Reverse-mode gradients of a scalar loss for every reachable
    /// tracked leaf. Leaves accumulate (sum) gradients from all uses.
    pub fn backward(&self) -> Result<GradientMap> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape
            )));
        }
        let inner = self.tape.inner.borrow();
        let mut grads: Vec<Option<Vec<Real>>> = vec![None; self.idx + 1];
        grads[self.idx] = Some(vec![1.0]);
        let mut map = HashMap::new();
        for i in (0..=self.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &inner.nodes[i];
            if let Some(LeafKind::Param) = node.leaf {
                map.insert(
                    i,
                    Array {
                        shape: node.shape.clone(),
                        data: g,
                    },
                );
                continue;
            }
            let Some(back) = &node.back else { continue };
            let contribs = back(&g);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (p, c) in node.parents.iter().zip(contribs) {
                match &mut grads[*p] {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&c) {
                            *a += *v;
                        }
                    }
                    slot => *slot = Some(c),
                }
            }
        }
        Ok(GradientMap { map })
    }
}

/// Leaf-index → gradient array, produced by [`Tensor::backward`].
pub struct GradientMap {
    map: HashMap<usize, Array>,
}

impl GradientMap {
    pub fn get(&self, leaf: &Tensor) -> Option<&Array> {
        self.map.get(&leaf.idx)
    }

    pub fn contains(&self, leaf: &Tensor) -> bool {
        self.map.contains_key(&leaf.idx)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
