//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every forward op as a node holding its value and a
//! backward closure; [`Graph::backward`] replays the tape in reverse and
//! accumulates gradients additively, so a leaf used twice receives the sum of
//! both path contributions. Values are immutable once recorded; ops never
//! mutate their inputs.

mod conv;
mod gradcheck;
mod ops;

pub use conv::conv2d_reference;
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Off-graph tensor buffer: parameters, datasets, anything that outlives a
/// single forward/backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Value<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Value<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data length mismatch"
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

/// Backward closure: receives the output gradient, returns one gradient per
/// recorded input (same order). Input values needed by the closure are
/// captured as `Arc` clones at record time.
pub(crate) type BackFn<T> = Box<dyn Fn(&[T]) -> Vec<Vec<T>> + Send>;

pub(crate) struct Node<T> {
    pub shape: Vec<usize>,
    pub value: Arc<Vec<T>>,
    pub inputs: Vec<TensorId>,
    pub requires_grad: bool,
    pub grad: Option<Vec<T>>,
    pub back: Option<BackFn<T>>,
}

/// Wengert tape: ordered record of forward ops. Insertion order is the
/// topological order; node inputs always precede their consumers.
pub struct Graph<T: Real> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Insert a leaf tensor. Gradients are collected here when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Value<T>, requires_grad: bool) -> TensorId {
        self.push(value.shape, value.data, vec![], requires_grad, None)
    }

    /// Insert a constant (no gradient).
    pub fn constant(&mut self, value: Value<T>) -> TensorId {
        self.leaf(value, false)
    }

    pub(crate) fn push(
        &mut self,
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: Vec<TensorId>,
        requires_grad: bool,
        back: Option<BackFn<T>>,
    ) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            shape,
            value: Arc::new(data),
            inputs,
            requires_grad,
            grad: None,
            back,
        });
        id
    }

    /// Record an op node; `requires_grad` is inherited from the inputs.
    pub(crate) fn push_op(
        &mut self,
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: Vec<TensorId>,
        back: BackFn<T>,
    ) -> TensorId {
        let rg = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.push(shape, data, inputs, rg, if rg { Some(back) } else { None })
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].value
    }

    pub(crate) fn value_arc(&self, id: TensorId) -> Arc<Vec<T>> {
        Arc::clone(&self.nodes[id.0].value)
    }

    /// Gradient of the most recent `backward` w.r.t. this node, if any.
    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn to_value(&self, id: TensorId) -> Value<T> {
        Value {
            shape: self.nodes[id.0].shape.clone(),
            data: self.nodes[id.0].value.to_vec(),
        }
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn numel(&self, id: TensorId) -> usize {
        self.nodes[id.0].value.len()
    }

    /// Reverse pass from a scalar loss. Populates `grad` on every
    /// `requires_grad` node reachable from the loss.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(Error::Contract(
                "loss does not depend on any requires_grad leaf".into(),
            ));
        }
        self.accumulate(loss, vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || self.nodes[i].back.is_none() {
                continue;
            }
            let out_grad = std::mem::take(self.nodes[i].grad.as_mut().unwrap());
            let input_grads = (self.nodes[i].back.as_ref().unwrap())(&out_grad);
            self.nodes[i].grad = Some(out_grad);
            let inputs = self.nodes[i].inputs.clone();
            debug_assert_eq!(inputs.len(), input_grads.len());
            for (inp, g) in inputs.into_iter().zip(input_grads) {
                if self.nodes[inp.0].requires_grad {
                    self.accumulate(inp, g);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: TensorId, g: Vec<T>) {
        debug_assert_eq!(g.len(), self.nodes[id.0].value.len());
        match &mut self.nodes[id.0].grad {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    *a += *b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }
}

#[cfg(test)]
mod tests;
