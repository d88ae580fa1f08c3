//! Define-by-run computation graph.
//!
//! Every operation appends a node holding its output value, the ids of its
//! inputs and a backward rule. Because inputs must already exist when a node
//! is recorded, append order is a topological order and `backward` simply
//! walks the node list in reverse. All reductions run left to right on a
//! single thread, so identical inputs give bit-identical gradients.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// What a backward rule gets to see.
pub struct BackwardCtx<'a, T> {
    pub inputs: Vec<&'a Tensor<T>>,
    pub output: &'a Tensor<T>,
    pub upstream: &'a [T],
    /// `needs[i]` is false when input `i` does not require a gradient and the
    /// rule may return `None` for it.
    pub needs: Vec<bool>,
}

/// Maps the upstream gradient to one optional gradient per input.
pub type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>>>;

struct Node<T> {
    op: &'static str,
    value: Tensor<T>,
    inputs: Vec<NodeId>,
    requires_grad: bool,
    backward: Option<BackwardFn<T>>,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_done: bool,
    check_finite: bool,
    checkpoints: Vec<(String, NodeId)>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            check_finite: false,
            checkpoints: Vec::new(),
        }
    }

    /// A graph that validates every recorded output and fails with
    /// [`Error::NonFinite`] naming the offending op.
    pub fn with_finite_checks() -> Self {
        Self {
            check_finite: true,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. It takes part in backward iff
    /// `tensor.requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> NodeId {
        let requires_grad = tensor.requires_grad;
        self.push(Node {
            op: "leaf",
            value: Tensor { grad: None, ..tensor },
            inputs: Vec::new(),
            requires_grad,
            backward: None,
        })
    }

    /// Records a trainable leaf regardless of the tensor's own flag.
    pub fn param(&mut self, tensor: &Tensor<T>) -> NodeId {
        let mut value = Tensor::new(tensor.shape().to_vec(), tensor.data().to_vec())
            .expect("tensor invariants hold");
        value.requires_grad = true;
        self.leaf(value)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> NodeId {
        self.leaf(Tensor {
            requires_grad: false,
            ..tensor
        })
    }

    /// Same value as `id`, cut off from backward.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let value = self.nodes[id.0].value.clone();
        self.push(Node {
            op: "detach",
            value: Tensor {
                requires_grad: false,
                ..value
            },
            inputs: Vec::new(),
            requires_grad: false,
            backward: None,
        })
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient of the last backward's loss with respect to `id`.
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn grad_tensor(&self, id: NodeId) -> Option<Tensor<T>> {
        self.grad(id).map(|g| {
            Tensor::new(self.shape(id).to_vec(), g.to_vec()).expect("grad matches node shape")
        })
    }

    /// Names a node for later inspection.
    pub fn mark(&mut self, name: impl Into<String>, id: NodeId) {
        self.checkpoints.push((name.into(), id));
    }

    pub fn checkpoints(&self) -> &[(String, NodeId)] {
        &self.checkpoints
    }

    pub fn checkpoint(&self, name: &str) -> Option<NodeId> {
        self.checkpoints
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, id)| id)
    }

    /// Drops all gradients so `backward` may run again.
    pub fn reset(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Appends an op node. The backward rule is dropped when no input needs a
    /// gradient.
    pub fn record(
        &mut self,
        op: &'static str,
        value: Tensor<T>,
        inputs: &[NodeId],
        backward: BackwardFn<T>,
    ) -> Result<NodeId> {
        if let Some(&bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::UnknownNode(bad.0));
        }
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFinite {
                op,
                node: self.nodes.len(),
            });
        }
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        Ok(self.push(Node {
            op,
            value: Tensor {
                requires_grad,
                grad: None,
                ..value
            },
            inputs: inputs.to_vec(),
            requires_grad,
            backward: requires_grad.then_some(backward),
        }))
    }

    fn push(&mut self, node: Node<T>) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Gradients accumulate additively over fan-out. Afterwards every node
    /// that requires a gradient holds one (zeros when it does not reach the
    /// loss).
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::UnknownNode(loss.0));
        }
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.nodes[loss.0].value.shape();
        if shape != [1] {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(rule) = node.backward.as_ref() else {
                continue;
            };
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let ctx = BackwardCtx {
                inputs: node.inputs.iter().map(|i| &self.nodes[i.0].value).collect(),
                output: &node.value,
                upstream: &upstream,
                needs: node
                    .inputs
                    .iter()
                    .map(|i| self.nodes[i.0].requires_grad)
                    .collect(),
            };
            let input_grads = rule(&ctx);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "op {}", node.op);
            for (input, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[idx] = Some(upstream);
        }

        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if node.requires_grad && g.is_none() {
                *g = Some(vec![T::zero(); node.value.numel()]);
            }
        }
        self.grads = grads;
        Ok(())
    }
}
