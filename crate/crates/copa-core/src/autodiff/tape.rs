use std::collections::HashMap;

use thiserror::Error;

use super::store::ParamStore;

/// Rows × columns of a 2-D row-major tensor.
pub type Shape = (usize, usize);

/// Handle to a node on a [`Tape`]. Cheap to copy; only valid for the tape
/// that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("softmax_masked: row {row} is fully masked")]
    FullyMaskedRow { row: usize },
    #[error("backward requires a scalar loss, got {0}x{1}")]
    NonScalarLoss(usize, usize),
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Matmul { a: usize, b: usize, ta: bool, tb: bool },
    Add { a: usize, b: usize },
    /// `[n, d] + [1, d]` with the right operand broadcast over rows.
    AddRow { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, k: f64 },
    AddScalar { a: usize },
    Concat { parts: Vec<usize>, axis: usize },
    Slice { a: usize, start: usize, len: usize, axis: usize },
    Sum { a: usize },
    Mean { a: usize },
    Relu { a: usize },
    Elu { a: usize },
    Sigmoid { a: usize },
    Tanh { a: usize },
    Exp { a: usize },
    Log { a: usize },
    Square { a: usize },
    /// Row-wise softmax over entries where `mask != 0`; masked entries are
    /// excluded from the normalization and output exactly 0.
    SoftmaxMasked { a: usize, mask: Vec<f64> },
}

pub(crate) struct Node {
    pub shape: Shape,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
    pub op: Op,
}

/// Identifies a parameter leaf so gradients can be flushed back to its store.
struct ParamBinding {
    node: usize,
    store_tag: usize,
    param_idx: usize,
}

/// A computation tape. One tape per rollout episode or per training shard;
/// confined to a single thread.
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    bindings: Vec<ParamBinding>,
    param_cache: HashMap<(usize, String), Var>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            bindings: Vec::new(),
            param_cache: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    /// Scalar value of a `[1, 1]` node.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].shape, (1, 1));
        self.nodes[v.0].values[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub(crate) fn push(&mut self, shape: Shape, values: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.0 * shape.1, values.len());
        self.nodes.push(Node {
            shape,
            values,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; never receives a gradient.
    pub fn leaf(&mut self, shape: Shape, values: Vec<f64>) -> Var {
        self.push(shape, values, false, Op::Leaf)
    }

    /// Leaf that participates in gradient flow but is not a parameter
    /// (e.g. reparameterization noise shaped inputs under test).
    pub fn leaf_grad(&mut self, shape: Shape, values: Vec<f64>) -> Var {
        self.push(shape, values, true, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, v: f64) -> Var {
        self.leaf((1, 1), vec![v])
    }

    /// Injects a named parameter from `store` as a leaf, caching so repeated
    /// requests within one tape return the same node. `store_tag`
    /// distinguishes online from target stores; pass `trainable = false` for
    /// target-network stores so backward prunes them.
    pub fn param(&mut self, store_tag: usize, store: &ParamStore, name: &str, trainable: bool) -> Var {
        if let Some(v) = self.param_cache.get(&(store_tag, name.to_string())) {
            return *v;
        }
        let idx = store.index_of(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        let entry = store.entry(idx);
        let v = self.push(entry.shape, entry.values.clone(), trainable, Op::Leaf);
        if trainable {
            self.bindings.push(ParamBinding {
                node: v.0,
                store_tag,
                param_idx: idx,
            });
        }
        self.param_cache.insert((store_tag, name.to_string()), v);
        v
    }

    /// Reverse pass from a scalar loss. Gradients of reachable nodes are
    /// stored on the tape; call [`Tape::accumulate_grads`] to flush parameter
    /// gradients into their stores.
    pub fn backward(&mut self, loss: Var) -> Result<(), TapeError> {
        let n = &self.nodes[loss.0];
        if n.shape != (1, 1) {
            return Err(TapeError::NonScalarLoss(n.shape.0, n.shape.1));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i);
        }
        Ok(())
    }

    /// Adds parameter gradients recorded under `store_tag` into `store`.
    pub fn accumulate_grads(&self, store_tag: usize, store: &mut ParamStore) {
        for b in &self.bindings {
            if b.store_tag != store_tag {
                continue;
            }
            if let Some(g) = &self.nodes[b.node].grad {
                store.entry_mut(b.param_idx).add_grad(g);
            }
        }
    }

    pub(crate) fn ensure_grad(&mut self, idx: usize) -> &mut Vec<f64> {
        let len = self.nodes[idx].values.len();
        self.nodes[idx].grad.get_or_insert_with(|| vec![0.0; len])
    }
}
