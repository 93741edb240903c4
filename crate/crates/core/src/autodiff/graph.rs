//! Op tape for one forward pass.
//!
//! Every op appends a node whose VJP closure maps the node's output gradient
//! to gradients of its parents; backward walks the tape in exact reverse
//! order, which is reverse topological because ops only reference earlier
//! nodes.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub type NodeId = usize;

pub(crate) type VjpFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

pub(crate) struct Node {
    pub value: Tensor,
    pub parents: Vec<NodeId>,
    pub vjp: Option<VjpFn>,
    pub param: Option<usize>,
    /// f64 shadow for scalar reductions, so finite-difference oracles are
    /// not limited by float32 quantization of the loss value.
    pub hi: Option<f64>,
}

/// A named trainable tensor with persistent Adam moments.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape;
        Parameter {
            name: name.into(),
            value,
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
        }
    }
}

/// Ordered collection of parameters; order is the training iteration order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    pub params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.params.push(Parameter::new(name, value));
        self.params.len() - 1
    }

    /// Kaiming-style normal init for a conv weight [co, ci, k, k].
    pub fn add_conv(
        &mut self,
        name: &str,
        co: usize,
        ci: usize,
        k: usize,
        rng: &mut impl Rng,
    ) -> (usize, usize) {
        let fan_in = (ci * k * k) as f32;
        let std = (2.0 / fan_in).sqrt();
        let dist = Normal::new(0.0f32, std).unwrap();
        let w = Tensor::from_vec(
            [co, ci, k, k],
            (0..co * ci * k * k).map(|_| dist.sample(rng)).collect(),
        );
        let wi = self.add(format!("{name}.w"), w);
        let bi = self.add(format!("{name}.b"), Tensor::from_vec([1, co, 1, 1], vec![0.0; co]));
        (wi, bi)
    }

    /// Linear layer [out, in] weight plus bias; `scale` 0 gives a zero init.
    pub fn add_linear(
        &mut self,
        name: &str,
        out: usize,
        inp: usize,
        scale: f32,
        rng: &mut impl Rng,
    ) -> (usize, usize) {
        let std = if scale == 0.0 {
            0.0
        } else {
            scale * (1.0 / inp as f32).sqrt()
        };
        let data = if std == 0.0 {
            vec![0.0; out * inp]
        } else {
            let dist = Normal::new(0.0f32, std).unwrap();
            (0..out * inp).map(|_| dist.sample(rng)).collect()
        };
        let wi = self.add(format!("{name}.w"), Tensor::from_vec([1, 1, out, inp], data));
        let bi = self.add(format!("{name}.b"), Tensor::vector(&vec![0.0; out]));
        (wi, bi)
    }

    /// Per-channel affine (instance-norm gain/bias), gain 1 bias 0.
    pub fn add_norm(&mut self, name: &str, c: usize) -> (usize, usize) {
        let gi = self.add(format!("{name}.g"), Tensor::from_vec([1, c, 1, 1], vec![1.0; c]));
        let bi = self.add(format!("{name}.b"), Tensor::from_vec([1, c, 1, 1], vec![0.0; c]));
        (gi, bi)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// FNV-1a hash of the raw parameter bytes; used for stage-isolation audits.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for p in &self.params {
            for v in &p.value.data {
                for b in v.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}

/// Recorded op tape for one forward pass.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record a leaf (no parents). Its gradient is available after backward.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, vec![], None, None).expect("leaf values must be finite")
    }

    /// Record a parameter leaf; its gradient is collected by `param_grads`.
    pub fn param(&mut self, ps: &ParamSet, index: usize) -> NodeId {
        self.push(ps.params[index].value.clone(), vec![], None, Some(index))
            .expect("parameter values must be finite")
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> [usize; 4] {
        self.nodes[id].value.shape
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor,
        parents: Vec<NodeId>,
        vjp: Option<VjpFn>,
        param: Option<usize>,
    ) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite("op output".into()));
        }
        self.nodes.push(Node {
            value,
            parents,
            vjp,
            param,
            hi: None,
        });
        Ok(self.nodes.len() - 1)
    }

    pub(crate) fn set_hi(&mut self, id: NodeId, v: f64) {
        self.nodes[id].hi = Some(v);
    }

    pub(crate) fn hi(&self, id: NodeId) -> Option<f64> {
        self.nodes[id].hi
    }

    /// Scalar value in f64, using the high-precision shadow when a reduction
    /// recorded one.
    pub fn value_f64(&self, id: NodeId) -> f64 {
        self.nodes[id].hi.unwrap_or_else(|| self.nodes[id].value.item() as f64)
    }

    /// Reverse pass from a scalar loss. Returns per-node gradients; the tape
    /// is left intact so values can still be read, but is meant for one use.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.nodes[loss].value.is_scalar() {
            return Err(Error::ShapeMismatch("backward requires a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Tensor::scalar(1.0));
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if let Some(vjp) = &node.vjp {
                let parent_grads = vjp(&g);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (pid, pg) in node.parents.iter().zip(parent_grads) {
                    if !pg.all_finite() {
                        return Err(Error::NonFinite("gradient".into()));
                    }
                    match &mut grads[*pid] {
                        Some(acc) => acc.add_assign(&pg),
                        slot => *slot = Some(pg),
                    }
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self
                .nodes
                .iter()
                .enumerate()
                .filter_map(|(id, n)| n.param.map(|p| (id, p)))
                .collect(),
        })
    }
}

/// Gradients of one backward pass, addressable by node or by parameter index.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(NodeId, usize)>,
}

impl Gradients {
    pub fn of(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    /// Accumulated gradient per parameter index (a parameter used at several
    /// tape positions sums its contributions).
    pub fn param_grads(&self) -> HashMap<usize, Tensor> {
        let mut out: HashMap<usize, Tensor> = HashMap::new();
        for (id, pidx) in &self.params {
            if let Some(g) = &self.grads[*id] {
                out.entry(*pidx)
                    .and_modify(|acc| acc.add_assign(g))
                    .or_insert_with(|| g.clone());
            }
        }
        out
    }
}
