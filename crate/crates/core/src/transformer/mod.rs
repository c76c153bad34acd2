//! Encoder-decoder sequence model built on the recording tape.
//!
//! Parameters live in a [`ParamStore`] outside any tape; each forward pass
//! mounts them as leaves on a fresh tape, so one optimizer step can consume
//! the gradients of a whole batch graph and the tape is then dropped.

mod blocks;
mod consequent;
mod init;

pub use consequent::{TransformerConfig, TransformerConsequent};
pub use init::{positional_encoding, Initializer};

use crate::error::{Error, Result};
use crate::numerics::{AdamState, Tape, Tensor, Var};

/// Index of one named parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

/// Named, ordered parameter collection. Order is insertion order and is the
/// contract for mounting, optimizer state, and checkpoints.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.names.iter().any(|n| *n == name) {
            return Err(Error::config(format!("duplicate parameter name {name:?}")));
        }
        if !tensor.is_finite() {
            return Err(Error::NonFinite("parameter init"));
        }
        self.names.push(name);
        self.tensors.push(tensor.param());
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    /// Overwrites one parameter by name, keeping its shape.
    pub fn set_by_name(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::config(format!("unknown parameter {name:?}")))?;
        if tensor.shape() != self.tensors[i].shape() {
            return Err(Error::ShapeMismatch {
                expected: self.tensors[i].shape().to_vec(),
                got: tensor.shape().to_vec(),
            });
        }
        self.tensors[i] = tensor.param();
        Ok(())
    }

    /// Leafs every parameter onto `tape`, in store order. `vars[id]` is the
    /// mounted handle of `ParamId(id)`.
    pub fn mount(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Collects gradients for mounted params after `tape.backward`. A
    /// parameter the graph never touched gets a zero gradient.
    pub fn collect_grads(&self, tape: &Tape, vars: &[Var]) -> Result<Vec<Tensor>> {
        if vars.len() != self.tensors.len() {
            return Err(Error::contract("mounted var list does not match store"));
        }
        Ok(vars
            .iter()
            .zip(&self.tensors)
            .map(|(&v, t)| match tape.grad(v) {
                Some(g) => g.clone(),
                None => Tensor::zeros(t.shape().to_vec()),
            })
            .collect())
    }

    /// One optimizer step over every parameter, in store order.
    pub fn apply_step(&mut self, adam: &mut AdamState, grads: &[Tensor]) -> Result<()> {
        let mut params: Vec<&mut Tensor> = self.tensors.iter_mut().collect();
        let grefs: Vec<&Tensor> = grads.iter().collect();
        adam.step(&mut params, &grefs)
    }

    /// Sum of squared entries over all parameters, for diagnostics.
    pub fn squared_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data())
            .map(|&v| (v as f64) * (v as f64))
            .sum()
    }
}
