//! Named parameter storage with gradient and momentum buffers.

use crate::error::{NetError, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use tensorcore::{optim, Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
    /// Buffers (batch-norm running stats) are stored but never optimized.
    pub trainable: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StoreMeta {
    pub spec_hash: u64,
    pub seed: u64,
    pub epoch: u32,
}

/// Ordered map name -> tensor. Insertion order is the optimizer and
/// serialization order, so identical build sequences give identical bytes.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
    pub meta: StoreMeta,
}

impl ParameterStore {
    pub fn new(meta: StoreMeta) -> Self {
        Self { params: Vec::new(), index: HashMap::new(), meta }
    }

    pub fn add(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(NetError::DuplicateParameter(name.to_string()));
        }
        let shape = value.shape().to_vec();
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: Tensor::zeros(shape.clone()),
            velocity: Tensor::zeros(shape),
            trainable,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn idx(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| NetError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.params[self.idx(name)?].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let i = self.idx(name)?;
        Ok(&mut self.params[i].value)
    }

    pub fn param(&self, i: usize) -> &Param {
        &self.params[i]
    }

    /// Count of trainable scalar parameters.
    pub fn trainable_elements(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.numel()).sum()
    }

    /// Bind every parameter as a tape leaf (used by auxiliary heads).
    pub fn bind_all(&self, tape: &mut Tape, trainable: bool) -> Vec<(usize, Var)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| (i, tape.leaf(p.value.clone(), trainable && p.trainable)))
            .collect()
    }

    /// Add the tape gradients of bound leaves into the stored grad buffers.
    pub fn accumulate_grads(&mut self, tape: &Tape, bindings: &[(usize, Var)]) {
        for &(i, var) in bindings {
            if let Some(g) = tape.grad(var) {
                let buf = self.params[i].grad.data_mut();
                for (b, gv) in buf.iter_mut().zip(g) {
                    *b += gv;
                }
            }
        }
    }

    /// SGD with momentum over every trainable parameter, then zero grads:
    /// `v <- m*v + g + wd*w; w <- w - lr*v`.
    pub fn sgd_momentum_step(&mut self, lr: f32, momentum: f32, weight_decay: f32) -> Result<()> {
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            optim::sgd_momentum_update(
                p.value.data_mut(),
                p.grad.data(),
                p.velocity.data_mut(),
                lr,
                momentum,
                weight_decay,
            )?;
        }
        self.zero_grads();
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.iter_mut() {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Bit-exact equality of every parameter payload.
    pub fn bytes_equal(&self, other: &ParameterStore) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.value.shape() == b.value.shape()
                    && a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// Fingerprint of all parameter payloads (used for provenance records).
    pub fn payload_hash(&self) -> u64 {
        let mut bytes = Vec::new();
        for p in &self.params {
            bytes.extend_from_slice(p.name.as_bytes());
            for v in p.value.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        tensorcore::hash::fnv1a64(&bytes)
    }
}
