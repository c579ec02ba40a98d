//! Named parameter storage.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Learnable tensors receive gradients and optimizer updates; buffers
/// (batch-norm running statistics) are state carried alongside them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Learnable,
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor<S>,
}

/// Ordered, name-addressable collection of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S> {
    params: Vec<Param<S>>,
    by_name: BTreeMap<String, usize>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, kind: ParamKind, mut tensor: Tensor<S>) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            bail!(Config, "duplicate parameter name {name}");
        }
        tensor.set_requires_grad(kind == ParamKind::Learnable);
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.into(),
            kind,
            tensor,
        });
        self.by_name.insert(name.into(), id.0);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<S> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<S> {
        &mut self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.params[id.0].tensor
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<S>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<S>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn learnable(&self) -> impl Iterator<Item = (ParamId, &Param<S>)> {
        self.iter().filter(|(_, p)| p.kind == ParamKind::Learnable)
    }

    /// Number of learnable scalars.
    pub fn learnable_count(&self) -> usize {
        self.learnable().map(|(_, p)| p.tensor.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Concatenation of all learnable values in store order.
    pub fn flat_values(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.learnable_count());
        for (_, p) in self.learnable() {
            out.extend_from_slice(p.tensor.data());
        }
        out
    }

    /// Concatenation of all learnable gradients (zeros where absent).
    pub fn flat_grads(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.learnable_count());
        for (_, p) in self.learnable() {
            match p.tensor.grad() {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(core::iter::repeat_n(S::zero(), p.tensor.len())),
            }
        }
        out
    }

    pub fn load_flat_values(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.learnable_count() {
            bail!(Dimension, "flat parameter vector has wrong length");
        }
        let mut at = 0;
        for p in self.params.iter_mut().filter(|p| p.kind == ParamKind::Learnable) {
            let n = p.tensor.len();
            p.tensor.data_mut().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// `(param, offset within the flat learnable vector)` per learnable tensor.
    pub fn flat_layout(&self) -> Vec<(ParamId, usize)> {
        let mut at = 0;
        self.learnable()
            .map(|(id, p)| {
                let r = (id, at);
                at += p.tensor.len();
                r
            })
            .collect()
    }
}

/// Seeded source for the fan-in scaled uniform weight initialization.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn fan_in<S: Scalar>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<S> {
        let bound = 1.0 / num_traits::Float::sqrt(fan_in.max(1) as f64);
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| S::of(self.rng.gen_range(-bound..=bound))).collect();
        Tensor::from_vec(shape, data).expect("shape and data agree")
    }

    pub fn uniform<S: Scalar>(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<S> {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| S::of(self.rng.gen_range(lo..hi))).collect();
        Tensor::from_vec(shape, data).expect("shape and data agree")
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

pub fn ones<S: Scalar>(n: usize) -> Tensor<S> {
    Tensor::from_vec(&[n], vec![S::one(); n]).expect("non-empty")
}
