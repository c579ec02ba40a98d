//! Parameterized layers: registration into a [`ParamStore`] and their
//! forward pass onto a [`Graph`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{BatchStats, Graph, Var};
use crate::error::Result;
use crate::kernels::conv::ConvGeom;
use crate::params::{ones, Initializer, ParamId, ParamKind, ParamStore};
use crate::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Bias-free convolution (every one is followed by batch-norm).
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub geom: ConvGeom,
}

#[derive(Clone, Copy, Debug)]
pub struct Bn {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Gru {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Padding that keeps the extent of an odd kernel.
pub fn same(k: usize) -> usize {
    (k - 1) / 2
}

/// Registers named, initialized parameters in a store.
pub struct Builder<'a, S> {
    pub store: &'a mut ParamStore<S>,
    pub init: &'a mut Initializer,
}

impl<S: Scalar> Builder<'_, S> {
    pub fn conv(&mut self, name: &str, c_in: usize, c_out: usize, geom: ConvGeom) -> Result<Conv> {
        let k = geom.kernel;
        let t = self.init.fan_in(&[c_out, c_in, k[0], k[1], k[2]], c_in * geom.volume());
        let weight = self.store.insert(&format!("{name}.weight"), ParamKind::Learnable, t)?;
        Ok(Conv {
            weight,
            c_in,
            c_out,
            geom,
        })
    }

    pub fn bn(&mut self, name: &str, c: usize) -> Result<Bn> {
        Ok(Bn {
            gamma: self.store.insert(&format!("{name}.gamma"), ParamKind::Learnable, ones(c))?,
            beta: self.store.insert(&format!("{name}.beta"), ParamKind::Learnable, Tensor::zeros(&[c]))?,
            running_mean: self.store.insert(&format!("{name}.running_mean"), ParamKind::Buffer, Tensor::zeros(&[c]))?,
            running_var: self.store.insert(&format!("{name}.running_var"), ParamKind::Buffer, ones(c))?,
            channels: c,
        })
    }

    pub fn gru(&mut self, name: &str, input: usize, hidden: usize) -> Result<Gru> {
        let h3 = 3 * hidden;
        Ok(Gru {
            w_ih: self.store.insert(
                &format!("{name}.w_ih"),
                ParamKind::Learnable,
                self.init.fan_in(&[h3, input], hidden),
            )?,
            w_hh: self.store.insert(
                &format!("{name}.w_hh"),
                ParamKind::Learnable,
                self.init.fan_in(&[h3, hidden], hidden),
            )?,
            b_ih: self.store.insert(&format!("{name}.b_ih"), ParamKind::Learnable, Tensor::zeros(&[h3]))?,
            b_hh: self.store.insert(&format!("{name}.b_hh"), ParamKind::Learnable, Tensor::zeros(&[h3]))?,
        })
    }

    pub fn linear(&mut self, name: &str, input: usize, output: usize) -> Result<Linear> {
        Ok(Linear {
            weight: self.store.insert(
                &format!("{name}.weight"),
                ParamKind::Learnable,
                self.init.fan_in(&[output, input], input),
            )?,
            bias: self.store.insert(&format!("{name}.bias"), ParamKind::Learnable, Tensor::zeros(&[output]))?,
        })
    }

    pub fn raw(&mut self, name: &str, t: Tensor<S>) -> Result<ParamId> {
        self.store.insert(name, ParamKind::Learnable, t)
    }
}

/// Running-statistic update produced by a training-mode batch-norm.
#[derive(Clone, Debug)]
pub struct BnUpdate<S> {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub stats: BatchStats<S>,
}

/// Folds batch statistics into running estimates with the standard momentum.
pub fn apply_bn_updates<S: Scalar>(store: &mut ParamStore<S>, updates: &[BnUpdate<S>]) {
    let m = S::of(BN_MOMENTUM);
    for u in updates {
        for (id, batch) in [(u.running_mean, &u.stats.mean), (u.running_var, &u.stats.var_unbiased)] {
            let t = store.tensor_mut(id);
            t.data_mut()
                .iter_mut()
                .zip(batch)
                .for_each(|(r, &b)| *r = (S::one() - m) * *r + m * b);
        }
    }
}

/// Forward-pass context: the tape, read-only parameters, the BN mode and
/// the BN updates collected so far.
pub struct Ctx<'a, S> {
    pub graph: Graph<S>,
    pub store: &'a ParamStore<S>,
    pub training: bool,
    pub bn_updates: Vec<BnUpdate<S>>,
    leaves: Vec<Option<Var>>,
}

impl<'a, S: Scalar> Ctx<'a, S> {
    pub fn new(store: &'a ParamStore<S>, training: bool) -> Self {
        Self {
            graph: Graph::new(),
            store,
            training,
            bn_updates: Vec::new(),
            leaves: vec![None; store.len()],
        }
    }

    /// The tape leaf of a parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.leaves[id.0] {
            return v;
        }
        let v = self.graph.param(self.store, id);
        self.leaves[id.0] = Some(v);
        v
    }

    /// Leaves created so far, by parameter.
    pub fn param_leaves(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.leaves.iter().enumerate().filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
    }

    pub fn conv(&mut self, x: Var, c: &Conv) -> Result<Var> {
        let w = self.param(c.weight);
        self.graph.conv(x, w, c.geom)
    }

    pub fn bn(&mut self, x: Var, bn: &Bn) -> Result<Var> {
        let gamma = self.param(bn.gamma);
        let beta = self.param(bn.beta);
        let eps = S::of(BN_EPS);
        if self.training {
            let (y, stats) = self.graph.batch_norm(x, gamma, beta, None, eps)?;
            if let Some(stats) = stats {
                self.bn_updates.push(BnUpdate {
                    running_mean: bn.running_mean,
                    running_var: bn.running_var,
                    stats,
                });
            }
            Ok(y)
        } else {
            let store = self.store;
            let running = (store.tensor(bn.running_mean).data(), store.tensor(bn.running_var).data());
            Ok(self.graph.batch_norm(x, gamma, beta, Some(running), eps)?.0)
        }
    }

    /// conv → BN → optional ReLU.
    pub fn conv_bn(&mut self, x: Var, c: &Conv, bn: &Bn, relu: bool) -> Result<Var> {
        let y = self.conv(x, c)?;
        let y = self.bn(y, bn)?;
        Ok(if relu { self.graph.relu(y) } else { y })
    }

    pub fn gru(&mut self, x: Var, g: &Gru, reverse: bool) -> Result<Var> {
        let (w_ih, w_hh, b_ih, b_hh) = (self.param(g.w_ih), self.param(g.w_hh), self.param(g.b_ih), self.param(g.b_hh));
        self.graph.gru(x, w_ih, w_hh, b_ih, b_hh, reverse)
    }

    pub fn linear(&mut self, x: Var, l: &Linear) -> Result<Var> {
        let (w, b) = (self.param(l.weight), self.param(l.bias));
        self.graph.linear(x, w, b)
    }
}
