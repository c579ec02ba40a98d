//! Append-only reverse-mode tape.
//!
//! A [`Graph`] records every forward operation as a node holding its
//! output value and whatever the backward rule needs. Parameters enter as
//! leaves tied to a [`ParamId`]; [`Graph::backward`] walks the tape in
//! reverse and returns the gradient of every leaf that requires one.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::kernels::conv::{conv_backward, conv_forward, ConvGeom, ConvShape};
use crate::kernels::graph::{contract_backward, contract_forward, ContractShape};
use crate::kernels::gru::{gru_backward, gru_forward, GruCache, GruShape, GruWeights};
use crate::kernels::norm::{bn_backward, bn_forward, channel_stats, BnCache};
use crate::kernels::pool::{
    max_pool_backward, max_pool_forward, reduce_max_backward, reduce_max_forward, reduce_mean_backward,
    reduce_mean_forward,
};
use crate::kernels::{linear_backward, linear_forward};
use crate::params::{ParamId, ParamStore};
use crate::{Scalar, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Clamp applied to probabilities before taking logs in the heads' loss.
pub const PROB_CLAMP: f64 = 1e-7;

enum Op<S> {
    Leaf,
    Conv {
        x: usize,
        w: usize,
        shape: ConvShape,
    },
    MaxPool {
        x: usize,
        arg: Vec<u32>,
        planes: usize,
        plane_in: usize,
    },
    ReduceMax {
        x: usize,
        arg: Vec<u32>,
        planes: usize,
        reduce: usize,
        keep: usize,
    },
    ReduceMean {
        x: usize,
        planes: usize,
        reduce: usize,
        keep: usize,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        cache: BnCache<S>,
        n: usize,
        c: usize,
        p: usize,
    },
    Relu {
        x: usize,
    },
    AddN {
        xs: Vec<usize>,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        by: S,
    },
    Sum {
        x: usize,
    },
    WeightedSum {
        terms: Vec<(usize, S)>,
    },
    Reshape {
        x: usize,
    },
    TransposeLast2 {
        x: usize,
        outer: usize,
        rows: usize,
        cols: usize,
    },
    Contract {
        m: usize,
        b: usize,
        shape: ContractShape,
    },
    Gru {
        x: usize,
        w_ih: usize,
        w_hh: usize,
        b_ih: usize,
        b_hh: usize,
        shape: GruShape,
        cache: Box<GruCache<S>>,
    },
    Linear {
        x: usize,
        w: usize,
        b: usize,
        m: usize,
        h: usize,
        o: usize,
    },
    HeadLoss {
        scores: usize,
        labels: Vec<S>,
        probs: Vec<S>,
        tau: S,
        clips: usize,
        frames: usize,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    param: Option<ParamId>,
    needs_grad: bool,
}

/// Batch statistics produced by a training-mode batch-norm, for updating
/// running estimates: `(mean, unbiased variance)` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<S> {
    pub mean: Vec<S>,
    pub var_unbiased: Vec<S>,
}

/// Gradients of the leaves of one backward pass.
pub struct Gradients<S> {
    leaf: Vec<Option<Vec<S>>>,
    params: Vec<(ParamId, usize)>,
}

impl<S: Scalar> Gradients<S> {
    pub fn of(&self, v: Var) -> Option<&[S]> {
        self.leaf.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds every parameter-leaf gradient into the store's grad slots.
    pub fn accumulate_into(&self, store: &mut ParamStore<S>) -> Result<()> {
        for &(id, node) in &self.params {
            if let Some(g) = &self.leaf[node] {
                store.tensor_mut(id).accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

#[derive(Default)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

fn acc<S: Scalar>(grads: &mut [Option<Vec<S>>], i: usize, g: Vec<S>) {
    match &mut grads[i] {
        Some(a) => a.iter_mut().zip(&g).for_each(|(x, &y)| *x += y),
        slot @ None => *slot = Some(g),
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, parents: &[usize]) -> Var {
        let needs_grad = parents.iter().any(|&p| self.nodes[p].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            param: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// Constant or differentiable input, per the tensor's `requires_grad`.
    pub fn input(&mut self, t: Tensor<S>) -> Var {
        let needs_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            param: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf carrying a copy of a stored parameter.
    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> Var {
        let t = store.tensor(id);
        let value = Tensor::from_vec(t.shape(), t.data().to_vec()).expect("stored tensors are well formed");
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: Some(id),
            needs_grad: t.requires_grad(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Convolution of a `[N, C, D0, D1, D2]` volume with `[Co, C, k0, k1, k2]` weights.
    pub fn conv(&mut self, x: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 5 || ws.len() != 5 {
            bail!(Dimension, "conv expects 5-d input and weight, got {xs:?} and {ws:?}");
        }
        if ws[1] != xs[1] {
            bail!(
                Dimension,
                "weight expects {} input channels, input has {}",
                ws[1],
                xs[1]
            );
        }
        if ws[2..] != geom.kernel {
            bail!(Dimension, "weight kernel {:?} disagrees with geometry {:?}", &ws[2..], geom.kernel);
        }
        let shape = ConvShape {
            batch: xs[0],
            c_in: xs[1],
            c_out: ws[0],
            dims: [xs[2], xs[3], xs[4]],
            geom,
        };
        let (out, od) = conv_forward(self.value(x).data(), self.value(w).data(), &shape)?;
        let t = Tensor::from_vec(&[shape.batch, shape.c_out, od[0], od[1], od[2]], out)?;
        Ok(self.push(t, Op::Conv { x: x.0, w: w.0, shape }, &[x.0, w.0]))
    }

    /// Max pooling over the three trailing axes of a 5-d volume.
    pub fn max_pool(&mut self, x: Var, geom: ConvGeom) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 5 {
            bail!(Dimension, "max_pool expects a 5-d volume, got {xs:?}");
        }
        let planes = xs[0] * xs[1];
        let (out, arg, od) = max_pool_forward(self.value(x).data(), planes, [xs[2], xs[3], xs[4]], &geom)?;
        let t = Tensor::from_vec(&[xs[0], xs[1], od[0], od[1], od[2]], out)?;
        Ok(self.push(
            t,
            Op::MaxPool {
                x: x.0,
                arg,
                planes,
                plane_in: xs[2] * xs[3] * xs[4],
            },
            &[x.0],
        ))
    }

    fn spatial_reduce_dims(&self, x: Var) -> Result<(usize, usize, usize, [usize; 3])> {
        let xs = self.shape(x);
        if xs.len() != 5 {
            bail!(Dimension, "spatial reduction expects a 5-d volume, got {xs:?}");
        }
        Ok((xs[0] * xs[1], xs[2] * xs[3], xs[4], [xs[0], xs[1], xs[4]]))
    }

    /// `[N, C, D0, D1, T]` → `[N, C, T]` by maximum over `D0×D1`.
    pub fn global_max_spatial(&mut self, x: Var) -> Result<Var> {
        let (planes, reduce, keep, shape) = self.spatial_reduce_dims(x)?;
        let (out, arg) = reduce_max_forward(self.value(x).data(), planes, reduce, keep);
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(
            t,
            Op::ReduceMax {
                x: x.0,
                arg,
                planes,
                reduce,
                keep,
            },
            &[x.0],
        ))
    }

    /// `[N, C, D0, D1, T]` → `[N, C, T]` by mean over `D0×D1`.
    pub fn global_mean_spatial(&mut self, x: Var) -> Result<Var> {
        let (planes, reduce, keep, shape) = self.spatial_reduce_dims(x)?;
        let out = reduce_mean_forward(self.value(x).data(), planes, reduce, keep);
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(
            t,
            Op::ReduceMean {
                x: x.0,
                planes,
                reduce,
                keep,
            },
            &[x.0],
        ))
    }

    /// Batch normalization over axis 1 of `[N, C, ...]`.
    ///
    /// With `running = None` the batch statistics are used and returned;
    /// otherwise the given `(mean, var)` are applied.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[S], &[S])>,
        eps: S,
    ) -> Result<(Var, Option<BatchStats<S>>)> {
        let xs = self.shape(x);
        if xs.len() < 2 {
            bail!(Dimension, "batch_norm expects [N, C, ...], got {xs:?}");
        }
        let (n, c) = (xs[0], xs[1]);
        let p: usize = xs[2..].iter().product();
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            bail!(Dimension, "batch_norm affine parameters must have {c} entries");
        }
        let shape = xs.to_vec();
        let xd = self.value(x).data();
        let (stats, mean, var) = match running {
            Some((m, v)) => {
                if m.len() != c || v.len() != c {
                    bail!(Dimension, "running statistics must have {c} entries");
                }
                (None, m.to_vec(), v.to_vec())
            }
            None => {
                let (m, v) = channel_stats(xd, n, c, p);
                let count = (n * p) as f64;
                let unbiased = if count > 1.0 {
                    v.iter().map(|&x| x * S::of(count / (count - 1.0))).collect()
                } else {
                    v.clone()
                };
                (
                    Some(BatchStats {
                        mean: m.clone(),
                        var_unbiased: unbiased,
                    }),
                    m,
                    v,
                )
            }
        };
        let (y, cache) = bn_forward(
            xd,
            n,
            c,
            p,
            self.value(gamma).data(),
            self.value(beta).data(),
            &mean,
            &var,
            eps,
            running.is_none(),
        );
        let t = Tensor::from_vec(&shape, y)?;
        let v = self.push(
            t,
            Op::BatchNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                cache,
                n,
                c,
                p,
            },
            &[x.0, gamma.0, beta.0],
        );
        Ok((v, stats))
    }

    /// NaN passes through so a poisoned input reaches the loss check.
    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > S::zero() || v.is_nan() { v } else { S::zero() });
        self.push(t, Op::Relu { x: x.0 }, &[x.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.add_n(&[a, b])
    }

    /// Element-wise sum of equally shaped nodes.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            bail!(Dimension, "add_n of an empty list");
        };
        let mut out = self.value(first).map(|v| v);
        for &x in &xs[1..] {
            if self.shape(x) != out.shape() {
                bail!(
                    Dimension,
                    "cannot add {:?} to {:?}",
                    self.shape(x),
                    out.shape()
                );
            }
            let src = self.value(x).data();
            out.data_mut().iter_mut().zip(src).for_each(|(a, &b)| *a += b);
        }
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        Ok(self.push(out, Op::AddN { xs: ids.clone() }, &ids))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(t, Op::Mul { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn scale(&mut self, x: Var, by: S) -> Var {
        let t = self.value(x).map(|v| v * by);
        self.push(t, Op::Scale { x: x.0, by }, &[x.0])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).sum());
        self.push(t, Op::Sum { x: x.0 }, &[x.0])
    }

    /// `Σ w_i x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, S)]) -> Result<Var> {
        if terms.is_empty() {
            bail!(Dimension, "weighted_sum of an empty list");
        }
        let mut total = S::zero();
        for &(v, w) in terms {
            if self.value(v).len() != 1 {
                bail!(Dimension, "weighted_sum expects scalar terms");
            }
            total += w * self.value(v).data()[0];
        }
        let ids: Vec<usize> = terms.iter().map(|(v, _)| v.0).collect();
        let terms = terms.iter().map(|&(v, w)| (v.0, w)).collect();
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { terms }, &ids))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t.with_requires_grad(false), Op::Reshape { x: x.0 }, &[x.0]))
    }

    /// Swaps the last two axes of a 3-d tensor: `[N, C, T]` → `[N, T, C]`.
    pub fn transpose_last2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 3 {
            bail!(Dimension, "transpose_last2 expects a 3-d tensor, got {xs:?}");
        }
        let (outer, rows, cols) = (xs[0], xs[1], xs[2]);
        let src = self.value(x).data();
        let mut out = vec![S::zero(); src.len()];
        for n in 0..outer {
            let base = n * rows * cols;
            for r in 0..rows {
                for c in 0..cols {
                    out[base + c * rows + r] = src[base + r * cols + c];
                }
            }
        }
        let t = Tensor::from_vec(&[outer, cols, rows], out)?;
        Ok(self.push(t, Op::TransposeLast2 { x: x.0, outer, rows, cols }, &[x.0]))
    }

    /// Graph contraction of `m: [N, K·C, V, 1, T]` with `b: [K, V, V]`.
    pub fn contract(&mut self, m: Var, b: Var) -> Result<Var> {
        let ms = self.shape(m);
        let bs = self.shape(b);
        if ms.len() != 5 || ms[3] != 1 || bs.len() != 3 || bs[1] != bs[2] {
            bail!(Dimension, "contract expects [N, K·C, V, 1, T] and [K, V, V], got {ms:?} and {bs:?}");
        }
        let (k, v) = (bs[0], bs[1]);
        if ms[2] != v {
            bail!(Dimension, "adjacency is {v}×{v} but input has {} joints", ms[2]);
        }
        if ms[1] % k != 0 {
            bail!(
                Config,
                "{} channels cannot be split into {k} partitions",
                ms[1]
            );
        }
        let shape = ContractShape {
            batch: ms[0],
            partitions: k,
            channels: ms[1] / k,
            joints: v,
            frames: ms[4],
        };
        let z = contract_forward(self.value(m).data(), self.value(b).data(), &shape);
        let t = Tensor::from_vec(&[shape.batch, shape.channels, v, 1, shape.frames], z)?;
        Ok(self.push(t, Op::Contract { m: m.0, b: b.0, shape }, &[m.0, b.0]))
    }

    /// One GRU direction over `x: [N, T, D]`; returns `[N, T, H]`.
    pub fn gru(&mut self, x: Var, w_ih: Var, w_hh: Var, b_ih: Var, b_hh: Var, reverse: bool) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 3 {
            bail!(Dimension, "gru expects [N, T, D], got {xs:?}");
        }
        let (n, t, d) = (xs[0], xs[1], xs[2]);
        let wi = self.shape(w_ih);
        if wi.len() != 2 || wi[0] % 3 != 0 || wi[1] != d {
            bail!(Dimension, "w_ih must be [3H, {d}], got {wi:?}");
        }
        let h = wi[0] / 3;
        if self.shape(w_hh) != [3 * h, h] || self.value(b_ih).len() != 3 * h || self.value(b_hh).len() != 3 * h {
            bail!(Dimension, "recurrent weights do not match hidden size {h}");
        }
        let shape = GruShape {
            batch: n,
            steps: t,
            input: d,
            hidden: h,
            reverse,
        };
        let w = GruWeights {
            w_ih: self.value(w_ih).data(),
            w_hh: self.value(w_hh).data(),
            b_ih: self.value(b_ih).data(),
            b_hh: self.value(b_hh).data(),
        };
        let (out, cache) = gru_forward(self.value(x).data(), w, &shape);
        let tt = Tensor::from_vec(&[n, t, h], out)?;
        Ok(self.push(
            tt,
            Op::Gru {
                x: x.0,
                w_ih: w_ih.0,
                w_hh: w_hh.0,
                b_ih: b_ih.0,
                b_hh: b_hh.0,
                shape,
                cache: Box::new(cache),
            },
            &[x.0, w_ih.0, w_hh.0, b_ih.0, b_hh.0],
        ))
    }

    /// Affine map over the last axis: `[..., H]` → `[..., O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w);
        let Some(&h) = xs.last() else {
            bail!(Dimension, "linear input has no axes");
        };
        if ws.len() != 2 || ws[1] != h {
            bail!(Dimension, "linear weight {ws:?} does not accept width {h}");
        }
        let o = ws[0];
        if self.value(b).len() != o {
            bail!(Dimension, "linear bias must have {o} entries");
        }
        let m = self.value(x).len() / h;
        let out = linear_forward(self.value(x).data(), m, h, self.value(w).data(), self.value(b).data(), o);
        let mut shape = xs;
        *shape.last_mut().unwrap() = o;
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(t, Op::Linear { x: x.0, w: w.0, b: b.0, m, h, o }, &[x.0, w.0, b.0]))
    }

    /// Mean over clips of the per-clip frame-averaged binary cross-entropy
    /// of temperature-scaled two-class scores `[N, T, 2]` = (silent, speaking).
    pub fn head_loss(&mut self, scores: Var, labels: &[S], tau: S) -> Result<Var> {
        let ss = self.shape(scores);
        if ss.len() != 3 || ss[2] != 2 {
            bail!(Dimension, "head scores must be [N, T, 2], got {ss:?}");
        }
        if !(tau > S::zero()) {
            bail!(Parameter, "temperature must be positive, got {tau}");
        }
        let (clips, frames) = (ss[0], ss[1]);
        if labels.len() != clips * frames {
            bail!(Dimension, "{} labels for {clips}×{frames} frames", labels.len());
        }
        if let Some(bad) = labels.iter().find(|&&g| g != S::zero() && g != S::one()) {
            bail!(Data, "label {bad} is not 0 or 1");
        }
        let sc = self.value(scores).data();
        let mut probs = Vec::with_capacity(clips * frames);
        let mut total = S::zero();
        for i in 0..clips * frames {
            let p = crate::loss::speaking_probability(sc[2 * i + 1], sc[2 * i], tau);
            let pc = crate::loss::clamp_probability(p);
            let g = labels[i];
            total -= g * pc.ln() + (S::one() - g) * (S::one() - pc).ln();
            probs.push(p);
        }
        let loss = total / S::of((clips * frames) as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::HeadLoss {
                scores: scores.0,
                labels: labels.to_vec(),
                probs,
                tau,
                clips,
                frames,
            },
            &[scores.0],
        ))
    }

    /// Unclamped speaking probabilities computed by a [`Graph::head_loss`] node.
    pub fn head_probs(&self, loss: Var) -> Option<&[S]> {
        match &self.nodes[loss.0].op {
            Op::HeadLoss { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if loss.0 >= self.nodes.len() {
            bail!(Graph, "node {} is not on this tape", loss.0);
        }
        if self.nodes[loss.0].value.len() != 1 {
            bail!(
                Contract,
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            );
        }
        let count = loss.0 + 1;
        let mut grads: Vec<Option<Vec<S>>> = (0..count).map(|_| None).collect();
        let mut leaf: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        for i in (0..count).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.check_parents(i)?;
            self.backprop(i, g, &mut grads, &mut leaf)?;
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (p, i)))
            .collect();
        Ok(Gradients { leaf, params })
    }

    fn check_parents(&self, i: usize) -> Result<()> {
        let bad = |p: usize| p >= i;
        let ok = match &self.nodes[i].op {
            Op::Leaf => true,
            Op::Conv { x, w, .. } => !bad(*x) && !bad(*w),
            Op::MaxPool { x, .. }
            | Op::ReduceMax { x, .. }
            | Op::ReduceMean { x, .. }
            | Op::Relu { x }
            | Op::Scale { x, .. }
            | Op::Sum { x }
            | Op::Reshape { x }
            | Op::TransposeLast2 { x, .. } => !bad(*x),
            Op::BatchNorm { x, gamma, beta, .. } => !bad(*x) && !bad(*gamma) && !bad(*beta),
            Op::AddN { xs } => xs.iter().all(|&p| !bad(p)),
            Op::Mul { a, b } => !bad(*a) && !bad(*b),
            Op::WeightedSum { terms } => terms.iter().all(|&(p, _)| !bad(p)),
            Op::Contract { m, b, .. } => !bad(*m) && !bad(*b),
            Op::Gru {
                x,
                w_ih,
                w_hh,
                b_ih,
                b_hh,
                ..
            } => [*x, *w_ih, *w_hh, *b_ih, *b_hh].iter().all(|&p| !bad(p)),
            Op::Linear { x, w, b, .. } => !bad(*x) && !bad(*w) && !bad(*b),
            Op::HeadLoss { scores, .. } => !bad(*scores),
        };
        if !ok {
            bail!(Graph, "node {i} depends on a later node (cycle)");
        }
        Ok(())
    }

    fn backprop(&self, i: usize, g: Vec<S>, grads: &mut [Option<Vec<S>>], leaf: &mut [Option<Vec<S>>]) -> Result<()> {
        let val = |j: usize| self.nodes[j].value.data();
        match &self.nodes[i].op {
            Op::Leaf => {
                acc(leaf, i, g);
            }
            Op::Conv { x, w, shape } => {
                let (gx, gw) = conv_backward(val(*x), val(*w), shape, &g, self.ng(*x))?;
                if let Some(gx) = gx {
                    acc(grads, *x, gx);
                }
                if self.ng(*w) {
                    acc(grads, *w, gw);
                }
            }
            Op::MaxPool {
                x,
                arg,
                planes,
                plane_in,
            } => {
                if self.ng(*x) {
                    acc(grads, *x, max_pool_backward(&g, arg, *planes, *plane_in));
                }
            }
            Op::ReduceMax {
                x,
                arg,
                planes,
                reduce,
                keep,
            } => {
                if self.ng(*x) {
                    acc(grads, *x, reduce_max_backward(&g, arg, *planes, *reduce, *keep));
                }
            }
            Op::ReduceMean {
                x,
                planes,
                reduce,
                keep,
            } => {
                if self.ng(*x) {
                    acc(grads, *x, reduce_mean_backward(&g, *planes, *reduce, *keep));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                cache,
                n,
                c,
                p,
            } => {
                let (gx, gg, gb) = bn_backward(&g, *n, *c, *p, val(*gamma), cache);
                if self.ng(*x) {
                    acc(grads, *x, gx);
                }
                if self.ng(*gamma) {
                    acc(grads, *gamma, gg);
                }
                if self.ng(*beta) {
                    acc(grads, *beta, gb);
                }
            }
            Op::Relu { x } => {
                let xv = val(*x);
                let gx = g
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| if v > S::zero() { g } else { S::zero() })
                    .collect();
                acc(grads, *x, gx);
            }
            Op::AddN { xs } => {
                for &x in xs {
                    if self.ng(x) {
                        acc(grads, x, g.clone());
                    }
                }
            }
            Op::Mul { a, b } => {
                if self.ng(*a) {
                    acc(grads, *a, g.iter().zip(val(*b)).map(|(&g, &v)| g * v).collect());
                }
                if self.ng(*b) {
                    acc(grads, *b, g.iter().zip(val(*a)).map(|(&g, &v)| g * v).collect());
                }
            }
            Op::Scale { x, by } => {
                acc(grads, *x, g.iter().map(|&v| v * *by).collect());
            }
            Op::Sum { x } => {
                acc(grads, *x, vec![g[0]; self.nodes[*x].value.len()]);
            }
            Op::WeightedSum { terms } => {
                for &(x, w) in terms {
                    if self.ng(x) {
                        acc(grads, x, vec![g[0] * w]);
                    }
                }
            }
            Op::Reshape { x } => acc(grads, *x, g),
            Op::TransposeLast2 { x, outer, rows, cols } => {
                let mut gx = vec![S::zero(); g.len()];
                for n in 0..*outer {
                    let base = n * rows * cols;
                    for r in 0..*rows {
                        for c in 0..*cols {
                            gx[base + r * cols + c] = g[base + c * rows + r];
                        }
                    }
                }
                acc(grads, *x, gx);
            }
            Op::Contract { m, b, shape } => {
                let (gm, gb) = contract_backward(val(*m), val(*b), shape, &g, self.ng(*m));
                if let Some(gm) = gm {
                    acc(grads, *m, gm);
                }
                if self.ng(*b) {
                    acc(grads, *b, gb);
                }
            }
            Op::Gru {
                x,
                w_ih,
                w_hh,
                b_ih,
                b_hh,
                shape,
                cache,
            } => {
                let w = GruWeights {
                    w_ih: val(*w_ih),
                    w_hh: val(*w_hh),
                    b_ih: val(*b_ih),
                    b_hh: val(*b_hh),
                };
                let gr = gru_backward(val(*x), w, shape, val(i), cache, &g, self.ng(*x));
                if let Some(gx) = gr.gx {
                    acc(grads, *x, gx);
                }
                for (j, gj) in [(*w_ih, gr.w_ih), (*w_hh, gr.w_hh), (*b_ih, gr.b_ih), (*b_hh, gr.b_hh)] {
                    if self.ng(j) {
                        acc(grads, j, gj);
                    }
                }
            }
            Op::Linear { x, w, b, m, h, o } => {
                let (gx, gw, gb) = linear_backward(val(*x), *m, *h, val(*w), *o, &g, self.ng(*x));
                if let Some(gx) = gx {
                    acc(grads, *x, gx);
                }
                if self.ng(*w) {
                    acc(grads, *w, gw);
                }
                if self.ng(*b) {
                    acc(grads, *b, gb);
                }
            }
            Op::HeadLoss {
                scores,
                labels,
                probs,
                tau,
                clips,
                frames,
            } => {
                let lo = S::of(PROB_CLAMP);
                let hi = S::one() - lo;
                let denom = *tau * S::of((clips * frames) as f64);
                let mut gs = vec![S::zero(); 2 * clips * frames];
                for (k, (&p, &y)) in probs.iter().zip(labels).enumerate() {
                    if p <= lo || p >= hi {
                        continue;
                    }
                    let d = g[0] * (p - y) / denom;
                    gs[2 * k + 1] = d;
                    gs[2 * k] = -d;
                }
                acc(grads, *scores, gs);
            }
        }
        Ok(())
    }
}

impl<S> core::fmt::Debug for Graph<S> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&format!("Graph({} nodes)", self.nodes.len()))
    }
}
