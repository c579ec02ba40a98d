//! Single-sample forms of the primitives, outside any tape.
//!
//! Per-sample layouts: spatial volumes `[C, H, W, T]`, sequences `[T, D]`.
//! These share kernels with the [`autograd`](crate::autograd) tape and exist
//! for direct use and for checking layer behavior in isolation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::kernels::conv::{conv_forward, ConvGeom, ConvShape};
use crate::kernels::gru::{gru_forward, GruShape, GruWeights};
use crate::kernels::norm::{bn_forward, channel_stats};
use crate::kernels::pool::{max_pool_forward, reduce_max_forward, reduce_mean_forward};
use crate::kernels::linear_forward;
use crate::params::Initializer;
use crate::{Scalar, Tensor};

fn expect_rank<S: Scalar>(t: &Tensor<S>, rank: usize, what: &str) -> Result<()> {
    if t.ndim() != rank {
        bail!(Dimension, "{what} expects a rank-{rank} tensor, got {:?}", t.shape());
    }
    Ok(())
}

/// `κ×κ` convolution over H and W of `[C, H, W, T]`; T is untouched.
pub fn conv_spatial<S: Scalar>(input: &Tensor<S>, weight: &Tensor<S>, stride: usize, padding: usize) -> Result<Tensor<S>> {
    expect_rank(input, 4, "conv_spatial input")?;
    expect_rank(weight, 4, "conv_spatial weight")?;
    let (x, w) = (input.shape(), weight.shape());
    if w[1] != x[0] {
        bail!(Dimension, "weight expects {} channels, input has {}", w[1], x[0]);
    }
    if w[2] != w[3] {
        bail!(Dimension, "spatial kernel must be square, got {}x{}", w[2], w[3]);
    }
    let cs = ConvShape {
        batch: 1,
        c_in: x[0],
        c_out: w[0],
        dims: [x[1], x[2], x[3]],
        geom: ConvGeom::new([w[2], w[3], 1], [stride, stride, 1], [padding, padding, 0]),
    };
    let (out, od) = conv_forward(input.data(), weight.data(), &cs)?;
    Tensor::from_vec(&[w[0], od[0], od[1], od[2]], out)
}

/// Odd-length convolution along the last axis of `[C, S..., T]` with
/// extent-preserving padding.
pub fn conv_temporal<S: Scalar>(input: &Tensor<S>, weight: &Tensor<S>) -> Result<Tensor<S>> {
    expect_rank(weight, 3, "conv_temporal weight")?;
    let x = input.shape();
    if x.len() < 2 {
        bail!(Dimension, "conv_temporal input needs a channel and a time axis");
    }
    let w = weight.shape();
    let k = w[2];
    if k % 2 == 0 {
        bail!(Config, "temporal kernel must be odd, got {k}");
    }
    if w[1] != x[0] {
        bail!(Dimension, "weight expects {} channels, input has {}", w[1], x[0]);
    }
    let t = x[x.len() - 1];
    let s: usize = x[1..x.len() - 1].iter().product();
    let cs = ConvShape {
        batch: 1,
        c_in: x[0],
        c_out: w[0],
        dims: [s, 1, t],
        geom: ConvGeom::new([1, 1, k], [1, 1, 1], [0, 0, (k - 1) / 2]),
    };
    let (out, _) = conv_forward(input.data(), weight.data(), &cs)?;
    let mut shape = x.to_vec();
    shape[0] = w[0];
    Tensor::from_vec(&shape, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    /// `[C, H, W, T]`, windowed over H and W.
    MaxSpatial,
    /// `[C, S..., T]`, windowed over T.
    MaxTemporal,
    /// `[C, H, W, T]` → `[C, T]`.
    GlobalMaxSpatial,
    /// `[C, H, W, T]` → `[C, T]`.
    GlobalAvgSpatial,
    /// `[C, V, T]` → `[C, T]`.
    GlobalAvgJoints,
}

/// Window of the windowed pooling kinds; global kinds ignore it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Window {
    /// The pool used throughout the encoders: extent `L` becomes `ceil(L/2)`.
    pub const HALVING: Self = Self {
        kernel: 3,
        stride: 2,
        padding: 1,
    };
}

pub fn pool<S: Scalar>(input: &Tensor<S>, kind: PoolKind, window: Window) -> Result<Tensor<S>> {
    let x = input.shape();
    let (c, t) = (x[0], x[x.len() - 1]);
    match kind {
        PoolKind::MaxSpatial => {
            expect_rank(input, 4, "max_spatial")?;
            let (k, s, p) = (window.kernel, window.stride, window.padding);
            let geom = ConvGeom::new([k, k, 1], [s, s, 1], [p, p, 0]);
            let (out, _, od) = max_pool_forward(input.data(), c, [x[1], x[2], t], &geom)?;
            Tensor::from_vec(&[c, od[0], od[1], od[2]], out)
        }
        PoolKind::MaxTemporal => {
            if x.len() < 2 {
                bail!(Dimension, "max_temporal needs a channel and a time axis");
            }
            let s: usize = x[1..x.len() - 1].iter().product();
            let geom = ConvGeom::new([1, 1, window.kernel], [1, 1, window.stride], [0, 0, window.padding]);
            let (out, _, od) = max_pool_forward(input.data(), c, [s, 1, t], &geom)?;
            let mut shape = x.to_vec();
            *shape.last_mut().unwrap() = od[2];
            Tensor::from_vec(&shape, out)
        }
        PoolKind::GlobalMaxSpatial | PoolKind::GlobalAvgSpatial => {
            expect_rank(input, 4, "global spatial pool")?;
            let reduce = x[1] * x[2];
            let out = if kind == PoolKind::GlobalMaxSpatial {
                reduce_max_forward(input.data(), c, reduce, t).0
            } else {
                reduce_mean_forward(input.data(), c, reduce, t)
            };
            Tensor::from_vec(&[c, t], out)
        }
        PoolKind::GlobalAvgJoints => {
            expect_rank(input, 3, "global_avg_joints")?;
            Tensor::from_vec(&[c, t], reduce_mean_forward(input.data(), c, x[1], t))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Training,
    Inference,
}

/// Affine parameters and running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    /// `None` until initialized by a training pass or explicitly.
    pub running_mean: Option<Vec<S>>,
    pub running_var: Option<Vec<S>>,
    pub momentum: S,
    pub eps: S,
    pub mode: BnMode,
}

impl<S: Scalar> BatchNormState<S> {
    /// Unit scale, zero shift, running statistics `(0, 1)`, training mode.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![S::one(); channels],
            beta: vec![S::zero(); channels],
            running_mean: Some(vec![S::zero(); channels]),
            running_var: Some(vec![S::one(); channels]),
            momentum: S::of(crate::model::layers::BN_MOMENTUM),
            eps: S::of(crate::model::layers::BN_EPS),
            mode: BnMode::Training,
        }
    }

    pub fn uninitialized(channels: usize) -> Self {
        Self {
            running_mean: None,
            running_var: None,
            ..Self::new(channels)
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Batch normalization of `[N, C, ...]` over axis 1.
///
/// Pass a single sample as `[1, C, ...]`. Training mode normalizes by the
/// batch's biased variance and folds the unbiased variance into the
/// running estimate.
pub fn batch_norm<S: Scalar>(input: &Tensor<S>, state: &mut BatchNormState<S>) -> Result<Tensor<S>> {
    let x = input.shape();
    if x.len() < 2 {
        bail!(Dimension, "batch_norm expects [N, C, ...], got {x:?}");
    }
    let (n, c) = (x[0], x[1]);
    let p: usize = x[2..].iter().product();
    if c != state.channels() || state.beta.len() != c {
        bail!(Dimension, "state has {} channels, input has {c}", state.channels());
    }
    let (mean, var) = match state.mode {
        BnMode::Training => {
            let (mean, var) = channel_stats(input.data(), n, c, p);
            let count = (n * p) as f64;
            let correction = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let m = state.momentum;
            let rm = state.running_mean.get_or_insert_with(|| vec![S::zero(); c]);
            rm.iter_mut()
                .zip(&mean)
                .for_each(|(r, &b)| *r = (S::one() - m) * *r + m * b);
            let rv = state.running_var.get_or_insert_with(|| vec![S::one(); c]);
            rv.iter_mut()
                .zip(&var)
                .for_each(|(r, &b)| *r = (S::one() - m) * *r + m * b * S::of(correction));
            (mean, var)
        }
        BnMode::Inference => match (&state.running_mean, &state.running_var) {
            (Some(m), Some(v)) if m.len() == c && v.len() == c => (m.clone(), v.clone()),
            _ => bail!(State, "inference batch-norm without running statistics"),
        },
    };
    let (y, _) = bn_forward(
        input.data(),
        n,
        c,
        p,
        &state.gamma,
        &state.beta,
        &mean,
        &var,
        state.eps,
        state.mode == BnMode::Training,
    );
    Tensor::from_vec(x, y)
}

/// Gate weights of one GRU direction, stacked (reset, update, candidate).
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams<S> {
    /// `[3H, D]`
    pub w_ih: Vec<S>,
    /// `[3H, H]`
    pub w_hh: Vec<S>,
    pub b_ih: Vec<S>,
    pub b_hh: Vec<S>,
}

impl<S: Scalar> GruParams<S> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let h3 = 3 * hidden;
        Self {
            w_ih: vec![S::zero(); h3 * input],
            w_hh: vec![S::zero(); h3 * hidden],
            b_ih: vec![S::zero(); h3],
            b_hh: vec![S::zero(); h3],
        }
    }

    /// Uniform in `±1/sqrt(H)` for every entry, biases included.
    pub fn random(input: usize, hidden: usize, init: &mut Initializer) -> Self {
        let h3 = 3 * hidden;
        let b = 1.0 / num_traits::Float::sqrt(hidden as f64);
        Self {
            w_ih: init.uniform::<S>(&[h3, input], -b, b).into_data(),
            w_hh: init.uniform::<S>(&[h3, hidden], -b, b).into_data(),
            b_ih: init.uniform::<S>(&[h3], -b, b).into_data(),
            b_hh: init.uniform::<S>(&[h3], -b, b).into_data(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_ih.len() / 3
    }

    fn weights(&self) -> GruWeights<'_, S> {
        GruWeights {
            w_ih: &self.w_ih,
            w_hh: &self.w_hh,
            b_ih: &self.b_ih,
            b_hh: &self.b_hh,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiGruParams<S> {
    pub forward: GruParams<S>,
    pub backward: GruParams<S>,
}

/// One GRU direction over `T` rows of width `d`; returns `[T, H]`.
pub fn gru_direction<S: Scalar>(x: &[S], d: usize, p: &GruParams<S>, reverse: bool) -> Result<Vec<S>> {
    let h = p.hidden();
    if d == 0 || x.len() % d != 0 {
        bail!(Dimension, "input length {} is not a multiple of width {d}", x.len());
    }
    let t = x.len() / d;
    if t == 0 {
        bail!(EmptySequence, "GRU over zero steps");
    }
    if p.w_ih.len() != 3 * h * d || p.w_hh.len() != 3 * h * h || p.b_hh.len() != 3 * h {
        bail!(Dimension, "GRU weights do not match input width {d} and hidden size {h}");
    }
    let sh = GruShape {
        batch: 1,
        steps: t,
        input: d,
        hidden: h,
        reverse,
    };
    Ok(gru_forward(x, p.weights(), &sh).0)
}

/// Bidirectional GRU over `T` rows of width `d` (row-major `[T, d]`), with
/// the two directions summed into `[T, H]`.
pub fn bigru_forward<S: Scalar>(x: &[S], d: usize, params: &BiGruParams<S>) -> Result<Tensor<S>> {
    let h = params.forward.hidden();
    if params.backward.hidden() != h {
        bail!(Dimension, "GRU directions disagree in hidden size");
    }
    let f = gru_direction(x, d, &params.forward, false)?;
    let b = gru_direction(x, d, &params.backward, true)?;
    let t = x.len() / d;
    Tensor::from_vec(&[t, h], f.iter().zip(&b).map(|(&a, &b)| a + b).collect())
}

/// `[T, H]·Wᵀ + b` with `W: [O, H]`.
pub fn linear<S: Scalar>(input: &Tensor<S>, weight: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
    expect_rank(input, 2, "linear input")?;
    expect_rank(weight, 2, "linear weight")?;
    let (t, h) = (input.shape()[0], input.shape()[1]);
    let (o, wh) = (weight.shape()[0], weight.shape()[1]);
    if wh != h || bias.len() != o {
        bail!(
            Dimension,
            "linear weight {:?} / bias {:?} do not fit input {:?}",
            weight.shape(),
            bias.shape(),
            input.shape()
        );
    }
    Tensor::from_vec(&[t, o], linear_forward(input.data(), t, h, weight.data(), bias.data(), o))
}
