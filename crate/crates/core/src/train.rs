//! Same-length batching, Adam, the learning-rate and temperature
//! schedules, and the epoch loop.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Gradients, Var};
use crate::error::{bail, Result};
use crate::loss::{temperature, HeadKind, Mode, Phase};
use crate::model::layers::BnUpdate;
use crate::model::{Batch, Forward, Model};
use crate::params::{ParamId, ParamStore};
use crate::{Error, Scalar, Tensor};

/// One target individual's aligned inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleClip<S> {
    pub video_id: String,
    pub entity_id: String,
    pub timestamps: Vec<f64>,
    /// `[1, H, W, T]`
    pub faces: Tensor<S>,
    /// `[1, 13, 4T]`
    pub mfcc: Tensor<S>,
    /// `[3, V, T]`
    pub poses: Option<Tensor<S>>,
    pub labels: Vec<u8>,
    pub category: String,
}

impl<S: Scalar> SampleClip<S> {
    pub fn frames(&self) -> usize {
        self.labels.len()
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.video_id, self.entity_id)
    }
}

/// Stacks clips of equal length into one [`Batch`].
pub fn collate<S: Scalar>(clips: &[&SampleClip<S>], with_poses: bool) -> Result<Batch<S>> {
    let Some(first) = clips.first() else {
        bail!(Data, "cannot collate an empty batch");
    };
    let t = first.frames();
    let fs = first.faces.shape().to_vec();
    let ms = first.mfcc.shape().to_vec();
    if fs.len() != 4 || fs[3] != t || ms.len() != 3 || ms[2] != 4 * t {
        bail!(Dimension, "clip {} has inconsistent extents", first.key());
    }
    let n = clips.len();
    let mut faces = Vec::with_capacity(n * first.faces.len());
    let mut mfcc = Vec::with_capacity(n * first.mfcc.len());
    let mut poses = Vec::new();
    let mut pose_shape = None;
    for c in clips {
        if c.frames() != t || c.faces.shape() != fs.as_slice() || c.mfcc.shape() != ms.as_slice() {
            bail!(Dimension, "clip {} does not match the batch shape", c.key());
        }
        faces.extend_from_slice(c.faces.data());
        mfcc.extend_from_slice(c.mfcc.data());
        if with_poses {
            let Some(p) = &c.poses else {
                bail!(Data, "clip {} has no pose track", c.key());
            };
            let ps = p.shape();
            if ps.len() != 3 || ps[2] != t || pose_shape.is_some_and(|s: [usize; 2]| s != [ps[0], ps[1]]) {
                bail!(Dimension, "clip {} has pose shape {ps:?}", c.key());
            }
            pose_shape = Some([ps[0], ps[1]]);
            poses.extend_from_slice(p.data());
        }
    }
    Ok(Batch {
        faces: Tensor::from_vec(&[n, 1, fs[1], fs[2], t], faces)?,
        mfcc: Tensor::from_vec(&[n, 1, ms[1], 1, ms[2]], mfcc)?,
        poses: match pose_shape {
            Some([c, v]) => Some(Tensor::from_vec(&[n, c, v, 1, t], poses)?),
            None => None,
        },
    })
}

/// Groups clip indices by frame count and packs each group greedily, in
/// `seed`-shuffled order (input order when `None`), into batches of at
/// most `cap` total frames. Batch order is shuffled with the same seed.
pub fn assemble_batches(lengths: &[usize], cap: usize, seed: Option<u64>) -> Result<Vec<Vec<usize>>> {
    if let Some((i, &len)) = lengths.iter().enumerate().find(|(_, &l)| l > cap) {
        bail!(Data, "clip {i} has {len} frames, above the cap of {cap}");
    }
    if let Some(i) = lengths.iter().position(|&l| l == 0) {
        bail!(Data, "clip {i} has no frames");
    }
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    if let Some(rng) = rng.as_mut() {
        order.shuffle(rng);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in order {
        groups.entry(lengths[i]).or_default().push(i);
    }
    let mut batches = Vec::new();
    for (len, members) in groups {
        let per_batch = cap / len;
        for chunk in members.chunks(per_batch) {
            batches.push(chunk.to_vec());
        }
    }
    if let Some(rng) = rng.as_mut() {
        batches.shuffle(rng);
    }
    Ok(batches)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moments of the parameters one optimizer owns.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub params: Vec<ParamId>,
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(store: &ParamStore<S>, params: Vec<ParamId>) -> Self {
        let zeros = |id: &ParamId| vec![S::zero(); store.tensor(*id).len()];
        Self {
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            params,
            step: 0,
        }
    }
}

/// Bias-corrected Adam update of every owned parameter; clears their gradients.
pub fn adam_step<S: Scalar>(store: &mut ParamStore<S>, state: &mut AdamState<S>, lr: f64) -> Result<()> {
    for &id in &state.params {
        if store.tensor(id).grad().is_none() {
            bail!(Contract, "parameter {} has no gradient", store.get(id).name);
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (S::of(ADAM_BETA1), S::of(ADAM_BETA2));
    let c1 = S::of(1.0 - num_traits::Float::powi(ADAM_BETA1, t));
    let c2 = S::of(1.0 - num_traits::Float::powi(ADAM_BETA2, t));
    let (lr, eps) = (S::of(lr), S::of(ADAM_EPS));
    for (k, &id) in state.params.iter().enumerate() {
        let tensor = store.tensor_mut(id);
        let g = tensor.grad().expect("checked above").to_vec();
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, w) in tensor.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (S::one() - b1) * g[i];
            v[i] = b2 * v[i] + (S::one() - b2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            *w -= lr * mh / (vh.sqrt() + eps);
        }
        tensor.zero_grad();
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub frame_cap: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 30,
            lr0: 1e-3,
            lr_decay: 0.05,
            frame_cap: 2000,
            seed: 0,
            mode: Mode::FabuLight,
        }
    }
}

/// `lr0 · (1 − decay)^(ξ−1)` for 1-based epochs.
pub fn learning_rate(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch == 0 || epoch > config.max_epochs {
        bail!(Schedule, "epoch {epoch} outside 1..={}", config.max_epochs);
    }
    Ok(config.lr0 * num_traits::Float::powi(1.0 - config.lr_decay, epoch as i32 - 1))
}

/// Clip-weighted epoch means.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub tau: f64,
    pub total: f64,
    pub heads: Vec<(HeadKind, f64)>,
    pub batches: usize,
    pub clips: usize,
}

impl EpochMetrics {
    pub fn head(&self, kind: HeadKind) -> Option<f64> {
        self.heads.iter().find(|(k, _)| *k == kind).map(|h| h.1)
    }
}

/// Per-step loss values of one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLoss {
    pub total: f64,
    pub heads: Vec<(HeadKind, f64)>,
}

/// Loss of one batch in training mode, with its gradients and BN updates.
pub struct BatchLoss<S> {
    pub total: f64,
    pub heads: Vec<(HeadKind, f64)>,
    pub grads: Gradients<S>,
    pub bn_updates: Vec<BnUpdate<S>>,
}

type StepError = (Error, Option<HeadKind>);

struct LossGraph<'a, S> {
    fwd: Forward<'a, S>,
    total: Var,
    heads: Vec<(HeadKind, f64)>,
}

fn loss_graph<'a, S: Scalar>(
    model: &'a Model<S>,
    batch: &Batch<S>,
    labels: &[S],
    mode: Mode,
    tau: f64,
) -> core::result::Result<LossGraph<'a, S>, StepError> {
    let mut fwd = model.forward(batch, mode, true).map_err(|e| (e, None))?;
    let mut heads = Vec::new();
    let mut terms = Vec::new();
    for &(kind, scores) in &fwd.heads {
        let l = fwd.ctx.graph.head_loss(scores, labels, S::of(tau)).map_err(|e| (e, Some(kind)))?;
        let value = fwd.ctx.graph.value(l).data()[0].f64();
        if !value.is_finite() {
            return Err((Error::Numeric(format!("{} head loss is {value}", kind.name())), Some(kind)));
        }
        heads.push((kind, value));
        terms.push((l, S::of(mode.head_weight(kind).unwrap_or(0.0))));
    }
    let total = fwd.ctx.graph.weighted_sum(&terms).map_err(|e| (e, None))?;
    Ok(LossGraph { fwd, total, heads })
}

/// Training-mode forward pass, weighted head losses and backward sweep.
///
/// Errors carry the head whose loss failed, when there is one.
pub fn batch_loss<S: Scalar>(
    model: &Model<S>,
    batch: &Batch<S>,
    labels: &[S],
    mode: Mode,
    tau: f64,
) -> core::result::Result<BatchLoss<S>, StepError> {
    let mut lg = loss_graph(model, batch, labels, mode, tau)?;
    let grads = lg.fwd.ctx.graph.backward(lg.total).map_err(|e| (e, None))?;
    Ok(BatchLoss {
        total: lg.fwd.ctx.graph.value(lg.total).data()[0].f64(),
        heads: lg.heads,
        grads,
        bn_updates: core::mem::take(&mut lg.fwd.ctx.bn_updates),
    })
}

/// The training-mode total loss of [`batch_loss`] without the backward sweep.
pub fn loss_value<S: Scalar>(model: &Model<S>, batch: &Batch<S>, labels: &[S], mode: Mode, tau: f64) -> Result<f64> {
    let lg = loss_graph(model, batch, labels, mode, tau).map_err(|e| e.0)?;
    Ok(lg.fwd.ctx.graph.value(lg.total).data()[0].f64())
}

/// Forward, backward and Adam on one batch.
pub fn train_step<S: Scalar>(
    model: &mut Model<S>,
    adam: &mut AdamState<S>,
    batch: &Batch<S>,
    labels: &[S],
    mode: Mode,
    tau: f64,
    lr: f64,
) -> core::result::Result<StepLoss, StepError> {
    let bl = batch_loss(model, batch, labels, mode, tau)?;
    bl.grads.accumulate_into(&mut model.store).map_err(|e| (e, None))?;
    model.apply_bn_updates(&bl.bn_updates);
    adam_step(&mut model.store, adam, lr).map_err(|e| (e, None))?;
    Ok(StepLoss {
        total: bl.total,
        heads: bl.heads,
    })
}

/// Trains `model` on `clips` for `config.max_epochs` epochs.
///
/// Only the parameters used by `config.mode` are optimized. `on_epoch`
/// sees each epoch's metrics and the model after that epoch (for
/// checkpointing); an error from it stops training.
pub fn train<S: Scalar>(
    model: &mut Model<S>,
    clips: &[SampleClip<S>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics, &Model<S>) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    if clips.is_empty() {
        bail!(Data, "training set is empty");
    }
    let lengths: Vec<usize> = clips.iter().map(SampleClip::frames).collect();
    if let Some(c) = clips.iter().find(|c| c.frames() > config.frame_cap) {
        bail!(
            Data,
            "clip {} has {} frames, above the cap of {}",
            c.key(),
            c.frames(),
            config.frame_cap
        );
    }
    let mode = config.mode;
    let with_poses = mode == Mode::FabuLight;
    let mut adam = AdamState::new(&model.store, model.active_params(mode));
    let mut log = Vec::new();
    for epoch in 1..=config.max_epochs {
        let tau = temperature(epoch, Phase::Train)?;
        let lr = learning_rate(epoch, config)?;
        let epoch_seed = config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let batches = assemble_batches(&lengths, config.frame_cap, Some(epoch_seed))?;
        let mut sums: Vec<(HeadKind, f64)> = mode.heads().iter().map(|&k| (k, 0.0)).collect();
        let mut total = 0.0;
        let mut seen = 0usize;
        for (b, members) in batches.iter().enumerate() {
            let group: Vec<&SampleClip<S>> = members.iter().map(|&i| &clips[i]).collect();
            let batch = collate(&group, with_poses)?;
            let labels: Vec<S> = group
                .iter()
                .flat_map(|c| c.labels.iter().map(|&l| S::of(l as f64)))
                .collect();
            let step = train_step(model, &mut adam, &batch, &labels, mode, tau, lr).map_err(|(e, head)| match (e, head) {
                (Error::Numeric(_), Some(h)) => Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    head: h.name().into(),
                },
                (e, _) => e,
            })?;
            let w = group.len() as f64;
            for (acc, (_, l)) in sums.iter_mut().zip(&step.heads) {
                acc.1 += w * l;
            }
            total += w * step.total;
            seen += group.len();
        }
        let n = seen as f64;
        let metrics = EpochMetrics {
            epoch,
            lr,
            tau,
            total: total / n,
            heads: sums.into_iter().map(|(k, s)| (k, s / n)).collect(),
            batches: batches.len(),
            clips: seen,
        };
        on_epoch(&metrics, model)?;
        log.push(metrics);
    }
    Ok(log)
}

/// Main-head probabilities for each clip at evaluation temperature,
/// batched like training.
pub fn infer<S: Scalar>(model: &Model<S>, clips: &[SampleClip<S>], mode: Mode, frame_cap: usize) -> Result<Vec<Vec<S>>> {
    let lengths: Vec<usize> = clips.iter().map(SampleClip::frames).collect();
    let cap = frame_cap.max(lengths.iter().copied().max().unwrap_or(1));
    let batches = assemble_batches(&lengths, cap, None)?;
    let tau = S::of(temperature(1, Phase::Eval)?);
    let mut out: Vec<Vec<S>> = vec![Vec::new(); clips.len()];
    for members in batches {
        let group: Vec<&SampleClip<S>> = members.iter().map(|&i| &clips[i]).collect();
        let batch = collate(&group, mode == Mode::FabuLight)?;
        let probs = model.predict(&batch, mode, tau)?;
        let t = group[0].frames();
        for (k, &i) in members.iter().enumerate() {
            out[i] = probs[k * t..(k + 1) * t].to_vec();
        }
    }
    Ok(out)
}
