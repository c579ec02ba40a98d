//! The assembled detector: encoders, fusion, and classification heads.

pub mod encoders;
pub mod layers;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autograd::Var;
use crate::error::{bail, Result};
use crate::loss::{HeadKind, Mode};
use crate::params::{Initializer, ParamId, ParamStore};
use crate::skeleton::{BodyVariant, SkeletonTopology};
use crate::{Scalar, Tensor};

use encoders::{BodyEncoder, Stream, VisualEncoder, FEATURE_DIM};
use layers::{apply_bn_updates, Builder, BnUpdate, Ctx, Gru, Linear};

pub const DEFAULT_FACE_SIZE: usize = 112;
pub const HIDDEN: usize = 128;
pub const CLASSES: usize = 2;

/// Architecture hyperparameters fixing every tensor shape in a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub face_size: usize,
    /// `None` builds the face+audio model without a body stream.
    pub body: Option<BodyVariant>,
}

impl Architecture {
    pub fn fabulight(body: BodyVariant) -> Self {
        Self {
            face_size: DEFAULT_FACE_SIZE,
            body: Some(body),
        }
    }

    pub fn lightasd() -> Self {
        Self {
            face_size: DEFAULT_FACE_SIZE,
            body: None,
        }
    }

    pub fn for_mode(mode: Mode, body: BodyVariant) -> Self {
        match mode {
            Mode::FabuLight => Self::fabulight(body),
            Mode::LightAsd => Self::lightasd(),
        }
    }

    pub fn with_face_size(mut self, face_size: usize) -> Self {
        self.face_size = face_size;
        self
    }

    /// The richest mode this architecture supports.
    pub fn mode(&self) -> Mode {
        if self.body.is_some() {
            Mode::FabuLight
        } else {
            Mode::LightAsd
        }
    }

    pub fn joints(&self) -> Option<usize> {
        self.body.map(BodyVariant::joints)
    }

    /// Canonical text form; hashed into weight files.
    pub fn descriptor(&self) -> String {
        let body = self.body.map_or("none", BodyVariant::name);
        format!(
            "fabulight-arch/1;face={};body={};feat={FEATURE_DIM};hidden={HIDDEN}",
            self.face_size, body
        )
    }

    /// FNV-1a over [`Architecture::descriptor`].
    pub fn hash(&self) -> u64 {
        self.descriptor().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }

    pub fn validate(&self) -> Result<()> {
        // stride-2 block then two halving pools
        if self.face_size < 8 {
            bail!(Config, "face size {} is too small (minimum 8)", self.face_size);
        }
        Ok(())
    }
}

/// BiGRU (directions summed) followed by a linear layer to two scores.
#[derive(Clone, Debug)]
pub struct Head {
    pub kind: HeadKind,
    pub forward_gru: Gru,
    pub backward_gru: Gru,
    pub fc: Linear,
}

impl Head {
    fn build<S: Scalar>(b: &mut Builder<'_, S>, kind: HeadKind) -> Result<Self> {
        let name = format!("head.{}", kind.name());
        Ok(Self {
            kind,
            forward_gru: b.gru(&format!("{name}.gru.forward"), FEATURE_DIM, HIDDEN)?,
            backward_gru: b.gru(&format!("{name}.gru.backward"), FEATURE_DIM, HIDDEN)?,
            fc: b.linear(&format!("{name}.fc"), HIDDEN, CLASSES)?,
        })
    }

    /// `[N, 128, T]` → `[N, T, 2]` scores (silent, speaking).
    pub fn forward<S: Scalar>(&self, cx: &mut Ctx<'_, S>, feature: Var) -> Result<Var> {
        let shape = cx.graph.shape(feature);
        if shape.len() != 3 || shape[1] != FEATURE_DIM {
            bail!(Dimension, "head input must be [N, {FEATURE_DIM}, T], got {shape:?}");
        }
        let x = cx.graph.transpose_last2(feature)?;
        let f = cx.gru(x, &self.forward_gru, false)?;
        let b = cx.gru(x, &self.backward_gru, true)?;
        let h = cx.graph.add(f, b)?;
        cx.linear(h, &self.fc)
    }
}

/// Batched model input. Frame counts agree across modalities.
#[derive(Clone, Debug)]
pub struct Batch<S> {
    /// `[N, 1, H, W, T]` in `[0, 1]`.
    pub faces: Tensor<S>,
    /// `[N, 1, 13, 1, 4T]`.
    pub mfcc: Tensor<S>,
    /// `[N, 3, V, 1, T]`; required for the body stream.
    pub poses: Option<Tensor<S>>,
}

impl<S: Scalar> Batch<S> {
    pub fn clips(&self) -> usize {
        self.faces.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.faces.shape()[4]
    }
}

/// Outcome of one forward pass.
pub struct Forward<'a, S> {
    pub ctx: Ctx<'a, S>,
    pub features: Vec<(&'static str, Var)>,
    pub fused: Var,
    /// `[N, T, 2]` scores per active head, main first.
    pub heads: Vec<(HeadKind, Var)>,
}

#[derive(Clone, Debug)]
pub struct Model<S> {
    pub arch: Architecture,
    pub store: ParamStore<S>,
    pub face: VisualEncoder,
    pub audio: VisualEncoder,
    pub body: Option<BodyEncoder>,
    pub heads: Vec<Head>,
}

/// Parameter-name prefix of each top-level component.
pub const GROUPS: [&str; 6] = ["face", "audio", "body", "head.main", "head.face", "head.body"];

impl<S: Scalar> Model<S> {
    /// Builds and initializes every parameter from `seed`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let mut init = Initializer::new(seed);
        let mut b = Builder {
            store: &mut store,
            init: &mut init,
        };
        let face = VisualEncoder::build(&mut b, "face", Stream::Face)?;
        let audio = VisualEncoder::build(&mut b, "audio", Stream::Audio)?;
        let body = match arch.body {
            Some(v) => Some(BodyEncoder::build(&mut b, "body", SkeletonTopology::build(v))?),
            None => None,
        };
        let mut heads = Vec::new();
        for &kind in arch.mode().heads() {
            heads.push(Head::build(&mut b, kind)?);
        }
        Ok(Self {
            arch,
            store,
            face,
            audio,
            body,
            heads,
        })
    }

    pub fn head(&self, kind: HeadKind) -> Option<&Head> {
        self.heads.iter().find(|h| h.kind == kind)
    }

    /// Registered heads in order.
    pub fn head_kinds(&self) -> Vec<HeadKind> {
        self.heads.iter().map(|h| h.kind).collect()
    }

    fn check_mode(&self, mode: Mode) -> Result<()> {
        if mode == Mode::FabuLight && self.body.is_none() {
            bail!(Config, "fabulight mode needs a model with a body stream");
        }
        Ok(())
    }

    /// Learnable parameters that `mode` uses.
    pub fn active_params(&self, mode: Mode) -> Vec<ParamId> {
        self.store
            .learnable()
            .filter(|(_, p)| mode == Mode::FabuLight || !(p.name.starts_with("body.") || p.name.starts_with("head.body.")))
            .map(|(id, _)| id)
            .collect()
    }

    fn check_batch(&self, batch: &Batch<S>, mode: Mode) -> Result<()> {
        let fs = batch.faces.shape();
        if fs.len() != 5 || fs[1] != 1 || fs[2] != self.arch.face_size || fs[3] != self.arch.face_size {
            bail!(
                Dimension,
                "faces must be [N, 1, {0}, {0}, T], got {fs:?}",
                self.arch.face_size
            );
        }
        let (n, t) = (fs[0], fs[4]);
        let ms = batch.mfcc.shape();
        if ms.len() != 5 || ms[0] != n || ms[2] != encoders::MFCC_DIM {
            bail!(Dimension, "mfcc must be [{n}, 1, 13, 1, 4T], got {ms:?}");
        }
        if ms[4] != encoders::MFCC_PER_FRAME * t {
            bail!(
                Alignment,
                "mfcc extent {} is not {} x {t} frames",
                ms[4],
                encoders::MFCC_PER_FRAME
            );
        }
        if mode == Mode::FabuLight {
            let Some(p) = &batch.poses else {
                bail!(Data, "fabulight mode needs pose input");
            };
            let ps = p.shape();
            if ps.len() != 5 || ps[0] != n || ps[4] != t {
                bail!(Dimension, "poses must be [{n}, 3, V, 1, {t}], got {ps:?}");
            }
        }
        Ok(())
    }

    /// Records the forward pass of `mode` on a fresh tape.
    pub fn forward(&self, batch: &Batch<S>, mode: Mode, training: bool) -> Result<Forward<'_, S>> {
        self.check_mode(mode)?;
        self.check_batch(batch, mode)?;
        let mut cx = Ctx::new(&self.store, training);
        let faces = cx.graph.input(batch.faces.clone());
        let mfcc = cx.graph.input(batch.mfcc.clone());
        let mut features = Vec::new();
        features.push(("face", self.face.forward(&mut cx, faces)?));
        features.push(("audio", self.audio.forward(&mut cx, mfcc)?));
        if mode == Mode::FabuLight {
            let body = self.body.as_ref().expect("checked by check_mode");
            let poses = cx.graph.input(batch.poses.clone().expect("checked by check_batch"));
            features.push(("body", body.forward(&mut cx, poses)?));
        }
        let all: Vec<Var> = features.iter().map(|f| f.1).collect();
        let fused = fuse(&mut cx, &all)?;
        let mut heads = Vec::new();
        for &kind in mode.heads() {
            let head = self
                .head(kind)
                .ok_or_else(|| crate::Error::Config(format!("model has no {} head", kind.name())))?;
            let input = match kind {
                HeadKind::Main => fused,
                HeadKind::Face => features[0].1,
                HeadKind::Body => features[2].1,
            };
            heads.push((kind, head.forward(&mut cx, input)?));
        }
        Ok(Forward {
            ctx: cx,
            features,
            fused,
            heads,
        })
    }

    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<S>]) {
        apply_bn_updates(&mut self.store, updates);
    }

    /// Inference-mode speaking probabilities `[N·T]` from the main head.
    pub fn predict(&self, batch: &Batch<S>, mode: Mode, tau: S) -> Result<Vec<S>> {
        let fwd = self.forward(batch, mode, false)?;
        let (_, scores) = fwd.heads[0];
        crate::loss::predict(fwd.ctx.graph.value(scores).data(), tau)
    }
}

/// Element-wise sum of equally shaped modality features.
pub fn fuse<S: Scalar>(cx: &mut Ctx<'_, S>, features: &[Var]) -> Result<Var> {
    if features.is_empty() {
        bail!(Dimension, "nothing to fuse");
    }
    let first = cx.graph.shape(features[0]).to_vec();
    for &f in features {
        if cx.graph.shape(f) != first.as_slice() {
            bail!(
                Dimension,
                "cannot fuse {:?} with {first:?}",
                cx.graph.shape(f)
            );
        }
    }
    if features.len() == 1 {
        return Ok(features[0]);
    }
    cx.graph.add_n(features)
}
