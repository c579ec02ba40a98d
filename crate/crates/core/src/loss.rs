//! Temperature-scaled prediction, the per-head cross-entropy, the
//! temperature schedule and the per-mode loss weighting.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::Scalar;

pub const TAU_BASE: f64 = 1.3;
pub const TAU_SLOPE: f64 = 0.02;
pub const TAU_EVAL: f64 = 1.0;
pub const MAX_EPOCHS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Face, audio and body streams with face and body auxiliary heads.
    FabuLight,
    /// Face and audio only, with a face auxiliary head.
    LightAsd,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::FabuLight => "fabulight",
            Mode::LightAsd => "lightasd",
        }
    }

    /// Heads trained in this mode, main head first.
    pub fn heads(self) -> &'static [HeadKind] {
        match self {
            Mode::FabuLight => &[HeadKind::Main, HeadKind::Face, HeadKind::Body],
            Mode::LightAsd => &[HeadKind::Main, HeadKind::Face],
        }
    }

    /// Weight of each head's loss in the total.
    pub fn head_weight(self, head: HeadKind) -> Option<f64> {
        match (self, head) {
            (_, HeadKind::Main) => Some(1.0),
            (Mode::FabuLight, HeadKind::Face | HeadKind::Body) => Some(0.25),
            (Mode::LightAsd, HeadKind::Face) => Some(0.5),
            (Mode::LightAsd, HeadKind::Body) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HeadKind {
    /// Classifier over the fused features.
    Main,
    Face,
    Body,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Main => "main",
            HeadKind::Face => "face",
            HeadKind::Body => "body",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// `τ(ξ) = 1.3 − 0.02ξ` for 1-based training epochs; 1 at evaluation.
pub fn temperature(epoch: usize, phase: Phase) -> Result<f64> {
    match phase {
        Phase::Eval => Ok(TAU_EVAL),
        Phase::Train => {
            if !(1..=MAX_EPOCHS).contains(&epoch) {
                bail!(Schedule, "epoch {epoch} outside 1..={MAX_EPOCHS}");
            }
            Ok(TAU_BASE - TAU_SLOPE * epoch as f64)
        }
    }
}

/// `exp(s/τ) / (exp(s/τ) + exp(q/τ))` for speaking score `s` and silent score `q`.
#[inline]
pub fn speaking_probability<S: Scalar>(spk: S, sil: S, tau: S) -> S {
    let d = (spk - sil) / tau;
    if d >= S::zero() {
        S::one() / (S::one() + (-d).exp())
    } else {
        let e = d.exp();
        e / (S::one() + e)
    }
}

/// Per-frame probabilities from `[T, 2]` scores laid out as (silent, speaking).
pub fn predict<S: Scalar>(scores: &[S], tau: S) -> Result<Vec<S>> {
    if !(tau > S::zero()) {
        bail!(Parameter, "temperature must be positive, got {tau}");
    }
    if scores.len() % 2 != 0 {
        bail!(Dimension, "scores must have two columns");
    }
    Ok(scores.chunks_exact(2).map(|r| speaking_probability(r[1], r[0], tau)).collect())
}

/// Clamps to `[1e-7, 1 − 1e-7]`; NaN passes through so the loss reports it.
#[inline]
pub fn clamp_probability<S: Scalar>(p: S) -> S {
    let lo = S::of(crate::autograd::PROB_CLAMP);
    if p.is_nan() {
        p
    } else {
        p.max(lo).min(S::one() - lo)
    }
}

/// Frame-averaged binary cross-entropy with probabilities clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn head_loss<S: Scalar>(probs: &[S], labels: &[S]) -> Result<S> {
    if probs.len() != labels.len() {
        bail!(Dimension, "{} probabilities for {} labels", probs.len(), labels.len());
    }
    if probs.is_empty() {
        bail!(EmptySequence, "head loss over zero frames");
    }
    let mut total = S::zero();
    for (&p, &g) in probs.iter().zip(labels) {
        if g != S::zero() && g != S::one() {
            bail!(Data, "label {g} is not 0 or 1");
        }
        let p = clamp_probability(p);
        total -= g * p.ln() + (S::one() - g) * (S::one() - p).ln();
    }
    Ok(total / S::of(probs.len() as f64))
}

/// Weighted sum of the head losses required by `mode`.
pub fn total_loss<S: Scalar>(mode: Mode, losses: &[(HeadKind, S)]) -> Result<S> {
    let mut total = S::zero();
    for &head in mode.heads() {
        let Some(&(_, l)) = losses.iter().find(|(h, _)| *h == head) else {
            bail!(Config, "{} mode needs a {} head loss", mode.name(), head.name());
        };
        total += S::of(mode.head_weight(head).unwrap_or(0.0)) * l;
    }
    Ok(total)
}
