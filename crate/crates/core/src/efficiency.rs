//! Static parameter and multiply-accumulate profile of an architecture.
//!
//! Counts come from layer shapes alone, without instantiating weights.
//! Conventions: a convolution costs `output elements × C_in × kernel
//! volume` MACs (padding taps included), a linear layer `rows × O × H`, a
//! GRU direction `steps × (3H·D + 3H·H)`, a graph contraction
//! `κ × C_out × V × V × T`. Batch-norm, activations, pooling and
//! element-wise sums cost nothing. Only the deployed graph is totalled:
//! the auxiliary heads, used in training only, are listed separately.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::loss::HeadKind;
use crate::model::encoders::{BODY_CHANNELS, FEATURE_DIM, MFCC_DIM, MFCC_PER_FRAME, PATH_KERNELS, VISUAL_CHANNELS};
use crate::model::{Architecture, CLASSES, HIDDEN};
use crate::skeleton::BodyVariant;

/// The three profiled configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProfileConfig {
    LightAsd,
    FabuLightUpper,
    FabuLightWhole,
}

impl ProfileConfig {
    pub const ALL: [Self; 3] = [Self::LightAsd, Self::FabuLightUpper, Self::FabuLightWhole];

    pub fn architecture(self) -> Architecture {
        match self {
            Self::LightAsd => Architecture::lightasd(),
            Self::FabuLightUpper => Architecture::fabulight(BodyVariant::Upper),
            Self::FabuLightWhole => Architecture::fabulight(BodyVariant::Whole),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LightAsd => "lightasd",
            Self::FabuLightUpper => "fabulight-upper",
            Self::FabuLightWhole => "fabulight-whole",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerRow {
    pub name: String,
    pub params: u64,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyReport {
    pub config: String,
    pub frames: usize,
    pub rows: Vec<LayerRow>,
    /// Training-only layers, excluded from the totals.
    pub auxiliary: Vec<LayerRow>,
    pub total_params: u64,
    pub total_macs: u64,
}

impl EfficiencyReport {
    pub fn from_rows(config: &str, frames: usize, rows: Vec<LayerRow>, auxiliary: Vec<LayerRow>) -> Self {
        Self {
            config: config.into(),
            frames,
            total_params: rows.iter().map(|r| r.params).sum(),
            total_macs: rows.iter().map(|r| r.macs).sum(),
            rows,
            auxiliary,
        }
    }

    pub fn macs_per_frame(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.total_macs as f64 / self.frames as f64
        }
    }

    /// Totals over rows whose name starts with `prefix`.
    pub fn subtotal(&self, prefix: &str) -> (u64, u64) {
        self.rows
            .iter()
            .filter(|r| r.name.starts_with(prefix))
            .fold((0, 0), |(p, m), r| (p + r.params, m + r.macs))
    }
}

/// `100 · (b − a) / a`.
pub fn percent_increase(a: f64, b: f64) -> f64 {
    100.0 * (b - a) / a
}

struct Rows(Vec<LayerRow>);

impl Rows {
    fn push(&mut self, name: String, params: usize, macs: usize) {
        self.0.push(LayerRow {
            name,
            params: params as u64,
            macs: macs as u64,
        });
    }

    fn bn(&mut self, name: String, c: usize) {
        self.push(name, 2 * c, 0);
    }
}

/// Visual encoder rows; `area` is the product of the per-block "spatial"
/// extents, `steps` the per-block temporal extents.
fn visual_rows(out: &mut Rows, name: &str, face: Option<usize>, frames: usize) {
    let (mut h, mut w, mut t) = match face {
        Some(n) => (n, n, frames),
        None => (MFCC_DIM, 1, MFCC_PER_FRAME * frames),
    };
    for (i, &(ci, co)) in VISUAL_CHANNELS.iter().enumerate() {
        let block = format!("{name}.block{}", i + 1);
        if face.is_some() && i == 0 {
            // stride-2 spatial convolution, padding (κ-1)/2; equal for κ = 3, 5
            h = (h - 1) / 2 + 1;
            w = (w - 1) / 2 + 1;
        }
        let plane = h * w * t;
        for k in PATH_KERNELS {
            let sk = if face.is_some() { k * k } else { k };
            out.push(format!("{block}.k{k}.spatial"), co * ci * sk, plane * co * ci * sk);
            out.bn(format!("{block}.k{k}.spatial_bn"), co);
            out.push(format!("{block}.k{k}.temporal"), co * co * k, plane * co * co * k);
            out.bn(format!("{block}.k{k}.temporal_bn"), co);
        }
        out.push(format!("{block}.merge"), co * co, plane * co * co);
        out.bn(format!("{block}.merge_bn"), co);
        if i + 1 < VISUAL_CHANNELS.len() {
            if face.is_some() {
                h = (h - 1) / 2 + 1;
                w = (w - 1) / 2 + 1;
            } else {
                t = (t - 1) / 2 + 1;
            }
        }
    }
}

fn body_rows(out: &mut Rows, v: usize, t: usize) {
    out.bn("body.input_bn".into(), 3 * v);
    for (i, &(ci, co)) in BODY_CHANNELS.iter().enumerate() {
        let block = format!("body.block{}", i + 1);
        for k in PATH_KERNELS {
            let proj = k * co;
            out.push(
                format!("{block}.k{k}.graph"),
                ci * proj + k * v * v,
                v * t * proj * ci + k * co * v * v * t,
            );
            out.bn(format!("{block}.k{k}.graph_bn"), co);
            out.push(format!("{block}.k{k}.temporal"), co * co * k, v * t * co * co * k);
            out.bn(format!("{block}.k{k}.temporal_bn"), co);
        }
        out.push(format!("{block}.merge"), co * co, v * t * co * co);
        out.bn(format!("{block}.merge_bn"), co);
    }
}

fn head_rows(out: &mut Rows, kind: HeadKind, t: usize) {
    let name = format!("head.{}", kind.name());
    let (d, h) = (FEATURE_DIM, HIDDEN);
    for dir in ["forward", "backward"] {
        out.push(
            format!("{name}.gru.{dir}"),
            3 * h * d + 3 * h * h + 6 * h,
            t * (3 * h * d + 3 * h * h),
        );
    }
    out.push(format!("{name}.fc"), CLASSES * h + CLASSES, t * CLASSES * h);
}

/// Profile of `arch` on a reference clip of `frames` frames.
pub fn profile(arch: &Architecture, frames: usize) -> EfficiencyReport {
    let mut rows = Rows(Vec::new());
    visual_rows(&mut rows, "face", Some(arch.face_size), frames);
    visual_rows(&mut rows, "audio", None, frames);
    if let Some(v) = arch.joints() {
        body_rows(&mut rows, v, frames);
    }
    head_rows(&mut rows, HeadKind::Main, frames);
    let mut aux = Rows(Vec::new());
    for &kind in &arch.mode().heads()[1..] {
        head_rows(&mut aux, kind, frames);
    }
    let config = match arch.body {
        None => String::from("lightasd"),
        Some(v) => format!("fabulight-{}", v.name()),
    };
    EfficiencyReport::from_rows(&config, frames, rows.0, aux.0)
}

pub fn profile_config(config: ProfileConfig, frames: usize) -> EfficiencyReport {
    profile(&config.architecture(), frames)
}

fn fmt_count(n: u64) -> String {
    let digits = format!("{n}");
    let mut s = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            s.push(',');
        }
        s.push(ch);
    }
    s
}

/// Aligned text table: one line per layer, then the totals.
pub fn render_report(report: &EfficiencyReport) -> String {
    let width = report
        .rows
        .iter()
        .chain(&report.auxiliary)
        .map(|r| r.name.len())
        .chain([5])
        .max()
        .unwrap_or(5);
    let mut s = String::new();
    let _ = writeln!(s, "config: {}  reference frames: {}", report.config, report.frames);
    let _ = writeln!(s, "{:<width$}  {:>12}  {:>18}", "layer", "params", "MACs");
    let rule = "-".repeat(width + 34);
    let _ = writeln!(s, "{rule}");
    for r in &report.rows {
        let _ = writeln!(s, "{:<width$}  {:>12}  {:>18}", r.name, fmt_count(r.params), fmt_count(r.macs));
    }
    let _ = writeln!(s, "{rule}");
    let _ = writeln!(
        s,
        "{:<width$}  {:>12}  {:>18}",
        "total",
        fmt_count(report.total_params),
        fmt_count(report.total_macs)
    );
    let _ = writeln!(
        s,
        "params: {:.3}M  MACs/frame: {:.1}M",
        report.total_params as f64 / 1e6,
        report.macs_per_frame() / 1e6
    );
    if !report.auxiliary.is_empty() {
        let (p, m) = report
            .auxiliary
            .iter()
            .fold((0, 0), |(p, m), r| (p + r.params, m + r.macs));
        let _ = writeln!(s, "training-only heads (not totalled):");
        for r in &report.auxiliary {
            let _ = writeln!(s, "{:<width$}  {:>12}  {:>18}", r.name, fmt_count(r.params), fmt_count(r.macs));
        }
        let _ = writeln!(s, "{:<width$}  {:>12}  {:>18}", "auxiliary total", fmt_count(p), fmt_count(m));
    }
    s
}

/// Parameter and MAC increase of `other` over `base`, in percent.
pub fn comparison_line(base: &EfficiencyReport, other: &EfficiencyReport) -> String {
    format!(
        "{} vs {}: params {:+.1}%, MACs/frame {:+.2}%",
        other.config,
        base.config,
        percent_increase(base.total_params as f64, other.total_params as f64),
        percent_increase(base.macs_per_frame(), other.macs_per_frame())
    )
}
