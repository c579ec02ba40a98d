//! Whole-model analytic gradients against central finite differences.

use fabulight_core::gradcheck::probe_gradient;
use fabulight_core::loss::Mode;
use fabulight_core::model::{Architecture, Model};
use fabulight_core::skeleton::BodyVariant;
use fabulight_core::train::{batch_loss, loss_value};
use rand::Rng;

const FRAMES: usize = 4;
const CLIPS: usize = 1;
const STEP: f64 = 1e-6;
const TAU: f64 = 1.28;
pub const TOLERANCE: f64 = 1e-4;

/// Central differences at this step resolve about `ε·|L|/h ≈ 1e-10`, so a
/// relative error of 1e-4 is only meaningful above this magnitude.
const RESOLVABLE: f64 = 1e-6;

pub struct GradReport {
    pub probes: usize,
    pub adjacency_probes: usize,
    pub worst: f64,
    pub worst_at: String,
    /// Probes above [`TOLERANCE`].
    pub bad: Vec<String>,
    /// Tensors with no resolvable coordinate.
    pub flat: Vec<String>,
    /// Largest |analytic| and |numeric| over the flat tensors.
    pub flat_analytic: f64,
    pub flat_numeric: f64,
}

/// Two resolvable coordinates from every learnable tensor, plus one from
/// each partition matrix of every adjacency copy. Tensors with no
/// resolvable coordinate are returned separately as `(name, start, end)`.
fn sample_coords(model: &Model<f64>, grads: &[f64], seed: u64) -> (Vec<(String, usize)>, Vec<(String, usize, usize)>) {
    let mut r = super::rng(seed);
    let mut out = Vec::new();
    let mut flat = Vec::new();
    let mut pick = |name: String, range: std::ops::Range<usize>, n: usize, out: &mut Vec<(String, usize)>| {
        let ok: Vec<usize> = range.clone().filter(|&i| grads[i].abs() >= RESOLVABLE).collect();
        if ok.is_empty() {
            flat.push((name, range.start, range.end));
        } else {
            for _ in 0..n {
                out.push((name.clone(), ok[r.gen_range(0..ok.len())]));
            }
        }
    };
    for (id, offset) in model.store.flat_layout() {
        let p = model.store.get(id);
        let len = p.tensor.len();
        if p.name.ends_with(".adjacency") {
            let (k, vv) = (p.tensor.shape()[0], p.tensor.shape()[1] * p.tensor.shape()[2]);
            for part in 0..k {
                let start = offset + part * vv;
                pick(format!("{}[r={}]", p.name, part), start..start + vv, 1, &mut out);
            }
        } else {
            pick(p.name.clone(), offset..offset + len, 2, &mut out);
        }
    }
    (out, flat)
}

/// Upper-body FabuLight at 32×32 faces, total loss in training mode.
pub fn run() -> GradReport {
    let arch = Architecture::fabulight(BodyVariant::Upper).with_face_size(32);
    let model = Model::<f64>::new(arch, 7).unwrap();
    let batch = super::random_batch(&arch, CLIPS, FRAMES, 11);
    let labels = super::random_labels(CLIPS * FRAMES, 13);

    let bl = batch_loss(&model, &batch, &labels, Mode::FabuLight, TAU).map_err(|e| e.0).unwrap();
    let mut with_grads = model.clone();
    bl.grads.accumulate_into(&mut with_grads.store).unwrap();
    let analytic = with_grads.store.flat_grads();
    let theta = model.store.flat_values();

    let (coords, flat) = sample_coords(&model, &analytic, 17);
    let flat_analytic = flat
        .iter()
        .flat_map(|(_, a, b)| analytic[*a..*b].iter())
        .fold(0.0f64, |m, g| m.max(g.abs()));

    let mut probe_model = model.clone();
    let f = |p: &[f64]| {
        probe_model.store.load_flat_values(p)?;
        loss_value(&probe_model, &batch, &labels, Mode::FabuLight, TAU)
    };
    let mut idx: Vec<usize> = coords.iter().map(|c| c.1).collect();
    idx.extend(flat.iter().map(|f| f.1));
    let mut probes = probe_gradient(f, &theta, &analytic, STEP, &idx).unwrap();
    let flat_numeric = probes.split_off(coords.len()).iter().fold(0.0f64, |m, p| m.max(p.numeric.abs()));

    let (worst, worst_at) = probes
        .iter()
        .zip(&coords)
        .map(|(p, c)| (p.rel_error, c.0.clone()))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((0.0, String::new()));
    let bad = probes
        .iter()
        .zip(&coords)
        .filter(|(p, _)| !(p.rel_error <= TOLERANCE))
        .map(|(p, (n, _))| format!("{n}: {p:?}"))
        .collect();
    GradReport {
        probes: probes.len(),
        adjacency_probes: coords.iter().filter(|(n, _)| n.contains(".adjacency[")).count(),
        worst,
        worst_at,
        bad,
        flat: flat.into_iter().map(|f| f.0).collect(),
        flat_analytic,
        flat_numeric,
    }
}

impl GradReport {
    /// A temporal_bn without a following ReLU feeds a linear merge and a
    /// training-mode BN, which cancels any per-channel shift: its beta has
    /// an identically zero gradient. Nothing else may be flat.
    pub fn structural_zeros_ok(&self) -> bool {
        self.flat.len() == 3 * 2
            && self
                .flat
                .iter()
                .all(|n| n.starts_with("body.") && n.ends_with(".temporal_bn.beta"))
            && self.flat_analytic < 1e-15
            && self.flat_numeric < 1e-8
    }

    /// One probe per partition matrix: three blocks, radius 1 and 2 paths.
    pub fn covers_adjacency(&self) -> bool {
        self.adjacency_probes == 3 * (3 + 5)
    }

    pub fn passed(&self) -> bool {
        self.bad.is_empty() && self.structural_zeros_ok() && self.covers_adjacency() && self.probes >= 200
    }
}
