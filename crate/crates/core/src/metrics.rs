//! Average precision over ranked per-frame speaking scores.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Step-interpolated AP: `Σ (R_k − R_{k−1}) · P_k` over descending score
/// thresholds. Tied scores share one threshold, so the result does not
/// depend on row order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        bail!(Dimension, "{} scores for {} labels", scores.len(), labels.len());
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        bail!(Data, "score {i} is NaN");
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        bail!(UndefinedMetric, "average precision needs at least one positive");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("NaN rejected above"));
    let (mut tp, mut seen, mut prev_tp) = (0usize, 0usize, 0usize);
    let mut sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let level = scores[order[k]];
        while k < order.len() && scores[order[k]] == level {
            tp += usize::from(labels[order[k]]);
            seen += 1;
            k += 1;
        }
        if tp > prev_tp {
            sum += (tp - prev_tp) as f64 * (tp as f64 / seen as f64);
            prev_tp = tp;
        }
    }
    Ok(sum / positives as f64)
}

/// One scored frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub video_id: String,
    pub entity_id: String,
    pub timestamp: f64,
    pub probability: f64,
    pub label: bool,
    pub category: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub overall: f64,
    /// AP per category present in the input; absent categories have no entry.
    pub by_category: BTreeMap<String, f64>,
    pub rows: usize,
}

/// Overall AP over all rows plus AP within each category present.
pub fn evaluate(rows: &[ScoreRow]) -> Result<EvalReport> {
    let (scores, labels): (Vec<f64>, Vec<bool>) = rows.iter().map(|r| (r.probability, r.label)).unzip();
    let overall = average_precision(&scores, &labels)?;
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry(&r.category).or_default();
        g.0.push(r.probability);
        g.1.push(r.label);
    }
    let mut by_category = BTreeMap::new();
    for (cat, (s, l)) in groups {
        let ap = average_precision(&s, &l).map_err(|e| match e {
            crate::Error::UndefinedMetric(m) => crate::Error::UndefinedMetric(alloc::format!("category {cat}: {m}")),
            other => other,
        })?;
        by_category.insert(cat.into(), ap);
    }
    Ok(EvalReport {
        overall,
        by_category,
        rows: rows.len(),
    })
}
