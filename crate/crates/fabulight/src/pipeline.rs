//! Glue between loaded clips, the trainer and score files.

use fabulight_core::loss::Mode;
use fabulight_core::metrics::ScoreRow;
use fabulight_core::model::Model;
use fabulight_core::train::{infer, SampleClip};

use crate::error::Result;

/// Main-head probabilities for every frame of every clip, as score rows.
pub fn score_clips(model: &Model<f32>, clips: &[SampleClip<f32>], mode: Mode, frame_cap: usize) -> Result<Vec<ScoreRow>> {
    let probs = infer(model, clips, mode, frame_cap)?;
    let mut rows = Vec::new();
    for (clip, p) in clips.iter().zip(probs) {
        for (f, q) in p.into_iter().enumerate() {
            rows.push(ScoreRow {
                video_id: clip.video_id.clone(),
                entity_id: clip.entity_id.clone(),
                timestamp: clip.timestamps[f],
                probability: f64::from(q),
                label: clip.labels[f] == 1,
                category: clip.category.clone(),
            });
        }
    }
    Ok(rows)
}
