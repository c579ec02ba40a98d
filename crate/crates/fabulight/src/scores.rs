//! Per-frame score files: `video_id,entity_id,timestamp,probability,label,category`.

use std::path::Path;

use fabulight_core::metrics::ScoreRow;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 6] = ["video_id", "entity_id", "timestamp", "probability", "label", "category"];

#[derive(Serialize, Deserialize)]
struct RawScore {
    video_id: String,
    entity_id: String,
    timestamp: f64,
    probability: f64,
    label: u8,
    category: String,
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(Error::csv(path))?;
    w.write_record(COLUMNS).map_err(Error::csv(path))?;
    for r in rows {
        w.serialize(RawScore {
            video_id: r.video_id.clone(),
            entity_id: r.entity_id.clone(),
            timestamp: r.timestamp,
            probability: r.probability,
            label: u8::from(r.label),
            category: r.category.clone(),
        })
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let file = std::fs::File::open(path).map_err(Error::io(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let at = |line: u64| format!("{}:{line}", path.display());
    let headers = reader.headers().map_err(Error::csv(path))?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(Error::Parse {
            location: at(1),
            message: format!("header must be {}", COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            location: e.position().map_or_else(|| path.display().to_string(), |p| at(p.line())),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let raw: RawScore = record.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            location: at(line),
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&raw.probability) {
            return Err(Error::Validation {
                location: at(line),
                message: format!("probability {} is outside [0, 1]", raw.probability),
            });
        }
        if raw.label > 1 {
            return Err(Error::Validation {
                location: at(line),
                message: format!("label {} is not 0 or 1", raw.label),
            });
        }
        rows.push(ScoreRow {
            video_id: raw.video_id,
            entity_id: raw.entity_id,
            timestamp: raw.timestamp,
            probability: raw.probability,
            label: raw.label == 1,
            category: raw.category,
        });
    }
    Ok(rows)
}
