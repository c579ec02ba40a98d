//! The dataset manifest: one CSV row per (entity, frame).
//!
//! Bounding boxes are normalized against the decoded frame size, so
//! `0 ≤ x1 < x2 ≤ 1` and `0 ≤ y1 < y2 ≤ 1`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 14] = [
    "video_id",
    "entity_id",
    "timestamp",
    "face_x1",
    "face_y1",
    "face_x2",
    "face_y2",
    "body_x1",
    "body_y1",
    "body_x2",
    "body_y2",
    "label",
    "category",
    "fps",
];

pub const CATEGORIES: [&str; 6] = ["OC", "SI", "FO", "HVN", "SS", "synthetic"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const FULL: BBox = BBox {
        x1: 0.0,
        y1: 0.0,
        x2: 1.0,
        y2: 1.0,
    };

    fn check(&self) -> std::result::Result<(), String> {
        let ok = |a: f64, b: f64| (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && a < b;
        if ok(self.x1, self.x2) && ok(self.y1, self.y2) {
            Ok(())
        } else {
            Err(format!(
                "box ({}, {}, {}, {}) violates 0 <= x1 < x2 <= 1, 0 <= y1 < y2 <= 1",
                self.x1, self.y1, self.x2, self.y2
            ))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub video_id: String,
    pub entity_id: String,
    pub timestamp: f64,
    pub face: BBox,
    pub body: BBox,
    pub label: u8,
    pub category: String,
    pub fps: f64,
}

impl ManifestRow {
    /// Frame number of this row in its video.
    pub fn frame_index(&self) -> u64 {
        (self.timestamp * self.fps).round() as u64
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    video_id: String,
    entity_id: String,
    timestamp: f64,
    face_x1: f64,
    face_y1: f64,
    face_x2: f64,
    face_y2: f64,
    body_x1: f64,
    body_y1: f64,
    body_x2: f64,
    body_y2: f64,
    label: u8,
    category: String,
    fps: f64,
}

impl From<RawRow> for ManifestRow {
    fn from(r: RawRow) -> Self {
        ManifestRow {
            video_id: r.video_id,
            entity_id: r.entity_id,
            timestamp: r.timestamp,
            face: BBox {
                x1: r.face_x1,
                y1: r.face_y1,
                x2: r.face_x2,
                y2: r.face_y2,
            },
            body: BBox {
                x1: r.body_x1,
                y1: r.body_y1,
                x2: r.body_x2,
                y2: r.body_y2,
            },
            label: r.label,
            category: r.category,
            fps: r.fps,
        }
    }
}

impl From<&ManifestRow> for RawRow {
    fn from(r: &ManifestRow) -> Self {
        RawRow {
            video_id: r.video_id.clone(),
            entity_id: r.entity_id.clone(),
            timestamp: r.timestamp,
            face_x1: r.face.x1,
            face_y1: r.face.y1,
            face_x2: r.face.x2,
            face_y2: r.face.y2,
            body_x1: r.body.x1,
            body_y1: r.body.y1,
            body_x2: r.body.x2,
            body_y2: r.body.y2,
            label: r.label,
            category: r.category.clone(),
            fps: r.fps,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub rows: Vec<ManifestRow>,
    /// 1-based file line of each row, for diagnostics.
    pub lines: Vec<u64>,
}

/// One entity's rows in time order.
#[derive(Clone, Debug)]
pub struct Entity<'a> {
    pub video_id: &'a str,
    pub entity_id: &'a str,
    pub rows: Vec<&'a ManifestRow>,
}

impl Entity<'_> {
    pub fn key(&self) -> String {
        format!("{}/{}", self.video_id, self.entity_id)
    }
}

impl Manifest {
    /// Entities in order of first appearance.
    pub fn entities(&self) -> Vec<Entity<'_>> {
        let mut order: Vec<(&str, &str)> = Vec::new();
        let mut groups: HashMap<(&str, &str), Vec<&ManifestRow>> = HashMap::new();
        for r in &self.rows {
            let key = (r.video_id.as_str(), r.entity_id.as_str());
            groups
                .entry(key)
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(r);
        }
        order
            .into_iter()
            .map(|k| Entity {
                video_id: k.0,
                entity_id: k.1,
                rows: groups.remove(&k).unwrap_or_default(),
            })
            .collect()
    }
}

/// Reads and validates a manifest; every problem is reported with its line.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
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
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            location: e.position().map_or_else(|| path.display().to_string(), |p| at(p.line())),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let raw: RawRow = record.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            location: at(line),
            message: e.to_string(),
        })?;
        rows.push(ManifestRow::from(raw));
        lines.push(line);
    }
    let manifest = Manifest {
        path: path.to_path_buf(),
        rows,
        lines,
    };
    validate(&manifest)?;
    Ok(manifest)
}

fn validate(m: &Manifest) -> Result<()> {
    let bad = |line: u64, message: String| Error::Validation {
        location: format!("{}:{line}", m.path.display()),
        message,
    };
    let mut fps: BTreeMap<&str, f64> = BTreeMap::new();
    let mut last: HashMap<(&str, &str), f64> = HashMap::new();
    for (r, &line) in m.rows.iter().zip(&m.lines) {
        if r.video_id.is_empty() || r.entity_id.is_empty() {
            return Err(bad(line, "empty video or entity id".into()));
        }
        for (which, b) in [("face", &r.face), ("body", &r.body)] {
            b.check().map_err(|e| bad(line, format!("{which} {e}")))?;
        }
        if r.label > 1 {
            return Err(bad(line, format!("label {} is not 0 or 1", r.label)));
        }
        if !CATEGORIES.contains(&r.category.as_str()) {
            return Err(bad(
                line,
                format!("category {:?} is not one of {}", r.category, CATEGORIES.join("|")),
            ));
        }
        if !(r.fps.is_finite() && r.fps > 0.0) {
            return Err(bad(line, format!("fps {} is not positive", r.fps)));
        }
        if *fps.entry(&r.video_id).or_insert(r.fps) != r.fps {
            return Err(bad(line, format!("fps {} differs from earlier rows of video {}", r.fps, r.video_id)));
        }
        if !(r.timestamp.is_finite() && r.timestamp >= 0.0) {
            return Err(bad(line, format!("timestamp {} is not a non-negative time", r.timestamp)));
        }
        let key = (r.video_id.as_str(), r.entity_id.as_str());
        if let Some(&prev) = last.get(&key) {
            if r.timestamp == prev {
                return Err(bad(
                    line,
                    format!("duplicate row for {}/{} at {}", r.video_id, r.entity_id, r.timestamp),
                ));
            }
            if r.timestamp < prev {
                return Err(bad(
                    line,
                    format!("timestamp {} of {}/{} does not increase", r.timestamp, r.video_id, r.entity_id),
                ));
            }
        }
        last.insert(key, r.timestamp);
    }
    Ok(())
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(Error::csv(path))?;
    w.write_record(COLUMNS).map_err(Error::csv(path))?;
    for r in rows {
        w.serialize(RawRow::from(r)).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}
