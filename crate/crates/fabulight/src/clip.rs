//! Turning manifest entities and their media files into training clips.
//!
//! Media layout under the root directory:
//!
//! ```text
//! faces/<video_id>/<entity_id>/<frame:06>.pgm   8-bit greyscale crop, any size
//! poses/<video_id>/<entity_id>.txt              one line per manifest row
//! audio/<video_id>.wav                          mono 16-bit PCM at 16 kHz
//! ```
//!
//! `<frame>` is `round(timestamp · fps)`. A pose line holds `x y confidence`
//! for every joint in COCO order, with `x, y` normalized to the frame like
//! the bounding boxes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use fabulight_core::skeleton::BodyVariant;
use fabulight_core::train::SampleClip;
use fabulight_core::Tensor;
use image::imageops::FilterType;

use crate::audio::{self, AudioClip, HOP, PER_FRAME, WINDOW};
use crate::error::{Error, Result};
use crate::manifest::{Entity, Manifest};

/// Joints in a whole-body COCO pose line; upper-body keeps the first 11.
pub const WHOLE_JOINTS: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadConfig {
    pub face_size: usize,
    /// `None` skips pose files entirely.
    pub body: Option<BodyVariant>,
}

pub fn face_path(root: &Path, video: &str, entity: &str, frame: u64) -> PathBuf {
    root.join("faces").join(video).join(entity).join(format!("{frame:06}.pgm"))
}

pub fn pose_path(root: &Path, video: &str, entity: &str) -> PathBuf {
    root.join("poses").join(video).join(format!("{entity}.txt"))
}

pub fn audio_path(root: &Path, video: &str) -> PathBuf {
    root.join("audio").join(format!("{video}.wav"))
}

/// Greyscale crop resized to `size × size` (bilinear) and scaled to [0, 1].
pub fn load_face(path: &Path, size: usize) -> Result<Vec<f32>> {
    if !path.exists() {
        return Err(Error::io(path)(std::io::ErrorKind::NotFound.into()));
    }
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let n = size as u32;
    let resized = if img.dimensions() == (n, n) {
        img
    } else {
        image::imageops::resize(&img, n, n, FilterType::Triangle)
    };
    Ok(resized.into_raw().into_iter().map(|p| f32::from(p) / 255.0).collect())
}

/// Parses a pose file into `rows × joints` triples of raw `(x, y, confidence)`.
pub fn parse_poses(path: &Path, text: &str, rows: usize) -> Result<Vec<Vec<[f32; 3]>>> {
    let at = |line: usize| format!("{}:{line}", path.display());
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.len() != rows {
        return Err(Error::Validation {
            location: path.display().to_string(),
            message: format!("{} pose lines for {rows} manifest rows", lines.len()),
        });
    }
    let mut out = Vec::with_capacity(rows);
    let mut joints = None;
    for (line, l) in lines {
        let values = l
            .split_whitespace()
            .map(|v| v.parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                location: at(line),
                message: e.to_string(),
            })?;
        if values.len() % 3 != 0 || values.is_empty() {
            return Err(Error::Parse {
                location: at(line),
                message: format!("{} values is not a whole number of joint triples", values.len()),
            });
        }
        let j = values.len() / 3;
        if *joints.get_or_insert(j) != j {
            return Err(Error::Parse {
                location: at(line),
                message: format!("{j} joints where earlier lines have {}", joints.unwrap_or(0)),
            });
        }
        let triples: Vec<[f32; 3]> = values.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        if let Some(t) = triples.iter().find(|t| !t.iter().all(|v| v.is_finite()) || !(0.0..=1.0).contains(&t[2])) {
            return Err(Error::Validation {
                location: at(line),
                message: format!("joint {t:?} is not finite or has confidence outside [0, 1]"),
            });
        }
        out.push(triples);
    }
    Ok(out)
}

/// `[3, V, T]`: joints mapped into the body box and clamped to [0, 1],
/// confidence passed through, undetected joints (confidence 0) as zeros.
fn pose_tensor(entity: &Entity<'_>, raw: &[Vec<[f32; 3]>], variant: BodyVariant, path: &Path) -> Result<Tensor<f32>> {
    let v = variant.joints();
    let have = raw.first().map_or(0, Vec::len);
    if have != v && !(have == WHOLE_JOINTS && v < WHOLE_JOINTS) {
        return Err(fabulight_core::Error::Data(format!(
            "{}: {have} joints per line, the {} body needs {v}",
            path.display(),
            variant.name()
        ))
        .into());
    }
    let t = raw.len();
    let mut out = Tensor::zeros(&[3, v, t]);
    for (f, (joints, row)) in raw.iter().zip(&entity.rows).enumerate() {
        let b = row.body;
        for (j, &[x, y, c]) in joints.iter().take(v).enumerate() {
            if c == 0.0 {
                continue;
            }
            let nx = ((f64::from(x) - b.x1) / (b.x2 - b.x1)).clamp(0.0, 1.0);
            let ny = ((f64::from(y) - b.y1) / (b.y2 - b.y1)).clamp(0.0, 1.0);
            out.set(&[0, j, f], nx as f32);
            out.set(&[1, j, f], ny as f32);
            out.set(&[2, j, f], c);
        }
    }
    Ok(out)
}

/// MFCCs of the audio under an entity's frames, aligned to four per frame.
///
/// The segment runs from the first row's time for `T / fps` seconds plus
/// one window overhang, so a full track yields exactly `4T` vectors.
pub fn entity_mfcc(clip: &AudioClip, entity: &Entity<'_>) -> Result<Tensor<f32>> {
    let t = entity.rows.len();
    let first = entity.rows[0];
    let sr = f64::from(clip.sample_rate);
    let start = ((first.timestamp * sr).round() as usize).min(clip.samples.len());
    let span = (t as f64 / first.fps * sr).round() as usize + (WINDOW - HOP);
    let end = (start + span).min(clip.samples.len());
    let segment = AudioClip {
        samples: clip.samples[start..end].to_vec(),
        sample_rate: clip.sample_rate,
    };
    let mfcc = audio::compute_mfcc(&segment).map_err(|e| match e {
        Error::Audio(m) => Error::Audio(format!("{}: {m}", entity.key())),
        e => e,
    })?;
    Ok(audio::align_to_frames(&mfcc, t).to_tensor())
}

/// Loads one entity. `audio` is the decoded track of its video.
pub fn load_clip(entity: &Entity<'_>, root: &Path, audio: &AudioClip, cfg: &LoadConfig) -> Result<SampleClip<f32>> {
    let t = entity.rows.len();
    let n = cfg.face_size;
    let mut faces = Tensor::zeros(&[1, n, n, t]);
    for (f, row) in entity.rows.iter().enumerate() {
        let px = load_face(&face_path(root, entity.video_id, entity.entity_id, row.frame_index()), n)?;
        // time is the innermost axis
        for (i, &p) in px.iter().enumerate() {
            faces.data_mut()[i * t + f] = p;
        }
    }
    let mfcc = entity_mfcc(audio, entity)?;
    debug_assert_eq!(mfcc.shape()[2], PER_FRAME * t);
    let poses = match cfg.body {
        Some(variant) => {
            let path = pose_path(root, entity.video_id, entity.entity_id);
            let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
            let raw = parse_poses(&path, &text, t)?;
            Some(pose_tensor(entity, &raw, variant, &path)?)
        }
        None => None,
    };
    Ok(SampleClip {
        video_id: entity.video_id.to_string(),
        entity_id: entity.entity_id.to_string(),
        timestamps: entity.rows.iter().map(|r| r.timestamp).collect(),
        faces,
        mfcc,
        poses,
        labels: entity.rows.iter().map(|r| r.label).collect(),
        category: entity.rows[0].category.clone(),
    })
}

/// Every entity of `manifest`, in order of first appearance. Each video's
/// audio is decoded once.
pub fn load_dataset(manifest: &Manifest, root: &Path, cfg: &LoadConfig) -> Result<Vec<SampleClip<f32>>> {
    let mut tracks: HashMap<String, AudioClip> = HashMap::new();
    let mut clips = Vec::new();
    for entity in manifest.entities() {
        if !tracks.contains_key(entity.video_id) {
            let track = audio::read_wav(&audio_path(root, entity.video_id))?;
            tracks.insert(entity.video_id.to_string(), track);
        }
        clips.push(load_clip(&entity, root, &tracks[entity.video_id], cfg)?);
    }
    Ok(clips)
}
