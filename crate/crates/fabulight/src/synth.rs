//! Seeded synthetic dataset with learnable audio, face and pose cues.
//!
//! Every entity is alone in its own video. Labels come in runs of 4 to 12
//! frames. While an entity speaks, its audio carries a harmonic tone burst,
//! the lower third of its face crop holds a bright patch that flickers as
//! the mouth opens and closes, and its elbows and wrists swing periodically.
//! Silent frames carry low-level audio noise, a dark closed mouth and joint
//! jitter. Some silent runs also carry off-screen speech: a tone burst
//! that is indistinguishable in the audio yet has no visual or pose
//! counterpart, so audio alone cannot reach a perfect ranking.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{write_wav, AudioClip, HOP, SAMPLE_RATE, WINDOW};
use crate::clip::{audio_path, face_path, pose_path, WHOLE_JOINTS};
use crate::error::{Error, Result};
use crate::manifest::{write_manifest, BBox, ManifestRow};

pub const FPS: f64 = 25.0;
pub const SAMPLES_PER_FRAME: usize = 640;
pub const MANIFEST: &str = "manifest.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub entities: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub seed: u64,
    /// Side of the stored face crops; loading resizes them.
    pub crop_size: usize,
    /// Fraction of silent runs overlaid with off-screen speech.
    pub offscreen_rate: f64,
    /// Replace every face crop with uniform noise.
    pub corrupt_faces: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            entities: 60,
            min_frames: 20,
            max_frames: 60,
            seed: 0,
            crop_size: 48,
            offscreen_rate: 0.1,
            corrupt_faces: false,
        }
    }
}

/// Whole-body COCO joints, standing, relative to the body box.
const STANDING: [(f64, f64); WHOLE_JOINTS] = [
    (0.50, 0.08),
    (0.46, 0.06),
    (0.54, 0.06),
    (0.42, 0.08),
    (0.58, 0.08),
    (0.35, 0.22),
    (0.65, 0.22),
    (0.30, 0.38),
    (0.70, 0.38),
    (0.32, 0.52),
    (0.68, 0.52),
    (0.42, 0.55),
    (0.58, 0.55),
    (0.42, 0.75),
    (0.58, 0.75),
    (0.42, 0.95),
    (0.58, 0.95),
];

/// Elbows and wrists, which gesture while speaking.
const GESTURE: [usize; 4] = [7, 8, 9, 10];

struct Track {
    labels: Vec<u8>,
    /// Frames whose audio holds speech, on- or off-screen.
    voiced: Vec<bool>,
}

fn label_track(r: &mut ChaCha8Rng, frames: usize, offscreen_rate: f64) -> Track {
    let mut labels = Vec::with_capacity(frames);
    let mut voiced = Vec::with_capacity(frames);
    let mut speaking = r.gen_bool(0.5);
    while labels.len() < frames {
        let run = r.gen_range(4..=12).min(frames - labels.len());
        let offscreen = !speaking && r.gen_bool(offscreen_rate);
        for _ in 0..run {
            labels.push(u8::from(speaking));
            voiced.push(speaking || offscreen);
        }
        speaking = !speaking;
    }
    Track { labels, voiced }
}

fn audio_track(r: &mut ChaCha8Rng, voiced: &[bool]) -> Vec<f32> {
    let frames = voiced.len();
    let total = frames * SAMPLES_PER_FRAME + (WINDOW - HOP);
    let mut samples = Vec::with_capacity(total);
    let sr = f64::from(SAMPLE_RATE);
    let mut f0 = r.gen_range(110.0..260.0);
    let mut phase = 0.0f64;
    for f in 0..frames {
        if f > 0 && voiced[f] && !voiced[f - 1] {
            f0 = r.gen_range(110.0..260.0);
        }
        let gain = if voiced[f] { r.gen_range(0.15..0.35) } else { 0.0 };
        for _ in 0..SAMPLES_PER_FRAME {
            phase += 2.0 * PI * f0 / sr;
            let tone = phase.sin() + 0.5 * (2.0 * phase).sin() + 0.25 * (3.0 * phase).sin();
            samples.push((gain * tone / 1.75 + r.gen_range(-0.01..0.01)) as f32);
        }
    }
    while samples.len() < total {
        samples.push(r.gen_range(-0.01f32..0.01));
    }
    samples
}

fn face_crop(r: &mut ChaCha8Rng, n: usize, speaking: bool, tone: f64, corrupt: bool) -> Vec<u8> {
    if corrupt {
        return (0..n * n).map(|_| r.gen::<u8>()).collect();
    }
    let (dx, dy) = (r.gen_range(-1i64..=1) as f64, r.gen_range(-1i64..=1) as f64);
    let c = n as f64 / 2.0;
    let mouth = if speaking { r.gen_range(0.65..1.0) } else { r.gen_range(0.2..0.3) };
    let mut px = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = ((x as f64 - c - dx) / (0.38 * n as f64), (y as f64 - c - dy) / (0.46 * n as f64));
            let mut v = if fx * fx + fy * fy <= 1.0 { tone } else { 0.3 };
            let eye = |ex: f64| (fx - ex).powi(2) + (fy + 0.25).powi(2) < 0.02;
            if eye(-0.4) || eye(0.4) {
                v = 0.12;
            }
            // lower third of the crop
            if fy > 0.35 && fy < 0.6 && fx.abs() < 0.45 {
                v = mouth;
            }
            v += r.gen_range(-0.05..0.05);
            px.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    px
}

fn pose_line(r: &mut ChaCha8Rng, body: &BBox, speaking: bool, t: usize, rate: f64, phase: f64) -> String {
    let mut parts = Vec::with_capacity(WHOLE_JOINTS);
    for (j, &(bx, by)) in STANDING.iter().enumerate() {
        let (mut x, mut y) = (bx + r.gen_range(-0.01..0.01), by + r.gen_range(-0.01..0.01));
        if speaking && GESTURE.contains(&j) {
            let reach = if j >= 9 { 0.08 } else { 0.04 };
            let side = if j % 2 == 1 { -1.0 } else { 1.0 };
            x += side * reach * (2.0 * PI * rate * t as f64 + phase).sin();
            y -= reach * (2.0 * PI * rate * t as f64 + phase).cos().abs();
        }
        let conf = if r.gen_bool(0.03) { 0.0 } else { r.gen_range(0.6..1.0) };
        let (fx, fy) = (body.x1 + x * (body.x2 - body.x1), body.y1 + y * (body.y2 - body.y1));
        if conf == 0.0 {
            parts.push("0.00000 0.00000 0.000".to_string());
        } else {
            parts.push(format!("{fx:.5} {fy:.5} {conf:.3}"));
        }
    }
    parts.join(" ")
}

fn write_pgm(path: &Path, px: &[u8], n: usize) -> Result<()> {
    image::save_buffer_with_format(path, px, n as u32, n as u32, image::ExtendedColorType::L8, image::ImageFormat::Pnm)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(Error::io(path))
}

/// Writes `manifest.csv` and the media tree into `out_dir` and returns the
/// manifest rows. Output is a pure function of `cfg`.
pub fn generate_synthetic(out_dir: &Path, cfg: &SynthConfig) -> Result<Vec<ManifestRow>> {
    if cfg.min_frames == 0 || cfg.min_frames > cfg.max_frames {
        return Err(Error::Validation {
            location: "synth".into(),
            message: format!("frame range {}..={} is empty", cfg.min_frames, cfg.max_frames),
        });
    }
    let n = cfg.crop_size;
    let mut rows = Vec::new();
    for e in 0..cfg.entities {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ e as u64);
        let video = format!("synth{:03}", e);
        let entity = "e0";
        let frames = r.gen_range(cfg.min_frames..=cfg.max_frames);
        let track = label_track(&mut r, frames, cfg.offscreen_rate);
        let (x0, y0) = (r.gen_range(0.1..0.4), r.gen_range(0.02..0.1));
        let body = BBox {
            x1: x0,
            y1: y0,
            x2: x0 + r.gen_range(0.3..0.5),
            y2: y0 + r.gen_range(0.75..0.88),
        };
        let face = BBox {
            x1: body.x1 + 0.3 * (body.x2 - body.x1),
            y1: body.y1,
            x2: body.x1 + 0.7 * (body.x2 - body.x1),
            y2: body.y1 + 0.2 * (body.y2 - body.y1),
        };
        let tone = r.gen_range(0.45..0.65);
        let (rate, phase) = (r.gen_range(0.15..0.3), r.gen_range(0.0..2.0 * PI));

        let face_dir = face_path(out_dir, &video, entity, 0);
        create_dir(face_dir.parent().expect("face files live in a directory"))?;
        let mut pose_lines = Vec::with_capacity(frames);
        for t in 0..frames {
            let speaking = track.labels[t] == 1;
            let px = face_crop(&mut r, n, speaking, tone, cfg.corrupt_faces);
            write_pgm(&face_path(out_dir, &video, entity, t as u64), &px, n)?;
            pose_lines.push(pose_line(&mut r, &body, speaking, t, rate, phase));
            rows.push(ManifestRow {
                video_id: video.clone(),
                entity_id: entity.into(),
                timestamp: t as f64 / FPS,
                face,
                body,
                label: track.labels[t],
                category: "synthetic".into(),
                fps: FPS,
            });
        }
        let pose_file = pose_path(out_dir, &video, entity);
        create_dir(pose_file.parent().expect("pose files live in a directory"))?;
        std::fs::write(&pose_file, pose_lines.join("\n") + "\n").map_err(Error::io(&pose_file))?;

        let wav = audio_path(out_dir, &video);
        create_dir(wav.parent().expect("audio files live in a directory"))?;
        let samples = audio_track(&mut r, &track.voiced);
        write_wav(
            &wav,
            &AudioClip {
                samples,
                sample_rate: SAMPLE_RATE,
            },
        )?;
    }
    write_manifest(&out_dir.join(MANIFEST), &rows)?;
    Ok(rows)
}
