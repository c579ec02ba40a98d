//! MFCC front end: 13 cepstral coefficients per 10 ms hop, aligned to four
//! vectors per video frame.

use std::path::Path;

use fabulight_core::Tensor;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// 25 ms at 16 kHz.
pub const WINDOW: usize = 400;
/// 10 ms at 16 kHz.
pub const HOP: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const MEL_FILTERS: usize = 26;
pub const COEFFS: usize = 13;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const LOG_FLOOR: f64 = 1e-30;
pub const PER_FRAME: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

/// Coefficients by time: `coeffs[t]` is one 13-vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mfcc {
    pub coeffs: Vec<[f32; COEFFS]>,
}

impl Mfcc {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `[1, 13, T_a]`, the per-clip layout the audio encoder consumes.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let t = self.coeffs.len();
        Tensor::from_fn(&[1, COEFFS, t], |i| self.coeffs[i % t.max(1)][i / t.max(1)])
    }
}

/// `1 + floor((len − window) / hop)` vectors, zero below one window.
pub fn frame_count(len: usize) -> usize {
    if len < WINDOW {
        0
    } else {
        1 + (len - WINDOW) / HOP
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced in mel from 0 to Nyquist, as rows over
/// the `FFT_SIZE / 2 + 1` spectrum bins.
fn mel_filterbank(sample_rate: u32) -> Vec<Vec<f64>> {
    let sr = f64::from(sample_rate);
    let top = hz_to_mel(sr / 2.0);
    let bins: Vec<usize> = (0..MEL_FILTERS + 2)
        .map(|i| {
            let mel = top * i as f64 / (MEL_FILTERS + 1) as f64;
            ((FFT_SIZE + 1) as f64 * mel_to_hz(mel) / sr).floor() as usize
        })
        .collect();
    (0..MEL_FILTERS)
        .map(|j| {
            let (lo, mid, hi) = (bins[j], bins[j + 1], bins[j + 2]);
            let mut row = vec![0.0; FFT_SIZE / 2 + 1];
            for (i, w) in row.iter_mut().enumerate().take(mid).skip(lo) {
                *w = (i - lo) as f64 / (mid - lo) as f64;
            }
            for (i, w) in row.iter_mut().enumerate().take(hi).skip(mid) {
                *w = (hi - i) as f64 / (hi - mid) as f64;
            }
            row
        })
        .collect()
}

/// Pre-emphasis, Hamming-windowed power spectra, log mel energies and an
/// orthonormal DCT-II truncated to 13 coefficients.
pub fn compute_mfcc(clip: &AudioClip) -> Result<Mfcc> {
    if clip.sample_rate != SAMPLE_RATE {
        return Err(Error::Audio(format!(
            "sample rate {} Hz is not supported (expected {SAMPLE_RATE} Hz)",
            clip.sample_rate
        )));
    }
    if let Some(i) = clip.samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::Audio(format!("sample {i} is not finite")));
    }
    let n = frame_count(clip.samples.len());
    if n == 0 {
        return Err(Error::Audio(format!(
            "{} samples is shorter than one {WINDOW}-sample window",
            clip.samples.len()
        )));
    }
    let x: Vec<f64> = clip.samples.iter().map(|&s| f64::from(s)).collect();
    let emphasized: Vec<f64> = (0..x.len())
        .map(|i| if i == 0 { x[0] } else { x[i] - PRE_EMPHASIS * x[i - 1] })
        .collect();
    let hamming: Vec<f64> = (0..WINDOW)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (WINDOW - 1) as f64).cos())
        .collect();
    let bank = mel_filterbank(clip.sample_rate);
    let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    let mut coeffs = Vec::with_capacity(n);
    for f in 0..n {
        let frame = &emphasized[f * HOP..f * HOP + WINDOW];
        for (k, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(if k < WINDOW { frame[k] * hamming[k] } else { 0.0 }, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..=FFT_SIZE / 2].iter().map(|c| c.norm_sqr() / FFT_SIZE as f64).collect();
        let log_mel: Vec<f64> = bank
            .iter()
            .map(|row| row.iter().zip(&power).map(|(w, p)| w * p).sum::<f64>().max(LOG_FLOOR).ln())
            .collect();
        let m = MEL_FILTERS as f64;
        let mut v = [0f32; COEFFS];
        for (k, out) in v.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            let s: f64 = log_mel
                .iter()
                .enumerate()
                .map(|(j, e)| e * (std::f64::consts::PI * k as f64 * (2 * j + 1) as f64 / (2.0 * m)).cos())
                .sum();
            *out = (scale * s) as f32;
        }
        coeffs.push(v);
    }
    Ok(Mfcc { coeffs })
}

/// Pads with zero vectors or truncates at the end to exactly `4 · frames` vectors.
pub fn align_to_frames(mfcc: &Mfcc, frames: usize) -> Mfcc {
    let mut coeffs = mfcc.coeffs.clone();
    coeffs.resize(PER_FRAME * frames, [0.0; COEFFS]);
    Mfcc { coeffs }
}

/// Reads a mono 16-bit PCM WAV file, scaling samples into [-1, 1).
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Audio(format!(
            "{}: expected mono 16-bit PCM, found {} channel(s) at {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::Audio(format!(
            "{}: sample rate {} Hz is not supported (expected {SAMPLE_RATE} Hz; resample first)",
            path.display(),
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f32::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Writes samples in [-1, 1] as mono 16-bit PCM, clipping out-of-range values.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &clip.samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}
