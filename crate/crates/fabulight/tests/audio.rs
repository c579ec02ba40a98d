use std::f64::consts::PI;

use fabulight::audio::{align_to_frames, compute_mfcc, frame_count, read_wav, write_wav, AudioClip, Mfcc, COEFFS, SAMPLE_RATE};
use fabulight::Error;
use proptest::prelude::*;

fn clip(f: impl Fn(f64) -> f64, n: usize) -> AudioClip {
    AudioClip {
        samples: (0..n).map(|i| f(i as f64) as f32).collect(),
        sample_rate: SAMPLE_RATE,
    }
}

fn sine440() -> AudioClip {
    clip(|n| 0.5 * (2.0 * PI * 440.0 * n / 16000.0).sin(), 1600)
}

fn two_tone() -> AudioClip {
    clip(
        |n| 0.3 * (2.0 * PI * 1000.0 * n / 16000.0).sin() + 0.2 * (2.0 * PI * 3100.0 * n / 16000.0).sin() + 0.05 * n / 1600.0,
        1600,
    )
}

// Frozen output of python_speech_features.mfcc(sig, 16000, winfunc=np.hamming,
// nfft=512, appendEnergy=False) for the same signals. That library pads a
// final partial frame, which this pipeline drops, so it returns 9 rows
// where we return 8; the first eight agree.
const SINE440: [(usize, [f64; 13]); 3] = [
    (0, [-60.259831, 9.050563, 1.239383, -2.979724, -5.548680, -6.445054, -5.513707, -3.347962, -0.565553, 1.892392, 3.397364, 3.531204, 2.494794]),
    (3, [-62.493348, 11.879643, 3.183136, -1.683787, -4.660688, -5.804375, -5.022609, -2.961886, -0.249765, 2.125827, 3.561038, 3.591913, 2.441357]),
    (7, [-73.342340, 21.414286, 2.198302, -0.685393, -5.138176, -5.482116, -5.190420, -2.766505, -0.277976, 2.271116, 3.560843, 3.650696, 2.366726]),
];

const TWO_TONE: [(usize, [f64; 13]); 3] = [
    (0, [-50.441720, -6.226260, -10.210421, -0.882560, -7.613464, 2.948146, 10.547791, -3.078656, -3.110243, -0.142174, -4.081663, 4.444320, 5.784538]),
    (3, [-49.016371, -1.495760, -9.516777, 1.557460, -7.026133, 2.846912, 10.429125, -3.122788, -3.168167, -0.272040, -4.267923, 4.325789, 5.557158]),
    (7, [-48.771116, -1.163353, -9.172711, 1.900489, -6.671713, 3.191870, 10.764244, -2.798583, -2.852741, 0.033170, -3.973763, 4.607283, 5.825229]),
];

fn assert_matches_reference(name: &str, m: &Mfcc, reference: &[(usize, [f64; 13])]) {
    assert_eq!(m.len(), 8, "{name}: frame count");
    for (row, want) in reference {
        for (c, (&got, &want)) in m.coeffs[*row].iter().zip(want).enumerate() {
            let err = (f64::from(got) - want).abs();
            assert!(err <= 1e-3 * want.abs().max(1.0), "{name} row {row} coeff {c}: {got} vs {want}");
        }
    }
}

#[test]
fn mfcc_matches_reference_implementation() {
    assert_matches_reference("sine440", &compute_mfcc(&sine440()).unwrap(), &SINE440);
    assert_matches_reference("two_tone", &compute_mfcc(&two_tone()).unwrap(), &TWO_TONE);
}

#[test]
fn framing_counts() {
    assert_eq!(frame_count(400), 1);
    assert_eq!(frame_count(559), 1);
    assert_eq!(frame_count(560), 2);
    assert_eq!(frame_count(6400), 38);
    let m = compute_mfcc(&clip(|n| (n * 0.01).sin() * 0.1, 6400)).unwrap();
    assert_eq!(m.len(), 38);
    assert_eq!(m.to_tensor().shape(), &[1, COEFFS, 38]);
}

#[test]
fn silence_gives_identical_vectors() {
    let m = compute_mfcc(&clip(|_| 0.0, 3200)).unwrap();
    assert!(m.coeffs.iter().all(|c| c == &m.coeffs[0]));
    assert!(m.coeffs[0].iter().all(|v| v.is_finite()));
}

#[test]
fn tone_and_noise_are_far_apart() {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let noise = AudioClip {
        samples: (0..1600).map(|_| r.gen_range(-0.5f32..0.5)).collect(),
        sample_rate: SAMPLE_RATE,
    };
    let a = compute_mfcc(&sine440()).unwrap();
    let b = compute_mfcc(&noise).unwrap();
    let dist = |x: &[f32; 13], y: &[f32; 13]| x.iter().zip(y).map(|(p, q)| f64::from(p - q).powi(2)).sum::<f64>().sqrt();
    let across = dist(&a.coeffs[3], &b.coeffs[3]);
    let within = dist(&a.coeffs[3], &a.coeffs[4]);
    assert!(across > 10.0 * within, "across {across}, within {within}");
}

#[test]
fn scaling_amplitude_shifts_only_c0() {
    let base = compute_mfcc(&sine440()).unwrap();
    let loud = compute_mfcc(&clip(|n| 2.0 * 0.5 * (2.0 * PI * 440.0 * n / 16000.0).sin(), 1600)).unwrap();
    // ×2 amplitude is ×4 energy in every band, a constant ln 4 per log band;
    // the orthonormal DCT maps a constant onto c0 alone.
    let shift = 26f64.sqrt() * 4f64.ln();
    for (b, l) in base.coeffs.iter().zip(&loud.coeffs) {
        assert!((f64::from(l[0] - b[0]) - shift).abs() < 1e-3 * shift);
        for c in 1..COEFFS {
            assert!((l[c] - b[c]).abs() < 1e-3, "coeff {c}");
        }
    }
}

#[test]
fn bad_input_is_rejected() {
    let short = clip(|_| 0.1, 399);
    assert!(matches!(compute_mfcc(&short), Err(Error::Audio(_))));
    let mut nan = sine440();
    nan.samples[10] = f32::NAN;
    assert!(matches!(compute_mfcc(&nan), Err(Error::Audio(_))));
    let mut slow = sine440();
    slow.sample_rate = 8000;
    assert!(matches!(compute_mfcc(&slow), Err(Error::Audio(_))));
}

#[test]
fn align_examples() {
    let m = |n: usize| Mfcc {
        coeffs: (0..n).map(|i| [i as f32 + 1.0; COEFFS]).collect(),
    };
    let cut = align_to_frames(&m(45), 10);
    assert_eq!(cut.coeffs, m(40).coeffs);
    let padded = align_to_frames(&m(38), 10);
    assert_eq!(padded.len(), 40);
    assert_eq!(&padded.coeffs[..38], &m(38).coeffs[..]);
    assert_eq!(padded.coeffs[38..], [[0.0; COEFFS]; 2]);
    assert_eq!(align_to_frames(&m(40), 10), m(40));
}

proptest! {
    #[test]
    fn align_is_idempotent(n in 0usize..200, frames in 0usize..60) {
        let m = Mfcc { coeffs: (0..n).map(|i| [i as f32; COEFFS]).collect() };
        let once = align_to_frames(&m, frames);
        prop_assert_eq!(once.len(), 4 * frames);
        prop_assert_eq!(align_to_frames(&once, frames), once);
    }
}

#[test]
fn wav_round_trip_and_rate_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.wav");
    let original = sine440();
    write_wav(&path, &original).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.sample_rate, SAMPLE_RATE);
    assert_eq!(back.samples.len(), original.samples.len());
    for (a, b) in original.samples.iter().zip(&back.samples) {
        assert!((a - b).abs() < 1.0 / 16000.0);
    }

    let other = dir.path().join("b.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 44_100,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&other, spec).unwrap();
    for _ in 0..1000 {
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    let err = read_wav(&other).unwrap_err();
    assert!(matches!(err, Error::Audio(_)));
    assert!(err.to_string().contains("44100"), "{err}");
}
