#![allow(dead_code)]

pub mod gradsuite;
pub mod oracles;

use fabulight_core::model::{Architecture, Batch};
use fabulight_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Random batch with faces in [0, 1], unit-scale MFCCs and poses.
pub fn random_batch(arch: &Architecture, clips: usize, frames: usize, seed: u64) -> Batch<f64> {
    let mut r = rng(seed);
    let n = arch.face_size;
    Batch {
        faces: random_tensor(&[clips, 1, n, n, frames], &mut r, 0.0, 1.0),
        mfcc: random_tensor(&[clips, 1, 13, 1, 4 * frames], &mut r, -1.0, 1.0),
        poses: arch
            .joints()
            .map(|v| random_tensor(&[clips, 3, v, 1, frames], &mut r, 0.0, 1.0)),
    }
}

pub fn random_labels(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| if r.gen_bool(0.5) { 1.0 } else { 0.0 }).collect()
}
