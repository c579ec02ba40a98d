use alloc::vec;
use alloc::vec::Vec;

use crate::Scalar;

/// Saved quantities of a batch-norm forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<S> {
    pub xhat: Vec<S>,
    pub inv_std: Vec<S>,
    /// Whether statistics came from the batch (training) or from the
    /// running estimates (inference).
    pub batch_stats: bool,
}

/// Per-channel batch mean and biased variance over `[N, C, P]`.
pub fn channel_stats<S: Scalar>(x: &[S], n: usize, c: usize, p: usize) -> (Vec<S>, Vec<S>) {
    let count = S::of((n * p) as f64);
    let mut mean = vec![S::zero(); c];
    let mut var = vec![S::zero(); c];
    for ch in 0..c {
        let mut acc = S::zero();
        for s in 0..n {
            let row = &x[(s * c + ch) * p..(s * c + ch + 1) * p];
            acc += row.iter().fold(S::zero(), |a, &v| a + v);
        }
        let m = acc / count;
        let mut sq = S::zero();
        for s in 0..n {
            let row = &x[(s * c + ch) * p..(s * c + ch + 1) * p];
            sq += row.iter().fold(S::zero(), |a, &v| a + (v - m) * (v - m));
        }
        mean[ch] = m;
        var[ch] = sq / count;
    }
    (mean, var)
}

/// `y = gamma * (x - mean) / sqrt(var + eps) + beta` per channel.
#[allow(clippy::too_many_arguments)]
pub fn bn_forward<S: Scalar>(
    x: &[S],
    n: usize,
    c: usize,
    p: usize,
    gamma: &[S],
    beta: &[S],
    mean: &[S],
    var: &[S],
    eps: S,
    batch_stats: bool,
) -> (Vec<S>, BnCache<S>) {
    let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
    let mut y = vec![S::zero(); x.len()];
    let mut xhat = vec![S::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * p;
            let (m, is, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for i in base..base + p {
                let h = (x[i] - m) * is;
                xhat[i] = h;
                y[i] = g * h + b;
            }
        }
    }
    (
        y,
        BnCache {
            xhat,
            inv_std,
            batch_stats,
        },
    )
}

/// Returns `(gx, ggamma, gbeta)`.
pub fn bn_backward<S: Scalar>(
    gout: &[S],
    n: usize,
    c: usize,
    p: usize,
    gamma: &[S],
    cache: &BnCache<S>,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let mut gg = vec![S::zero(); c];
    let mut gb = vec![S::zero(); c];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * p;
            for i in base..base + p {
                gg[ch] += gout[i] * cache.xhat[i];
                gb[ch] += gout[i];
            }
        }
    }
    let mut gx = vec![S::zero(); gout.len()];
    let count = S::of((n * p) as f64);
    for ch in 0..c {
        let k = gamma[ch] * cache.inv_std[ch];
        if cache.batch_stats {
            // dx = k/M (M dy - sum dy - xhat sum(dy xhat))
            let (sum_dy, sum_dy_xhat) = (gb[ch], gg[ch]);
            for s in 0..n {
                let base = (s * c + ch) * p;
                for i in base..base + p {
                    gx[i] = k * (gout[i] - sum_dy / count - cache.xhat[i] * sum_dy_xhat / count);
                }
            }
        } else {
            for s in 0..n {
                let base = (s * c + ch) * p;
                for i in base..base + p {
                    gx[i] = k * gout[i];
                }
            }
        }
    }
    (gx, gg, gb)
}
