use alloc::vec;
use alloc::vec::Vec;

use super::conv::ConvGeom;
use crate::error::{bail, Result};
use crate::Scalar;

/// Windowed max over each `[D0, D1, D2]` plane of `planes` planes.
/// Padded positions never win. Returns values and flat in-plane argmax.
pub fn max_pool_forward<S: Scalar>(
    x: &[S],
    planes: usize,
    dims: [usize; 3],
    g: &ConvGeom,
) -> Result<(Vec<S>, Vec<u32>, [usize; 3])> {
    for a in 0..3 {
        if g.padding[a] >= g.kernel[a] && g.kernel[a] > 1 {
            bail!(Config, "pool padding must be smaller than the kernel");
        }
    }
    let od = g.out_dims(dims)?;
    let pin = dims[0] * dims[1] * dims[2];
    let pout = od[0] * od[1] * od[2];
    if x.len() != planes * pin {
        bail!(Dimension, "pool input length mismatch");
    }
    let mut out = vec![S::zero(); planes * pout];
    let mut arg = vec![0u32; planes * pout];
    let window = |o: usize, a: usize| {
        let start = (o * g.stride[a]) as isize - g.padding[a] as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + g.kernel[a] as isize) as usize).min(dims[a]);
        lo..hi
    };
    for p in 0..planes {
        let xp = &x[p * pin..(p + 1) * pin];
        for o0 in 0..od[0] {
            for o1 in 0..od[1] {
                for o2 in 0..od[2] {
                    let mut best = S::neg_infinity();
                    let mut best_i = 0usize;
                    for i0 in window(o0, 0) {
                        for i1 in window(o1, 1) {
                            for i2 in window(o2, 2) {
                                let i = (i0 * dims[1] + i1) * dims[2] + i2;
                                if xp[i] > best || xp[i].is_nan() {
                                    best = xp[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    let o = p * pout + (o0 * od[1] + o1) * od[2] + o2;
                    out[o] = best;
                    arg[o] = best_i as u32;
                }
            }
        }
    }
    Ok((out, arg, od))
}

/// Routes each output gradient to its argmax position.
pub fn max_pool_backward<S: Scalar>(gout: &[S], arg: &[u32], planes: usize, pin: usize) -> Vec<S> {
    let pout = gout.len() / planes.max(1);
    let mut gx = vec![S::zero(); planes * pin];
    for p in 0..planes {
        for o in 0..pout {
            gx[p * pin + arg[p * pout + o] as usize] += gout[p * pout + o];
        }
    }
    gx
}

/// Reduces the leading `reduce` positions of each `[reduce, keep]` plane
/// to `[keep]` by maximum; returns the winning reduce index per output.
pub fn reduce_max_forward<S: Scalar>(x: &[S], planes: usize, reduce: usize, keep: usize) -> (Vec<S>, Vec<u32>) {
    let mut out = vec![S::neg_infinity(); planes * keep];
    let mut arg = vec![0u32; planes * keep];
    for p in 0..planes {
        for r in 0..reduce {
            let row = &x[(p * reduce + r) * keep..(p * reduce + r + 1) * keep];
            for (k, &v) in row.iter().enumerate() {
                let o = p * keep + k;
                if v > out[o] || v.is_nan() {
                    out[o] = v;
                    arg[o] = r as u32;
                }
            }
        }
    }
    (out, arg)
}

pub fn reduce_max_backward<S: Scalar>(gout: &[S], arg: &[u32], planes: usize, reduce: usize, keep: usize) -> Vec<S> {
    let mut gx = vec![S::zero(); planes * reduce * keep];
    for p in 0..planes {
        for k in 0..keep {
            let o = p * keep + k;
            gx[(p * reduce + arg[o] as usize) * keep + k] += gout[o];
        }
    }
    gx
}

/// Mean over the leading `reduce` positions of each `[reduce, keep]` plane.
pub fn reduce_mean_forward<S: Scalar>(x: &[S], planes: usize, reduce: usize, keep: usize) -> Vec<S> {
    let scale = S::one() / S::of(reduce as f64);
    let mut out = vec![S::zero(); planes * keep];
    for p in 0..planes {
        let o = &mut out[p * keep..(p + 1) * keep];
        for r in 0..reduce {
            let row = &x[(p * reduce + r) * keep..(p * reduce + r + 1) * keep];
            o.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
        }
        o.iter_mut().for_each(|v| *v *= scale);
    }
    out
}

pub fn reduce_mean_backward<S: Scalar>(gout: &[S], planes: usize, reduce: usize, keep: usize) -> Vec<S> {
    let scale = S::one() / S::of(reduce as f64);
    let mut gx = vec![S::zero(); planes * reduce * keep];
    for p in 0..planes {
        for r in 0..reduce {
            let row = &mut gx[(p * reduce + r) * keep..(p * reduce + r + 1) * keep];
            row.iter_mut()
                .zip(&gout[p * keep..(p + 1) * keep])
                .for_each(|(a, &g)| *a = g * scale);
        }
    }
    gx
}
