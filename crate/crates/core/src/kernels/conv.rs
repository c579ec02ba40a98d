//! Three-axis convolution over `[N, C, D0, D1, D2]` volumes.
//!
//! Every convolution in the model (face spatial `κ×κ×1`, temporal
//! `1×1×κ`, audio coefficient-axis `κ×1×1`, pointwise merges and graph
//! projections) is an instance of this kernel. Each kernel tap is a
//! gather of the shifted input followed by one GEMM.

use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, MatMut, MatRef};
use crate::error::{bail, Result};
use crate::Scalar;

/// Kernel, stride and zero padding per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeom {
    pub const POINTWISE: Self = Self {
        kernel: [1, 1, 1],
        stride: [1, 1, 1],
        padding: [0, 0, 0],
    };

    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }

    pub fn volume(&self) -> usize {
        self.kernel.iter().product()
    }

    fn is_pointwise(&self) -> bool {
        *self == Self::POINTWISE
    }

    pub fn out_dims(&self, dims: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let (k, s, p) = (self.kernel[a], self.stride[a], self.padding[a]);
            if k == 0 || s == 0 {
                bail!(Config, "kernel and stride must be positive");
            }
            if dims[a] + 2 * p < k {
                bail!(
                    Dimension,
                    "axis {a} of extent {} is shorter than kernel {k} after padding {p}",
                    dims[a]
                );
            }
            out[a] = (dims[a] + 2 * p - k) / s + 1;
        }
        Ok(out)
    }
}

#[inline]
fn prod(d: [usize; 3]) -> usize {
    d[0] * d[1] * d[2]
}

/// Output range `[lo, hi)` along one axis for which `o*s + k - p` is a
/// valid input index.
#[inline]
fn valid_range(out_len: usize, in_len: usize, s: usize, k: usize, p: usize) -> (usize, usize) {
    // o*s + k >= p  and  o*s + k - p < in_len
    let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
    let hi = if in_len + p > k {
        ((in_len + p - k - 1) / s + 1).min(out_len)
    } else {
        0
    };
    (lo.min(hi), hi)
}

struct Tap {
    k: [usize; 3],
    ranges: [(usize, usize); 3],
}

fn tap(g: &ConvGeom, off: usize, dims: [usize; 3], od: [usize; 3]) -> Tap {
    let k = [
        off / (g.kernel[1] * g.kernel[2]),
        (off / g.kernel[2]) % g.kernel[1],
        off % g.kernel[2],
    ];
    let ranges = [0, 1, 2].map(|a| valid_range(od[a], dims[a], g.stride[a], k[a], g.padding[a]));
    Tap { k, ranges }
}

#[inline]
fn src_index(o: usize, s: usize, k: usize, p: usize) -> usize {
    o * s + k - p
}

/// `buf[c, o] = x[c, o*s + k - p]` with zeros outside the input.
fn gather<S: Scalar>(x: &[S], ci: usize, dims: [usize; 3], od: [usize; 3], g: &ConvGeom, t: &Tap, buf: &mut [S]) {
    let (pin, pout) = (prod(dims), prod(od));
    buf[..ci * pout].fill(S::zero());
    let [(l0, h0), (l1, h1), (l2, h2)] = t.ranges;
    if l2 >= h2 {
        return;
    }
    for c in 0..ci {
        let xc = &x[c * pin..(c + 1) * pin];
        let bc = &mut buf[c * pout..(c + 1) * pout];
        for o0 in l0..h0 {
            let i0 = src_index(o0, g.stride[0], t.k[0], g.padding[0]);
            for o1 in l1..h1 {
                let i1 = src_index(o1, g.stride[1], t.k[1], g.padding[1]);
                let ob = (o0 * od[1] + o1) * od[2];
                let ib = (i0 * dims[1] + i1) * dims[2];
                if g.stride[2] == 1 {
                    let i2 = src_index(l2, 1, t.k[2], g.padding[2]);
                    let len = h2 - l2;
                    bc[ob + l2..ob + h2].copy_from_slice(&xc[ib + i2..ib + i2 + len]);
                } else {
                    for o2 in l2..h2 {
                        let i2 = src_index(o2, g.stride[2], t.k[2], g.padding[2]);
                        bc[ob + o2] = xc[ib + i2];
                    }
                }
            }
        }
    }
}

/// Inverse of [`gather`]: `gx[c, o*s + k - p] += buf[c, o]`.
fn scatter_add<S: Scalar>(gx: &mut [S], ci: usize, dims: [usize; 3], od: [usize; 3], g: &ConvGeom, t: &Tap, buf: &[S]) {
    let (pin, pout) = (prod(dims), prod(od));
    let [(l0, h0), (l1, h1), (l2, h2)] = t.ranges;
    if l2 >= h2 {
        return;
    }
    for c in 0..ci {
        let xc = &mut gx[c * pin..(c + 1) * pin];
        let bc = &buf[c * pout..(c + 1) * pout];
        for o0 in l0..h0 {
            let i0 = src_index(o0, g.stride[0], t.k[0], g.padding[0]);
            for o1 in l1..h1 {
                let i1 = src_index(o1, g.stride[1], t.k[1], g.padding[1]);
                let ob = (o0 * od[1] + o1) * od[2];
                let ib = (i0 * dims[1] + i1) * dims[2];
                for o2 in l2..h2 {
                    let i2 = src_index(o2, g.stride[2], t.k[2], g.padding[2]);
                    xc[ib + i2] += bc[ob + o2];
                }
            }
        }
    }
}

/// Shape of a convolution problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub dims: [usize; 3],
    pub geom: ConvGeom,
}

impl ConvShape {
    pub fn out_dims(&self) -> Result<[usize; 3]> {
        self.geom.out_dims(self.dims)
    }

    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.geom.volume()
    }

    fn validate(&self, x: &[impl Copy], w: &[impl Copy]) -> Result<[usize; 3]> {
        let od = self.out_dims()?;
        if x.len() != self.batch * self.c_in * prod(self.dims) {
            bail!(
                Dimension,
                "conv input has {} values, expected {}×{}×{:?}",
                x.len(),
                self.batch,
                self.c_in,
                self.dims
            );
        }
        if w.len() != self.weight_len() {
            bail!(
                Dimension,
                "conv weight has {} values, expected {}×{}×{:?}",
                w.len(),
                self.c_out,
                self.c_in,
                self.geom.kernel
            );
        }
        Ok(od)
    }
}

pub fn conv_forward<S: Scalar>(x: &[S], w: &[S], cs: &ConvShape) -> Result<(Vec<S>, [usize; 3])> {
    let od = cs.validate(x, w)?;
    let (ci, co, g) = (cs.c_in, cs.c_out, &cs.geom);
    let (pin, pout, kvol) = (prod(cs.dims), prod(od), g.volume());
    let mut out = vec![S::zero(); cs.batch * co * pout];
    let pointwise = g.is_pointwise();
    let mut buf = if pointwise { Vec::new() } else { vec![S::zero(); ci * pout] };
    for s in 0..cs.batch {
        let xs = &x[s * ci * pin..(s + 1) * ci * pin];
        let os = &mut out[s * co * pout..(s + 1) * co * pout];
        for off in 0..kvol {
            let src: &[S] = if pointwise {
                xs
            } else {
                let t = tap(g, off, cs.dims, od);
                gather(xs, ci, cs.dims, od, g, &t, &mut buf);
                &buf
            };
            gemm(
                co,
                ci,
                pout,
                S::one(),
                MatRef::new(w, off, ci * kvol, kvol),
                MatRef::rows(src, pout),
                S::one(),
                MatMut::rows(os, pout),
            );
        }
    }
    Ok((out, od))
}

/// Returns `(grad_input, grad_weight)`; the input gradient is skipped
/// unless requested.
pub fn conv_backward<S: Scalar>(
    x: &[S],
    w: &[S],
    cs: &ConvShape,
    gout: &[S],
    need_gx: bool,
) -> Result<(Option<Vec<S>>, Vec<S>)> {
    let od = cs.validate(x, w)?;
    let (ci, co, g) = (cs.c_in, cs.c_out, &cs.geom);
    let (pin, pout, kvol) = (prod(cs.dims), prod(od), g.volume());
    if gout.len() != cs.batch * co * pout {
        bail!(Dimension, "conv output gradient length mismatch");
    }
    let mut gw = vec![S::zero(); w.len()];
    let mut gx = need_gx.then(|| vec![S::zero(); x.len()]);
    let pointwise = g.is_pointwise();
    let mut buf = if pointwise { Vec::new() } else { vec![S::zero(); ci * pout] };
    for s in 0..cs.batch {
        let xs = &x[s * ci * pin..(s + 1) * ci * pin];
        let gs = &gout[s * co * pout..(s + 1) * co * pout];
        for off in 0..kvol {
            let t = tap(g, off, cs.dims, od);
            let src: &[S] = if pointwise {
                xs
            } else {
                gather(xs, ci, cs.dims, od, g, &t, &mut buf);
                &buf
            };
            gemm(
                co,
                pout,
                ci,
                S::one(),
                MatRef::rows(gs, pout),
                MatRef::rows_t(src, pout),
                S::one(),
                MatMut::new(&mut gw, off, ci * kvol, kvol),
            );
            if let Some(gx) = gx.as_mut() {
                let gxs = &mut gx[s * ci * pin..(s + 1) * ci * pin];
                let wt = MatRef::new(w, off, kvol, ci * kvol);
                if pointwise {
                    gemm(ci, co, pout, S::one(), wt, MatRef::rows(gs, pout), S::one(), MatMut::rows(gxs, pout));
                } else {
                    gemm(ci, co, pout, S::one(), wt, MatRef::rows(gs, pout), S::zero(), MatMut::rows(&mut buf, pout));
                    scatter_add(gxs, ci, cs.dims, od, g, &t, &buf);
                }
            }
        }
    }
    Ok((gx, gw))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct summation over the definition.
    fn naive(x: &[f64], w: &[f64], cs: &ConvShape) -> Vec<f64> {
        let od = cs.out_dims().unwrap();
        let g = cs.geom;
        let mut out = vec![0.0; cs.batch * cs.c_out * prod(od)];
        for n in 0..cs.batch {
            for co in 0..cs.c_out {
                for o0 in 0..od[0] {
                    for o1 in 0..od[1] {
                        for o2 in 0..od[2] {
                            let mut acc = 0.0;
                            for ci in 0..cs.c_in {
                                for k0 in 0..g.kernel[0] {
                                    for k1 in 0..g.kernel[1] {
                                        for k2 in 0..g.kernel[2] {
                                            let i = [
                                                (o0 * g.stride[0] + k0) as isize - g.padding[0] as isize,
                                                (o1 * g.stride[1] + k1) as isize - g.padding[1] as isize,
                                                (o2 * g.stride[2] + k2) as isize - g.padding[2] as isize,
                                            ];
                                            if (0..3).any(|a| i[a] < 0 || i[a] >= cs.dims[a] as isize) {
                                                continue;
                                            }
                                            let xi = (((n * cs.c_in + ci) * cs.dims[0] + i[0] as usize) * cs.dims[1]
                                                + i[1] as usize)
                                                * cs.dims[2]
                                                + i[2] as usize;
                                            let wi = (((co * cs.c_in + ci) * g.kernel[0] + k0) * g.kernel[1] + k1)
                                                * g.kernel[2]
                                                + k2;
                                            acc += x[xi] * w[wi];
                                        }
                                    }
                                }
                            }
                            out[(((n * cs.c_out + co) * od[0] + o0) * od[1] + o1) * od[2] + o2] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    fn lcg(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn matches_direct_summation_over_geometries() {
        let geoms = [
            ConvGeom::new([3, 3, 1], [2, 2, 1], [1, 1, 0]),
            ConvGeom::new([5, 5, 1], [1, 1, 1], [2, 2, 0]),
            ConvGeom::new([1, 1, 5], [1, 1, 1], [0, 0, 2]),
            ConvGeom::new([3, 1, 1], [1, 1, 1], [1, 0, 0]),
            ConvGeom::new([3, 2, 3], [2, 1, 2], [1, 0, 1]),
            ConvGeom::POINTWISE,
        ];
        for (i, g) in geoms.iter().enumerate() {
            let cs = ConvShape {
                batch: 2,
                c_in: 3,
                c_out: 4,
                dims: [7, 6, 5],
                geom: *g,
            };
            let x = lcg(2 * 3 * 7 * 6 * 5, i as u64 + 1);
            let w = lcg(cs.weight_len(), i as u64 + 100);
            let (out, _) = conv_forward(&x, &w, &cs).unwrap();
            let want = naive(&x, &w, &cs);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "geometry {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <conv(x), g> = <x, convᵀ(g)> and the weight gradient is linear in x.
        let g = ConvGeom::new([3, 3, 2], [2, 1, 1], [1, 1, 1]);
        let cs = ConvShape {
            batch: 2,
            c_in: 2,
            c_out: 3,
            dims: [5, 4, 3],
            geom: g,
        };
        let x = lcg(2 * 2 * 60, 7);
        let w = lcg(cs.weight_len(), 8);
        let (y, od) = conv_forward(&x, &w, &cs).unwrap();
        let gy = lcg(2 * 3 * prod(od), 9);
        let (gx, gw) = conv_backward(&x, &w, &cs, &gy, true).unwrap();
        let lhs: f64 = y.iter().zip(&gy).map(|(a, b)| a * b).sum();
        let rhs_x: f64 = x.iter().zip(gx.unwrap().iter()).map(|(a, b)| a * b).sum();
        let rhs_w: f64 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_x).abs() < 1e-10);
        assert!((lhs - rhs_w).abs() < 1e-10);
    }

    #[test]
    fn rejects_short_axes_and_bad_lengths() {
        let g = ConvGeom::new([5, 1, 1], [1, 1, 1], [0, 0, 0]);
        assert!(g.out_dims([3, 1, 1]).is_err());
        let cs = ConvShape {
            batch: 1,
            c_in: 2,
            c_out: 1,
            dims: [3, 1, 1],
            geom: ConvGeom::POINTWISE,
        };
        assert!(conv_forward(&[0.0f64; 3], &[0.0; 2], &cs).is_err());
    }
}
