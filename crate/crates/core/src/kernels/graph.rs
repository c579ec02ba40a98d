//! Partitioned graph contraction `Z_c = Σ_r (B^r)ᵀ M^r_c`.
//!
//! `M` has `K·C` channels in partition-major order: channel `r·C + c`
//! holds partition `r` of output channel `c`.

use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, MatMut, MatRef};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContractShape {
    pub batch: usize,
    pub partitions: usize,
    pub channels: usize,
    pub joints: usize,
    pub frames: usize,
}

impl ContractShape {
    fn plane(&self) -> usize {
        self.joints * self.frames
    }
}

/// `m: [N, K·C, V, T]`, `b: [K, V, V]` → `[N, C, V, T]`.
pub fn contract_forward<S: Scalar>(m: &[S], b: &[S], sh: &ContractShape) -> Vec<S> {
    let (k, c, v, t) = (sh.partitions, sh.channels, sh.joints, sh.frames);
    let plane = sh.plane();
    let mut z = vec![S::zero(); sh.batch * c * plane];
    for n in 0..sh.batch {
        for r in 0..k {
            let br = &b[r * v * v..(r + 1) * v * v];
            for ch in 0..c {
                let src = &m[((n * k + r) * c + ch) * plane..][..plane];
                let dst = &mut z[(n * c + ch) * plane..][..plane];
                // dst (V×T) += Bᵀ (V×V) · src (V×T)
                gemm(
                    v,
                    v,
                    t,
                    S::one(),
                    MatRef::rows_t(br, v),
                    MatRef::rows(src, t),
                    S::one(),
                    MatMut::rows(dst, t),
                );
            }
        }
    }
    z
}

/// Returns `(gm, gb)` given `gz: [N, C, V, T]`.
pub fn contract_backward<S: Scalar>(m: &[S], b: &[S], sh: &ContractShape, gz: &[S], need_gm: bool) -> (Option<Vec<S>>, Vec<S>) {
    let (k, c, v, t) = (sh.partitions, sh.channels, sh.joints, sh.frames);
    let plane = sh.plane();
    let mut gb = vec![S::zero(); k * v * v];
    let mut gm = need_gm.then(|| vec![S::zero(); m.len()]);
    for n in 0..sh.batch {
        for r in 0..k {
            let br = &b[r * v * v..(r + 1) * v * v];
            let gbr = &mut gb[r * v * v..(r + 1) * v * v];
            for ch in 0..c {
                let src = &m[((n * k + r) * c + ch) * plane..][..plane];
                let g = &gz[(n * c + ch) * plane..][..plane];
                // gB[i,j] += Σ_t M[i,t] gZ[j,t]
                gemm(
                    v,
                    t,
                    v,
                    S::one(),
                    MatRef::rows(src, t),
                    MatRef::rows_t(g, t),
                    S::one(),
                    MatMut::rows(gbr, v),
                );
                if let Some(gm) = gm.as_mut() {
                    let dst = &mut gm[((n * k + r) * c + ch) * plane..][..plane];
                    // gM (V×T) = B (V×V) · gZ (V×T)
                    gemm(
                        v,
                        v,
                        t,
                        S::one(),
                        MatRef::rows(br, v),
                        MatRef::rows(g, t),
                        S::zero(),
                        MatMut::rows(dst, t),
                    );
                }
            }
        }
    }
    (gm, gb)
}
