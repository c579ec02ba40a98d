//! Single-direction gated recurrent unit over `[N, T, D]` sequences.
//!
//! Gate order in the stacked weights is (reset, update, candidate):
//!
//! ```text
//! r  = σ(W_r x + b_ir + U_r h + b_hr)
//! z  = σ(W_z x + b_iz + U_z h + b_hz)
//! h~ = tanh(W_n x + b_in + U_n (r ⊙ h) + b_hn)
//! h' = (1 - z) ⊙ h + z ⊙ h~
//! ```

use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, linear_backward, linear_forward, MatMut, MatRef};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruShape {
    pub batch: usize,
    pub steps: usize,
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
}

/// Borrowed gate parameters: `w_ih [3H×D]`, `w_hh [3H×H]`, `b_ih [3H]`, `b_hh [3H]`.
#[derive(Clone, Copy)]
pub struct GruWeights<'a, S> {
    pub w_ih: &'a [S],
    pub w_hh: &'a [S],
    pub b_ih: &'a [S],
    pub b_hh: &'a [S],
}

#[derive(Debug, Clone)]
pub struct GruCache<S> {
    r: Vec<S>,
    z: Vec<S>,
    cand: Vec<S>,
    rh: Vec<S>,
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

impl GruShape {
    fn order(&self) -> impl Iterator<Item = usize> {
        let (t, rev) = (self.steps, self.reverse);
        (0..t).map(move |i| if rev { t - 1 - i } else { i })
    }
}

/// Returns the hidden state sequence `[N, T, H]` and the backward cache.
pub fn gru_forward<S: Scalar>(x: &[S], w: GruWeights<'_, S>, sh: &GruShape) -> (Vec<S>, GruCache<S>) {
    let (n, t, d, h) = (sh.batch, sh.steps, sh.input, sh.hidden);
    let h3 = 3 * h;
    let xi = linear_forward(x, n * t, d, w.w_ih, w.b_ih, h3);
    let mut out = vec![S::zero(); n * t * h];
    let mut cache = GruCache {
        r: vec![S::zero(); n * t * h],
        z: vec![S::zero(); n * t * h],
        cand: vec![S::zero(); n * t * h],
        rh: vec![S::zero(); n * t * h],
    };
    let mut hprev = vec![S::zero(); n * h];
    let mut hh = vec![S::zero(); n * 2 * h];
    let mut an = vec![S::zero(); n * h];
    let mut rh = vec![S::zero(); n * h];
    for step in sh.order() {
        for s in 0..n {
            hh[s * 2 * h..(s + 1) * 2 * h].copy_from_slice(&w.b_hh[..2 * h]);
        }
        gemm(
            n,
            h,
            2 * h,
            S::one(),
            MatRef::rows(&hprev, h),
            MatRef::new(w.w_hh, 0, 1, h),
            S::one(),
            MatMut::rows(&mut hh, 2 * h),
        );
        for s in 0..n {
            let row = (s * t + step) * h3;
            let at = (s * t + step) * h;
            for j in 0..h {
                let r = sigmoid(xi[row + j] + hh[s * 2 * h + j]);
                let z = sigmoid(xi[row + h + j] + hh[s * 2 * h + h + j]);
                cache.r[at + j] = r;
                cache.z[at + j] = z;
                rh[s * h + j] = r * hprev[s * h + j];
                an[s * h + j] = xi[row + 2 * h + j] + w.b_hh[2 * h + j];
            }
        }
        gemm(
            n,
            h,
            h,
            S::one(),
            MatRef::rows(&rh, h),
            MatRef::new(w.w_hh, 2 * h * h, 1, h),
            S::one(),
            MatMut::rows(&mut an, h),
        );
        for s in 0..n {
            let at = (s * t + step) * h;
            for j in 0..h {
                let c = an[s * h + j].tanh();
                let z = cache.z[at + j];
                let hn = (S::one() - z) * hprev[s * h + j] + z * c;
                cache.cand[at + j] = c;
                cache.rh[at + j] = rh[s * h + j];
                out[at + j] = hn;
                hprev[s * h + j] = hn;
            }
        }
    }
    (out, cache)
}

/// Gradients of the GRU parameters and (optionally) its input.
pub struct GruGrads<S> {
    pub gx: Option<Vec<S>>,
    pub w_ih: Vec<S>,
    pub w_hh: Vec<S>,
    pub b_ih: Vec<S>,
    pub b_hh: Vec<S>,
}

pub fn gru_backward<S: Scalar>(
    x: &[S],
    w: GruWeights<'_, S>,
    sh: &GruShape,
    out: &[S],
    cache: &GruCache<S>,
    gout: &[S],
    need_gx: bool,
) -> GruGrads<S> {
    let (n, t, d, h) = (sh.batch, sh.steps, sh.input, sh.hidden);
    let h3 = 3 * h;
    let mut dxi = vec![S::zero(); n * t * h3];
    let mut gw_hh = vec![S::zero(); h3 * h];
    let mut gb_hh = vec![S::zero(); h3];
    let mut dh_next = vec![S::zero(); n * h];
    let mut dn = vec![S::zero(); n * h];
    let mut drz = vec![S::zero(); n * 2 * h];
    let mut drh = vec![S::zero(); n * h];
    let mut hprev = vec![S::zero(); n * h];
    let mut rh = vec![S::zero(); n * h];
    let order: Vec<usize> = sh.order().collect();
    for (i, &step) in order.iter().enumerate().rev() {
        let prev = if i == 0 { None } else { Some(order[i - 1]) };
        for s in 0..n {
            for j in 0..h {
                hprev[s * h + j] = match prev {
                    Some(p) => out[(s * t + p) * h + j],
                    None => S::zero(),
                };
            }
        }
        let mut dh_prev = vec![S::zero(); n * h];
        for s in 0..n {
            let at = (s * t + step) * h;
            for j in 0..h {
                let dh = gout[at + j] + dh_next[s * h + j];
                let (z, c, hp) = (cache.z[at + j], cache.cand[at + j], hprev[s * h + j]);
                // update gate pre-activation
                drz[s * 2 * h + h + j] = dh * (c - hp) * z * (S::one() - z);
                dn[s * h + j] = dh * z * (S::one() - c * c);
                dh_prev[s * h + j] = dh * (S::one() - z);
                rh[s * h + j] = cache.rh[at + j];
            }
        }
        // d(rh) = dn · U_n ; dU_n += dnᵀ · rh
        gemm(
            n,
            h,
            h,
            S::one(),
            MatRef::rows(&dn, h),
            MatRef::new(w.w_hh, 2 * h * h, h, 1),
            S::zero(),
            MatMut::rows(&mut drh, h),
        );
        gemm(
            h,
            n,
            h,
            S::one(),
            MatRef::rows_t(&dn, h),
            MatRef::rows(&rh, h),
            S::one(),
            MatMut::new(&mut gw_hh, 2 * h * h, h, 1),
        );
        for s in 0..n {
            let at = (s * t + step) * h;
            for j in 0..h {
                let r = cache.r[at + j];
                drz[s * 2 * h + j] = drh[s * h + j] * hprev[s * h + j] * r * (S::one() - r);
                dh_prev[s * h + j] += drh[s * h + j] * r;
            }
            let row = (s * t + step) * h3;
            dxi[row..row + 2 * h].copy_from_slice(&drz[s * 2 * h..(s + 1) * 2 * h]);
            dxi[row + 2 * h..row + h3].copy_from_slice(&dn[s * h..(s + 1) * h]);
            for j in 0..2 * h {
                gb_hh[j] += drz[s * 2 * h + j];
            }
            for j in 0..h {
                gb_hh[2 * h + j] += dn[s * h + j];
            }
        }
        // dU_rz += drzᵀ · h_prev ; dh_prev += drz · U_rz
        gemm(
            2 * h,
            n,
            h,
            S::one(),
            MatRef::rows_t(&drz, 2 * h),
            MatRef::rows(&hprev, h),
            S::one(),
            MatMut::new(&mut gw_hh, 0, h, 1),
        );
        gemm(
            n,
            2 * h,
            h,
            S::one(),
            MatRef::rows(&drz, 2 * h),
            MatRef::new(w.w_hh, 0, h, 1),
            S::one(),
            MatMut::rows(&mut dh_prev, h),
        );
        dh_next = dh_prev;
    }
    let (gx, gw_ih, gb_ih) = linear_backward(x, n * t, d, w.w_ih, h3, &dxi, need_gx);
    GruGrads {
        gx,
        w_ih: gw_ih,
        w_hh: gw_hh,
        b_ih: gb_ih,
        b_hh: gb_hh,
    }
}
