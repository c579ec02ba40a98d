//! Forward and backward kernels over flat row-major buffers.
//!
//! These carry no graph bookkeeping; [`crate::autograd`] wires them into
//! the tape and [`crate::ops`] exposes single-sample convenience forms.

pub mod conv;
pub mod graph;
pub mod gru;
pub mod norm;
pub mod pool;

use crate::Scalar;

/// Strided read-only matrix view.
#[derive(Clone, Copy)]
pub struct MatRef<'a, S> {
    pub data: &'a [S],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, S> MatRef<'a, S> {
    pub fn new(data: &'a [S], offset: usize, rs: usize, cs: usize) -> Self {
        Self { data, offset, rs, cs }
    }

    /// Contiguous row-major matrix with `cols` columns.
    pub fn rows(data: &'a [S], cols: usize) -> Self {
        Self::new(data, 0, cols, 1)
    }

    /// Transposed view of a contiguous row-major matrix with `cols` columns.
    pub fn rows_t(data: &'a [S], cols: usize) -> Self {
        Self::new(data, 0, 1, cols)
    }

    fn check(&self, r: usize, c: usize) {
        if r == 0 || c == 0 {
            return;
        }
        let last = self.offset + (r - 1) * self.rs + (c - 1) * self.cs;
        assert!(last < self.data.len(), "matrix view out of bounds");
    }
}

/// Strided mutable matrix view.
pub struct MatMut<'a, S> {
    pub data: &'a mut [S],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, S> MatMut<'a, S> {
    pub fn new(data: &'a mut [S], offset: usize, rs: usize, cs: usize) -> Self {
        Self { data, offset, rs, cs }
    }

    pub fn rows(data: &'a mut [S], cols: usize) -> Self {
        Self::new(data, 0, cols, 1)
    }
}

/// `c = alpha * a(m×k) * b(k×n) + beta * c(m×n)`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: S,
    a: MatRef<'_, S>,
    b: MatRef<'_, S>,
    beta: S,
    c: MatMut<'_, S>,
) {
    if m == 0 || n == 0 {
        return;
    }
    a.check(m, k);
    b.check(k, n);
    let last = c.offset + (m - 1) * c.rs + (n - 1) * c.cs;
    assert!(last < c.data.len(), "output view out of bounds");
    // SAFETY: every addressed element was bounds-checked above and `c`
    // is exclusively borrowed.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// `out[m×o] = x[m×h] · wᵀ + bias`, with `w` stored `o×h`.
pub fn linear_forward<S: Scalar>(x: &[S], m: usize, h: usize, w: &[S], bias: &[S], o: usize) -> alloc::vec::Vec<S> {
    let mut out = alloc::vec::Vec::with_capacity(m * o);
    for _ in 0..m {
        out.extend_from_slice(&bias[..o]);
    }
    gemm(
        m,
        h,
        o,
        S::one(),
        MatRef::rows(x, h),
        MatRef::rows_t(w, h),
        S::one(),
        MatMut::rows(&mut out, o),
    );
    out
}

/// Gradients of [`linear_forward`]: returns `(gx, gw, gb)`.
pub fn linear_backward<S: Scalar>(
    x: &[S],
    m: usize,
    h: usize,
    w: &[S],
    o: usize,
    gout: &[S],
    need_gx: bool,
) -> (Option<alloc::vec::Vec<S>>, alloc::vec::Vec<S>, alloc::vec::Vec<S>) {
    let mut gw = alloc::vec![S::zero(); o * h];
    gemm(
        o,
        m,
        h,
        S::one(),
        MatRef::rows_t(gout, o),
        MatRef::rows(x, h),
        S::zero(),
        MatMut::rows(&mut gw, h),
    );
    let mut gb = alloc::vec![S::zero(); o];
    for row in gout.chunks_exact(o) {
        gb.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
    }
    let gx = need_gx.then(|| {
        let mut gx = alloc::vec![S::zero(); m * h];
        gemm(
            m,
            o,
            h,
            S::one(),
            MatRef::rows(gout, o),
            MatRef::rows(w, h),
            S::zero(),
            MatMut::rows(&mut gx, h),
        );
        gx
    });
    (gx, gw, gb)
}
