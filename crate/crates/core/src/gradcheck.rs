//! Central finite-difference gradient checker.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::Scalar;

/// Relative error `|a − c| / max(|a|, |c|, 1e-12)` between an analytic
/// derivative and its central difference.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Per-coordinate outcome of a check.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Compares `analytic[i]` with `(f(θ + h eᵢ) − f(θ − h eᵢ)) / 2h` for each
/// `i` in `coords` and returns every probe.
pub fn probe_gradient<S: Scalar>(
    mut f: impl FnMut(&[S]) -> Result<S>,
    params: &[S],
    analytic: &[S],
    step: S,
    coords: &[usize],
) -> Result<Vec<Probe>> {
    let h = step.f64();
    if S::NAME == "f64" && !(1e-7..=1e-3).contains(&h) {
        bail!(Parameter, "step {h} outside [1e-7, 1e-3]");
    }
    if !(h > 0.0) {
        bail!(Parameter, "step must be positive");
    }
    if analytic.len() != params.len() {
        bail!(Dimension, "{} analytic entries for {} parameters", analytic.len(), params.len());
    }
    let mut theta = params.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        if i >= theta.len() {
            bail!(Dimension, "coordinate {i} out of range");
        }
        let orig = theta[i];
        theta[i] = orig + step;
        let up = f(&theta)?;
        theta[i] = orig - step;
        let down = f(&theta)?;
        theta[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            bail!(Numeric, "non-finite objective while probing coordinate {i}");
        }
        let numeric = (up.f64() - down.f64()) / (2.0 * h);
        let a = analytic[i].f64();
        if !a.is_finite() {
            bail!(Numeric, "non-finite analytic gradient at coordinate {i}");
        }
        out.push(Probe {
            index: i,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
        });
    }
    Ok(out)
}

/// Maximum relative error over `coords`; see [`probe_gradient`].
pub fn finite_diff_check<S: Scalar>(
    f: impl FnMut(&[S]) -> Result<S>,
    params: &[S],
    analytic: &[S],
    step: S,
    coords: &[usize],
) -> Result<f64> {
    let probes = probe_gradient(f, params, analytic, step, coords)?;
    Ok(probes.iter().map(|p| p.rel_error).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn quadratic_is_exact() {
        let theta = vec![0.3f64, -1.2, 2.5];
        let grad: Vec<f64> = theta.iter().map(|&x| 3.0 * x).collect();
        let f = |p: &[f64]| Ok(p.iter().map(|&x| 1.5 * x * x).sum());
        assert!(finite_diff_check(f, &theta, &grad, 1e-4, &all(3)).unwrap() <= 1e-9);
    }

    #[test]
    fn relu_away_from_kink() {
        let h = 1e-5;
        let theta = vec![0.5f64, -0.7, 1e-3, -2.0];
        assert!(theta.iter().all(|x: &f64| x.abs() >= 10.0 * h));
        let grad: Vec<f64> = theta.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
        let f = |p: &[f64]| Ok(p.iter().map(|&x| x.max(0.0)).sum());
        assert!(finite_diff_check(f, &theta, &grad, h, &all(4)).unwrap() <= 1e-6);
    }

    #[test]
    fn doubled_gradient_is_caught() {
        let theta = vec![0.4f64, 1.1];
        let grad: Vec<f64> = theta.iter().map(|&x| 2.0 * (2.0 * x)).collect();
        let f = |p: &[f64]| Ok(p.iter().map(|&x| x * x).sum());
        let e = finite_diff_check(f, &theta, &grad, 1e-5, &all(2)).unwrap();
        assert!((e - 0.5).abs() < 1e-6, "{e}");
    }

    #[test]
    fn rejects_bad_steps_and_non_finite() {
        let f = |p: &[f64]| Ok(p[0]);
        assert!(finite_diff_check(f, &[1.0], &[1.0], 1e-2, &[0]).is_err());
        let g = |p: &[f64]| Ok(p[0].ln());
        assert!(matches!(
            finite_diff_check(g, &[0.0], &[1.0], 1e-5, &[0]),
            Err(crate::Error::Numeric(_))
        ));
    }
}
