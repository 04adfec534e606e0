//! Adaptive Simpson quadrature on a finite interval.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
/// Panel tolerance stops halving after this many splits, so an integrable
/// endpoint singularity costs a bounded number of extra levels instead of
/// chasing a tolerance below rounding.
const TOL_HALVINGS: u32 = 24;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Each panel is accepted once the two-halves estimate agrees with the
/// whole-panel estimate to `15 * tol_panel`; the accepted value carries the
/// Richardson correction. Fails if a panel is still unresolved at depth 48
/// or the integrand produces a non-finite value.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure {
            reason: format!("non-finite interval [{a}, {b}]"),
        });
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let v = refine(&f, a, b, fa, fm, fb, whole, tol, 0)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureFailure {
            reason: "integrand is not finite on the interval".into(),
        })
    }
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::QuadratureFailure {
            reason: format!("non-finite integrand near {m}"),
        });
    }
    // depth >= 2 keeps a lucky agreement on the first split from ending early
    if depth >= 2 && delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureFailure {
            reason: format!("no convergence on [{a}, {b}] at depth {depth}"),
        });
    }
    let child_tol = if depth < TOL_HALVINGS { 0.5 * tol } else { tol };
    Ok(refine(f, a, m, fa, flm, fm, left, child_tol, depth + 1)?
        + refine(f, m, b, fm, frm, fb, right, child_tol, depth + 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 0.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_transcendental() {
        let v = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
    }

    #[test]
    fn sqrt_endpoint_behaviour() {
        // derivative blows up at 0 but the integral is fine
        let v = adaptive_simpson(f64::sqrt, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn non_finite_integrand_fails() {
        assert!(adaptive_simpson(|x| 1.0 / x, 0.0, 1.0, 1e-10).is_err());
    }
}
