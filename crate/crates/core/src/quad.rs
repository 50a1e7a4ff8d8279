//! Adaptive composite Simpson quadrature.

use crate::{Error, Result};

/// Default absolute tolerance for the thermodynamic integrals.
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Intervals are halved until the Richardson estimate `|S₂ − S₁| / 15`
/// falls under the local share of the tolerance. Fails with
/// [`Error::Numeric`] when the recursion bottoms out or `f` returns a
/// non-finite value.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Domain(format!("quadrature tolerance must be positive, got {tol}")));
    }
    if a == b {
        return Ok(0.0);
    }
    // Seed with a few panels so periodic integrands cannot fool the first estimate.
    const PANELS: usize = 8;
    let width = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let lo = a + width * i as f64;
        let hi = if i + 1 == PANELS { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (eval(&f, lo)?, eval(&f, mid)?, eval(&f, hi)?);
        let whole = simpson(lo, hi, flo, fmid, fhi);
        total += refine(&f, lo, hi, flo, fmid, fhi, whole, tol / PANELS as f64, MAX_DEPTH)?;
    }
    Ok(total)
}

fn eval<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("integrand is not finite at x = {x}")))
    }
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(f, lm)?;
    let frm = eval(f, rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numeric(format!(
            "adaptive Simpson did not converge on [{a}, {b}] (estimate change {delta:e})"
        )));
    }
    Ok(refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}
