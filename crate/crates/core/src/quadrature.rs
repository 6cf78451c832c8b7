//! Scalar quadrature and a few numerically careful elementary helpers
//! shared by the measure and growth-transform code.

use crate::error::{Error, Result};

/// `(exp(c * l) - 1) / c`, continuous through `c = 0` where it equals `l`.
pub(crate) fn expm1_ratio(c: f64, l: f64) -> f64 {
    if c == 0.0 {
        l
    } else {
        (c * l).exp_m1() / c
    }
}

/// `∫_x^y (1+u)^{-p} du` for `0 <= x <= y`, stable for nearby endpoints.
pub(crate) fn shifted_power_integral(p: f64, x: f64, y: f64) -> f64 {
    let base = 1.0 + x;
    let l = ((y - x) / base).ln_1p();
    base.powf(1.0 - p) * expm1_ratio(1.0 - p, l)
}

const MAX_DEPTH: u32 = 60;

/// Adaptive Simpson quadrature with Richardson correction.
///
/// Each panel is accepted once `|S_2 - S_1| <= 15 tol`, where the
/// tolerance starts at `max(abs_tol, rel_tol * |S_coarse|)` and is halved
/// on each split.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "quadrature bounds must be finite, got [{a}, {b}]"
        )));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = abs_tol.max(rel_tol * whole.abs());
    let value = simpson_step(&f, lo, hi, fa, fm, fb, whole, tol, MAX_DEPTH)
        .ok_or(Error::Quadrature { a: lo, b: hi, depth: MAX_DEPTH })?;
    Ok(sign * value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return None;
    }
    // Panels narrower than a few ulps cannot be refined further.
    let unresolvable = m <= a || m >= b || lm <= a || rm >= b;
    if delta.abs() <= 15.0 * tol || unresolvable {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}
