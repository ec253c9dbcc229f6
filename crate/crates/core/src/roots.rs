//! Bracketed scalar root finding and minimization.

use crate::error::{Error, Result};

/// Finds a root of `f` in `[a, b]` given a sign change.
///
/// Secant steps are taken when they land inside the bracket and shrink it
/// fast enough; otherwise the step falls back to bisection. Stops when the
/// bracket is narrower than `rel_tol * max(|a|, |b|)` or `f` hits zero.
pub fn bracketed_root<F>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) && f_lo.signum() == f_hi.signum() {
        return Err(Error::NonConvergence(format!(
            "no usable bracket on [{lo}, {hi}]"
        )));
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NonConvergence(format!(
            "no sign change on [{lo}, {hi}]"
        )));
    }

    let mut bisect_next = false;
    for _ in 0..400 {
        let width = hi - lo;
        if width <= rel_tol * lo.abs().max(hi.abs()) || width <= f64::MIN_POSITIVE {
            break;
        }
        let mut x = 0.5 * (lo + hi);
        if !bisect_next && f_lo.is_finite() && f_hi.is_finite() {
            let s = hi - f_hi * (hi - lo) / (f_hi - f_lo);
            let margin = 0.01 * width;
            if s > lo + margin && s < hi - margin {
                x = s;
            }
        }
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        let old_width = width;
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
            f_hi = fx;
        }
        // force a bisection whenever a secant step made poor progress
        bisect_next = !bisect_next && (hi - lo) > 0.5 * old_width;
    }
    Ok(if f_lo.abs() < f_hi.abs() { lo } else { hi })
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
pub fn golden_min<F>(mut f: F, a: f64, b: f64, abs_tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= abs_tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
