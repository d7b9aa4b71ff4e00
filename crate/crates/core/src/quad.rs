//! Small adaptive-quadrature toolkit used by the population-level variance
//! and weight oracles. Adaptive Simpson with explicit split points is enough
//! here: every integrand we feed it is piecewise smooth with known kinks.

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 40;

/// Adaptive Simpson on [a, b] with an absolute tolerance. Depth exhaustion
/// accepts the local refinement (the leaf error is already below anything
/// resolvable); non-finite integrand values are the only hard failure.
pub fn adaptive_simpson<F>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    let (sign, lo, hi) = if a < b { (1.0, a, b) } else { (-1.0, b, a) };
    let m = 0.5 * (lo + hi);
    let (flo, fm, fhi) = (f(lo), f(m), f(hi));
    if !flo.is_finite() || !fm.is_finite() || !fhi.is_finite() {
        return Err(Error::NonIntegrable(format!(
            "integrand not finite on [{lo}, {hi}]"
        )));
    }
    let whole = simpson(lo, hi, flo, fm, fhi);
    let v = recurse(f, lo, hi, flo, fm, fhi, whole, tol, MAX_DEPTH)?;
    Ok(sign * v)
}

/// Adaptive Simpson with a relative tolerance: a coarse fixed-panel pass
/// estimates the magnitude, which scales the absolute tolerance of the
/// adaptive pass.
pub fn integrate_rel<F>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mag = coarse_abs_mass(f, a, b, 64)?;
    adaptive_simpson(f, a, b, rel_tol * (1.0 + mag))
}

/// Integrate over each segment between the sorted `splits` inside [a, b],
/// with a shared relative tolerance. Use for integrands with known kinks.
pub fn integrate_split<F>(f: &F, a: f64, b: f64, splits: &[f64], rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut knots: Vec<f64> = splits.iter().copied().filter(|s| *s > a && *s < b).collect();
    knots.push(a);
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut mag = 0.0;
    for w in knots.windows(2) {
        mag += coarse_abs_mass(f, w[0], w[1], 16)?;
    }
    let tol = rel_tol * (1.0 + mag) / knots.len().max(1) as f64;
    let mut total = 0.0;
    for w in knots.windows(2) {
        total += adaptive_simpson(f, w[0], w[1], tol)?;
    }
    Ok(total)
}

/// Backwards-compatible absolute-tolerance split integration.
pub fn adaptive_simpson_split<F>(f: &F, a: f64, b: f64, splits: &[f64], tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut knots: Vec<f64> = splits.iter().copied().filter(|s| *s > a && *s < b).collect();
    knots.push(a);
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let seg_tol = tol / knots.len().max(1) as f64;
    let mut total = 0.0;
    for w in knots.windows(2) {
        total += adaptive_simpson(f, w[0], w[1], seg_tol)?;
    }
    Ok(total)
}

/// Trapezoid estimate of `int |f|` used for tolerance scaling.
fn coarse_abs_mass<F>(f: &F, a: f64, b: f64, panels: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for i in 0..=panels {
        let x = a + i as f64 * h;
        let v = f(x).abs();
        if !v.is_finite() {
            return Err(Error::NonIntegrable(format!("integrand not finite at {x}")));
        }
        let w = if i == 0 || i == panels { 0.5 } else { 1.0 };
        acc += w * v;
    }
    Ok(acc * h.abs())
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    if !flm.is_finite() || !frm.is_finite() {
        return Err(Error::NonIntegrable(format!(
            "integrand not finite near [{a}, {b}]"
        )));
    }
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || depth == 0 || lm <= a || rm >= b {
        return Ok(left + right + err / 15.0);
    }
    let lv = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let rv = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(lv + rv)
}

/// Central finite-difference Hessian of a bivariate function.
pub fn fd_hessian2<F>(f: &F, x: f64, y: f64, step: f64) -> [[f64; 2]; 2]
where
    F: Fn(f64, f64) -> f64,
{
    let h = step;
    let fxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
    let fyy = (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h);
    let fxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h))
        / (4.0 * h * h);
    [[fxx, fxy], [fxy, fyy]]
}
