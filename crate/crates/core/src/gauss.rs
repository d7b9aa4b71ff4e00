//! Standard-normal helpers (density, CDF, inverse CDF) shared across modules.

use statrs::distribution::ContinuousCDF;
use statrs::function::erf;

pub const SQRT_2PI: f64 = 2.5066282746310002;

/// Standard normal density.
pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF via erfc; accurate deep into the tails.
pub fn big_phi(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal inverse CDF with one Newton correction.
pub fn big_phi_inv(u: f64) -> f64 {
    let n = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    let x = n.inverse_cdf(u);
    // One Newton step tightens the library approximation to ~1e-15.
    let f = phi(x);
    if f > 0.0 {
        x - (big_phi(x) - u) / f
    } else {
        x
    }
}
