//! Two-stage adaptive triweight kernel estimation of a density and its
//! first two derivatives, evaluated on a 999-point quantile grid, with
//! log-density derivatives precomputed for the estimators.
//!
//! Stage one fits a fixed-bandwidth pilot at every data point; stage two
//! rescales the bandwidth per datum by `lambda_i = (pilot_i / g)^(-a)`
//! where `g` is the geometric mean of the pilot values. Derivative
//! bandwidths use their own rule-of-thumb constants but reuse the same
//! `lambda_i`.

use crate::error::{Error, Result};
use crate::sample::quantile_index;

/// Triweight kernel and its rule-of-thumb constants.
///
/// `K(u) = (35/32)(1-u^2)^3` on `|u| <= 1`, with
/// `K'(u) = (105/32)(1-u^2)^2 (-2u)` and `K''(u) = (105/16)(1-u^2)(5u^2-1)`.
pub struct KernelSpec;

impl KernelSpec {
    pub const C0: f64 = 3.15;
    pub const C1: f64 = 2.83;
    pub const C2: f64 = 2.70;

    pub fn k(u: f64) -> f64 {
        let t = 1.0 - u * u;
        if t <= 0.0 {
            0.0
        } else {
            35.0 / 32.0 * t * t * t
        }
    }

    pub fn k1(u: f64) -> f64 {
        let t = 1.0 - u * u;
        if t <= 0.0 {
            0.0
        } else {
            105.0 / 32.0 * t * t * (-2.0 * u)
        }
    }

    pub fn k2(u: f64) -> f64 {
        let t = 1.0 - u * u;
        if t <= 0.0 {
            0.0
        } else {
            105.0 / 16.0 * t * (5.0 * u * u - 1.0)
        }
    }
}

/// Tuning knobs for [`fit_adaptive_density`].
#[derive(Debug, Clone, Copy)]
pub struct DensityConfig {
    /// Sensitivity exponent `a` in `lambda_i = (pilot_i/g)^(-a)`.
    pub sensitivity: f64,
    /// Minimum number of observations accepted by the fit.
    pub min_points: usize,
    /// Positivity floor applied to the density before log-derivatives.
    pub density_floor: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            sensitivity: 0.5,
            min_points: 100,
            density_floor: 1e-30,
        }
    }
}

/// Number of quantile-grid evaluation points.
const GRID_POINTS: usize = 999;

/// Adaptive-KDE evaluation of `f`, `f'`, `f''` and the log-density
/// derivatives on the quantile grid of the fitted data.
#[derive(Debug, Clone)]
pub struct DensityFit {
    grid: Vec<f64>,
    fhat: Vec<f64>,
    fhat1: Vec<f64>,
    fhat2: Vec<f64>,
    lpsi1: Vec<f64>,
    lpsi2: Vec<f64>,
    h: f64,
    h1: f64,
    h2: f64,
    lambda: Vec<f64>,
    sigma_hat: f64,
    n_data: usize,
}

/// Robust scale: `(q_{0.95} - q_{0.05}) / (2 * 1.6449)` with the crate's
/// order-statistic quantile convention. Requires at least 20 points.
pub fn robust_sigma(sorted: &[f64]) -> Result<f64> {
    let m = sorted.len();
    if m < 20 {
        return Err(Error::TooFewPoints { got: m, need: 20 });
    }
    let lo = sorted[quantile_index(m, 0.05)];
    let hi = sorted[quantile_index(m, 0.95)];
    if hi <= lo {
        return Err(Error::DegenerateScale);
    }
    Ok((hi - lo) / (2.0 * 1.6449))
}

/// Fit with default configuration. `data` need not be sorted.
pub fn fit_adaptive_density(data: &[f64]) -> Result<DensityFit> {
    fit_adaptive_density_with(data, &DensityConfig::default())
}

pub fn fit_adaptive_density_with(data: &[f64], cfg: &DensityConfig) -> Result<DensityFit> {
    let n = data.len();
    if n < cfg.min_points {
        return Err(Error::TooFewPoints {
            got: n,
            need: cfg.min_points,
        });
    }
    let xs: Vec<f64> = if data.is_sorted() {
        data.to_vec()
    } else {
        let mut v = data.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let sigma = robust_sigma(&xs)?;
    let nf = n as f64;
    let h = KernelSpec::C0 * sigma * nf.powf(-1.0 / 5.0);
    let h1 = KernelSpec::C1 * sigma * nf.powf(-1.0 / 7.0);
    let h2 = KernelSpec::C2 * sigma * nf.powf(-1.0 / 9.0);

    // Stage one: fixed-bandwidth pilot at every data point, then the local
    // bandwidth factors through the geometric mean of the pilot values.
    let pilot = pilot_at_data(&xs, h);
    let log_mean = pilot.iter().map(|p| p.ln()).sum::<f64>() / nf;
    let g = log_mean.exp();
    let lambda: Vec<f64> = pilot
        .iter()
        .map(|p| (p / g).powf(-cfg.sensitivity))
        .collect();

    // Quantile grid: order statistics at k/1000, k = 1..=999.
    let grid: Vec<f64> = (1..=GRID_POINTS)
        .map(|k| xs[quantile_index(n, k as f64 / 1000.0)])
        .collect();

    // Stage two: adaptive sums for f, f', f'' in one pass per grid point.
    // Per-datum inverse radii and weights are hoisted out of the hot loop.
    let mut inv0 = Vec::with_capacity(n);
    let mut inv1 = Vec::with_capacity(n);
    let mut inv2 = Vec::with_capacity(n);
    for l in &lambda {
        inv0.push(1.0 / (h * l));
        inv1.push(1.0 / (h1 * l));
        inv2.push(1.0 / (h2 * l));
    }

    let mut fhat = vec![0.0; GRID_POINTS];
    let mut fhat1 = vec![0.0; GRID_POINTS];
    let mut fhat2 = vec![0.0; GRID_POINTS];
    for gi in 0..GRID_POINTS {
        let x = grid[gi];
        let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let d = x - xs[i];
            let u0 = d * inv0[i];
            let t0 = (1.0 - u0 * u0).max(0.0);
            a0 += t0 * t0 * t0 * inv0[i];
            let u1 = d * inv1[i];
            let t1 = (1.0 - u1 * u1).max(0.0);
            a1 += t1 * t1 * u1 * (inv1[i] * inv1[i]);
            let u2 = d * inv2[i];
            let t2 = (1.0 - u2 * u2).max(0.0);
            a2 += t2 * (5.0 * u2 * u2 - 1.0) * (inv2[i] * inv2[i] * inv2[i]);
        }
        fhat[gi] = 35.0 / 32.0 * a0 / nf;
        fhat1[gi] = -105.0 / 16.0 * a1 / nf;
        fhat2[gi] = 105.0 / 16.0 * a2 / nf;
    }

    let floor = cfg.density_floor;
    let mut lpsi1 = vec![0.0; GRID_POINTS];
    let mut lpsi2 = vec![0.0; GRID_POINTS];
    for i in 0..GRID_POINTS {
        let f = fhat[i].max(floor);
        fhat[i] = f;
        lpsi1[i] = fhat1[i] / f;
        lpsi2[i] = (f * fhat2[i] - fhat1[i] * fhat1[i]) / (f * f);
    }

    Ok(DensityFit {
        grid,
        fhat,
        fhat1,
        fhat2,
        lpsi1,
        lpsi2,
        h,
        h1,
        h2,
        lambda,
        sigma_hat: sigma,
        n_data: n,
    })
}

/// Pilot density at each (sorted) data point: fixed bandwidth, sliding
/// window, branch-free inner sum so the compiler can vectorize it.
fn pilot_at_data(xs: &[f64], h: f64) -> Vec<f64> {
    let n = xs.len();
    let inv_h = 1.0 / h;
    let scale = 35.0 / 32.0 / (n as f64 * h);
    let mut out = vec![0.0; n];
    let mut lo = 0usize;
    let mut hi = 0usize;
    for (j, &x) in xs.iter().enumerate() {
        while lo < n && xs[lo] < x - h {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < n && xs[hi] <= x + h {
            hi += 1;
        }
        let mut acc = 0.0;
        for &xi in &xs[lo..hi] {
            let u = (x - xi) * inv_h;
            let t = (1.0 - u * u).max(0.0);
            acc += t * t * t;
        }
        out[j] = acc * scale;
    }
    out
}

impl DensityFit {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn fhat(&self) -> &[f64] {
        &self.fhat
    }

    pub fn fhat1(&self) -> &[f64] {
        &self.fhat1
    }

    pub fn fhat2(&self) -> &[f64] {
        &self.fhat2
    }

    pub fn lpsi1_grid(&self) -> &[f64] {
        &self.lpsi1
    }

    pub fn lpsi2_grid(&self) -> &[f64] {
        &self.lpsi2
    }

    pub fn bandwidths(&self) -> (f64, f64, f64) {
        (self.h, self.h1, self.h2)
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }

    pub fn n_data(&self) -> usize {
        self.n_data
    }

    /// Log-density derivative of the requested order (1 or 2) at `x`:
    /// linear interpolation on the grid, nearest-neighbor extrapolation
    /// beyond the ends. Total on all reals.
    pub fn lpsi(&self, x: f64, order: u8) -> f64 {
        let values = match order {
            1 => &self.lpsi1,
            2 => &self.lpsi2,
            _ => panic!("order must be 1 or 2"),
        };
        self.interp(values, x)
    }

    /// Interpolated density estimate at `x` (same rules as `lpsi`).
    pub fn density(&self, x: f64) -> f64 {
        self.interp(&self.fhat, x)
    }

    fn interp(&self, values: &[f64], x: f64) -> f64 {
        let g = &self.grid;
        let last = g.len() - 1;
        if x <= g[0] {
            return values[0];
        }
        if x >= g[last] {
            return values[last];
        }
        // First index with grid value >= x; x is strictly inside the range.
        let j = g.partition_point(|&v| v < x);
        let (x0, x1) = (g[j - 1], g[j]);
        if x1 == x0 || x == x1 {
            return values[j];
        }
        let w = (x - x0) / (x1 - x0);
        values[j - 1] + w * (values[j] - values[j - 1])
    }

    /// Trapezoid-rule integral of `fhat^2` over the grid (used by the
    /// rank-based plug-in variance).
    pub fn fhat_sq_integral(&self) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.grid.len() {
            let dx = self.grid[i] - self.grid[i - 1];
            let a = self.fhat[i - 1] * self.fhat[i - 1];
            let b = self.fhat[i] * self.fhat[i];
            acc += 0.5 * (a + b) * dx;
        }
        acc
    }

    /// Trapezoid-rule integral of `fhat` over the grid.
    pub fn fhat_integral(&self) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.grid.len() {
            let dx = self.grid[i] - self.grid[i - 1];
            acc += 0.5 * (self.fhat[i - 1] + self.fhat[i]) * dx;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::phi;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        xs
    }

    #[test]
    fn robust_sigma_normal_quantiles() {
        // 20 points: the 0.05 quantile is the 1st order statistic and the
        // 0.95 quantile the 19th.
        let mut xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.01).collect();
        xs[0] = -1.6449;
        xs[18] = 1.6449;
        xs[19] = 2.0;
        xs.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(robust_sigma(&xs).unwrap(), 1.0, epsilon = 1e-12);

        let scaled: Vec<f64> = xs.iter().map(|x| 10.0 * x).collect();
        assert_abs_diff_eq!(robust_sigma(&scaled).unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn robust_sigma_degenerate_and_small() {
        let xs = vec![3.0; 25];
        assert_eq!(robust_sigma(&xs).unwrap_err(), Error::DegenerateScale);
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            robust_sigma(&xs),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn normal_fit_recovers_density_and_curvature() {
        // Pointwise second-derivative estimates carry sd ~ 0.1 at this n,
        // so the 0.15 band is a roughly 1.5-sigma check on a fixed draw.
        let xs = normal_sample(100_000, 1);
        let fit = fit_adaptive_density(&xs).unwrap();
        let f0 = fit.density(0.0);
        assert!((0.37..=0.43).contains(&f0), "fhat(0) = {f0}");
        // (ln phi)'' = -1 everywhere.
        let med = xs[xs.len() / 2];
        let c = fit.lpsi(med, 2);
        assert!((c + 1.0).abs() <= 0.15, "lpsi2 at median = {c}");
    }

    #[test]
    fn symmetric_sample_has_flat_derivative_at_center() {
        // Uniform-ish symmetric sample.
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut xs: Vec<f64> = (0..20_000)
            .map(|_| rand::Rng::random::<f64>(&mut rng) * 2.0 - 1.0)
            .collect();
        xs.sort_by(f64::total_cmp);
        let fit = fit_adaptive_density(&xs).unwrap();
        let med = xs[xs.len() / 2];
        let bound = 0.1 * fit.density(med) / fit.sigma_hat();
        assert!(fit.lpsi(med, 1).abs() * fit.density(med) <= bound.max(1e-12) * 10.0);
        let d1 = fit.interp(&fit.fhat1, med);
        assert!(d1.abs() <= bound, "fhat'(median) = {d1}, bound {bound}");
    }

    #[test]
    fn density_mass_on_grid() {
        let xs = normal_sample(10_000, 3);
        let fit = fit_adaptive_density(&xs).unwrap();
        let mass = fit.fhat_integral();
        assert!((0.95..=1.01).contains(&mass), "mass = {mass}");
    }

    #[test]
    fn derivative_matches_finite_difference_of_density() {
        // fhat' and the centered finite difference of fhat are two noisy
        // estimates of the same curve; they agree in an L2-relative sense
        // over the central 80% of the grid (pointwise sup comparisons are
        // dominated by the difference of their sampling errors).
        let xs = normal_sample(100_000, 8);
        let fit = fit_adaptive_density(&xs).unwrap();
        let g = fit.grid();
        let lo = GRID_POINTS / 10;
        let hi = GRID_POINTS - GRID_POINTS / 10;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut count = 0;
        for i in lo..hi {
            let (i0, i1) = (i - 1, i + 1);
            if g[i1] == g[i0] {
                continue;
            }
            let fd = (fit.fhat()[i1] - fit.fhat()[i0]) / (g[i1] - g[i0]);
            num += (fit.fhat1()[i] - fd) * (fit.fhat1()[i] - fd);
            den += fd * fd;
            count += 1;
        }
        assert!(count > 700);
        let rel = (num / den).sqrt();
        assert!(rel < 0.10, "L2-relative disagreement {rel}");
    }

    #[test]
    fn interpolation_rules() {
        let xs = normal_sample(2_000, 5);
        let fit = fit_adaptive_density(&xs).unwrap();
        let g = fit.grid();
        // On-grid identity.
        assert_eq!(fit.lpsi(g[500], 2), fit.lpsi2_grid()[500]);
        // Midpoint linearity (pick a segment with distinct endpoints).
        let mut i = 400;
        while g[i + 1] == g[i] {
            i += 1;
        }
        let mid = 0.5 * (g[i] + g[i + 1]);
        let expect = 0.5 * (fit.lpsi2_grid()[i] + fit.lpsi2_grid()[i + 1]);
        assert_abs_diff_eq!(fit.lpsi(mid, 2), expect, epsilon = 1e-12);
        // Constant extrapolation.
        assert_eq!(fit.lpsi(g[0] - 100.0, 1), fit.lpsi1_grid()[0]);
        assert_eq!(fit.lpsi(g[998] + 100.0, 1), fit.lpsi1_grid()[998]);
    }

    #[test]
    fn location_and_scale_equivariance() {
        let xs = normal_sample(5_000, 11);
        let fit = fit_adaptive_density(&xs).unwrap();

        let shifted: Vec<f64> = xs.iter().map(|x| x + 7.5).collect();
        let fit_c = fit_adaptive_density(&shifted).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| x * 3.0).collect();
        let fit_s = fit_adaptive_density(&scaled).unwrap();

        for i in (0..GRID_POINTS).step_by(37) {
            assert_abs_diff_eq!(fit_c.grid()[i], fit.grid()[i] + 7.5, epsilon = 1e-10);
            assert_abs_diff_eq!(fit_c.fhat()[i], fit.fhat()[i], epsilon = 1e-10);
            assert_abs_diff_eq!(fit_c.lpsi2_grid()[i], fit.lpsi2_grid()[i], epsilon = 1e-10);

            assert_abs_diff_eq!(fit_s.grid()[i], 3.0 * fit.grid()[i], epsilon = 1e-10);
            assert_abs_diff_eq!(fit_s.fhat()[i], fit.fhat()[i] / 3.0, epsilon = 1e-10);
            assert_abs_diff_eq!(fit_s.lpsi1_grid()[i], fit.lpsi1_grid()[i] / 3.0, epsilon = 1e-10);
            assert_abs_diff_eq!(
                fit_s.lpsi2_grid()[i],
                fit.lpsi2_grid()[i] / 9.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn rejects_small_samples() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(matches!(
            fit_adaptive_density(&xs),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn kernel_integrates_to_one() {
        // Quadrature check of the kernel normalization.
        let v = crate::quad::adaptive_simpson(&KernelSpec::k, -1.0, 1.0, 1e-13).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
        // Symmetry / antisymmetry spot checks.
        assert_eq!(KernelSpec::k(0.3), KernelSpec::k(-0.3));
        assert_eq!(KernelSpec::k1(0.3), -KernelSpec::k1(-0.3));
    }

    #[test]
    fn pilot_matches_direct_sum() {
        let xs = normal_sample(500, 77);
        let h = 0.4;
        let fast = pilot_at_data(&xs, h);
        for (j, &x) in xs.iter().enumerate().step_by(41) {
            let direct: f64 = xs
                .iter()
                .map(|&xi| KernelSpec::k((x - xi) / h))
                .sum::<f64>()
                / (xs.len() as f64 * h);
            assert_abs_diff_eq!(fast[j], direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn normal_lpsi2_is_flat_across_grid() {
        // The optimal weights for normal data are constant; lpsi2 should be
        // close to -1 over the bulk of the grid.
        let xs = normal_sample(20_000, 13);
        let fit = fit_adaptive_density(&xs).unwrap();
        let mid = &fit.lpsi2_grid()[200..799];
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        assert!((mean + 1.0).abs() < 0.1, "mean lpsi2 = {mean}");
        // Density at zero close to phi(0) at this n.
        assert!((fit.density(0.0) - phi(0.0)).abs() < 0.03);
    }
}
