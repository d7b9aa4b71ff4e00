//! Baseline estimators: difference in means, difference in medians, and the
//! Hodges-Lehmann pairwise-difference median.

use crate::density::DensityFit;
use crate::error::{Error, Result};
use crate::sample::{empirical_quantile, DiagValue, Estimate, EstimatorKind, TwoSampleView};

/// Difference in arm means with the textbook two-sample variance
/// `s1^2/n1 + s0^2/n0` (unbiased arm variances).
pub fn diff_means(view: &TwoSampleView) -> Estimate {
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let m0 = mean(view.control());
    let m1 = mean(view.treated());
    let var_arm = |xs: &[f64], m: f64| {
        if xs.len() < 2 {
            None
        } else {
            let ss = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            Some(ss / (xs.len() - 1) as f64 / xs.len() as f64)
        }
    };
    let var = match (var_arm(view.control(), m0), var_arm(view.treated(), m1)) {
        (Some(v0), Some(v1)) => Some(v0 + v1),
        _ => None,
    };
    Estimate::new(EstimatorKind::Means, m1 - m0, var)
}

/// Density estimates below this multiple of the clamp floor are treated as
/// unusable in variance denominators.
const DENSITY_GUARD: f64 = 1e-29;

/// Difference in arm medians. The variance comes from the median influence
/// function, `1/(4 f(median)^2 m)` per arm, with each arm's own density fit.
pub fn diff_medians(view: &TwoSampleView, fit0: &DensityFit, fit1: &DensityFit) -> Result<Estimate> {
    let med0 = empirical_quantile(view.control(), 0.5)?;
    let med1 = empirical_quantile(view.treated(), 0.5)?;
    let f0 = fit0.density(med0);
    let f1 = fit1.density(med1);
    for (f, at) in [(f0, med0), (f1, med1)] {
        if f <= DENSITY_GUARD {
            return Err(Error::DegenerateDensity { value: f, at });
        }
    }
    let var = 1.0 / (4.0 * f1 * f1 * view.n1() as f64) + 1.0 / (4.0 * f0 * f0 * view.n0() as f64);
    Ok(Estimate::new(EstimatorKind::Medians, med1 - med0, Some(var)))
}

/// Difference in medians without a variance (no density fit required);
/// the default initializer for the influence-function estimators.
pub fn diff_medians_point(view: &TwoSampleView) -> f64 {
    let med0 = empirical_quantile(view.control(), 0.5).expect("nonempty arm");
    let med1 = empirical_quantile(view.treated(), 0.5).expect("nonempty arm");
    med1 - med0
}

/// Hodges-Lehmann estimate: the median of all `n0 * n1` pairwise differences
/// `treated - control`, selected by value-space binary search without
/// materializing the pairs. Even pair counts average the two central
/// differences. No variance is attached here; see
/// [`hl_plugin_variance`] and the m-out-of-n bootstrap.
pub fn hodges_lehmann(view: &TwoSampleView) -> Estimate {
    let total = view.n0() as u64 * view.n1() as u64;
    let tau = if total % 2 == 1 {
        kth_pairwise_diff(view.treated(), view.control(), total / 2 + 1)
    } else {
        let a = kth_pairwise_diff(view.treated(), view.control(), total / 2);
        let b = kth_pairwise_diff(view.treated(), view.control(), total / 2 + 1);
        (a + b) / 2.0
    };
    Estimate::new(EstimatorKind::HodgesLehmann, tau, None)
}

/// Rank-theory plug-in variance for the Hodges-Lehmann estimate:
/// `1 / (12 p (1-p) n (int fhat^2)^2)`, with the squared-density integral
/// taken by trapezoid rule over the density grid.
pub fn hl_plugin_variance(view: &TwoSampleView, fit: &DensityFit) -> Result<f64> {
    let int_f2 = fit.fhat_sq_integral();
    if int_f2 <= 0.0 {
        return Err(Error::DegenerateDensity {
            value: int_f2,
            at: f64::NAN,
        });
    }
    let n = view.n() as f64;
    let p = view.p();
    Ok(1.0 / (12.0 * p * (1.0 - p) * n * int_f2 * int_f2))
}

/// Attach the plug-in variance to a Hodges-Lehmann estimate.
pub fn hodges_lehmann_with_plugin(view: &TwoSampleView, fit: &DensityFit) -> Result<Estimate> {
    let mut est = hodges_lehmann(view);
    let v = hl_plugin_variance(view, fit)?;
    est.var_hat = Some(v);
    est.diagnostics
        .insert("int_f_sq".into(), DiagValue::Num(fit.fhat_sq_integral()));
    Ok(est)
}

/// k-th smallest of `{t - c : t in treated, c in control}` (1-based k).
///
/// Binary search over values; each probe counts pairs below the probe with
/// a two-pointer sweep and tracks the nearest realized differences on both
/// sides, so the search snaps to actual pair differences and terminates
/// exactly.
fn kth_pairwise_diff(treated: &[f64], control: &[f64], k: u64) -> f64 {
    let n0 = control.len();
    let n1 = treated.len();
    debug_assert!(k >= 1 && k <= (n0 as u64) * (n1 as u64));
    let mut lo = treated[0] - control[n0 - 1];
    let mut hi = treated[n1 - 1] - control[0];
    while lo < hi {
        let mid = lo + 0.5 * (hi - lo);
        // Degenerate midpoints mean lo and hi are adjacent floats; the
        // count at lo decides which one is the k-th value.
        if mid <= lo || mid >= hi {
            let (cnt, _, _) = count_at_most(treated, control, lo);
            return if cnt >= k { lo } else { hi };
        }
        let (cnt, pred, succ) = count_at_most(treated, control, mid);
        if cnt >= k {
            hi = pred;
        } else {
            lo = succ;
        }
    }
    lo
}

/// Number of pairwise differences `<= x`, plus the largest difference
/// `<= x` and the smallest difference `> x`.
fn count_at_most(treated: &[f64], control: &[f64], x: f64) -> (u64, f64, f64) {
    let n0 = control.len();
    let mut count = 0u64;
    let mut pred = f64::NEG_INFINITY;
    let mut succ = f64::INFINITY;
    // t - c <= x  <=>  c >= t - x, so the first qualifying control index
    // is nondecreasing as t grows over the sorted treated arm.
    let mut j = 0usize;
    for &t in treated {
        while j < n0 && control[j] < t - x {
            j += 1;
        }
        if j < n0 {
            count += (n0 - j) as u64;
            let d = t - control[j]; // largest difference <= x for this t
            if d > pred {
                pred = d;
            }
        }
        if j > 0 {
            let d = t - control[j - 1]; // smallest difference > x for this t
            if d < succ {
                succ = d;
            }
        }
    }
    (count, pred, succ)
}
