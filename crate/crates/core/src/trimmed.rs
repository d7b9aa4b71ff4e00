//! (alpha, beta)-trimmed and winsorized two-sample means, their plug-in
//! asymptotic variances, and data-driven selection of the trim fractions by
//! minimizing the estimated asymptotic variance.
//!
//! Conventions shared by everything here:
//! - quantile levels live on the control-arm grid `u_i = i/(n0+1)`;
//! - the trimmed-mean influence function is the three-piece
//!   `psi(x) = (clip(x, q_a, q_b) - mu) / (1 - alpha - beta)` with
//!   `mu` the winsorized mean, and its variance is estimated by the
//!   Riemann sum `mean(psi(v_i)^2)` over the arm's own order statistics;
//! - the winsorized-mean influence function adds the two boundary-atom
//!   terms `alpha * q'(alpha)`, `beta * q'(1-beta)` with the quantile
//!   density `q'` estimated from order-statistic spacings.

use crate::error::{Error, Result};
use crate::sample::{
    empirical_quantile, quantile_index, DiagValue, Estimate, EstimatorKind, TwoSampleView,
};

/// Left/right trim fractions; both in `[0, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl TrimSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&alpha) || !(0.0..0.5).contains(&beta) || alpha + beta >= 1.0 {
            return Err(Error::BadTrim { alpha, beta });
        }
        Ok(TrimSpec { alpha, beta })
    }

    pub fn symmetric(alpha: f64) -> Result<Self> {
        Self::new(alpha, alpha)
    }
}

/// Search structure for the adaptive trim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimMode {
    /// `beta = alpha`, one-dimensional search.
    Symmetric,
    /// `alpha` and `beta` free.
    Asymmetric,
    /// `alpha = 0`, only the right trim fraction is chosen.
    RightOnly,
}

impl TrimMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sym" | "symmetric" => Ok(Self::Symmetric),
            "asym" | "asymmetric" => Ok(Self::Asymmetric),
            "right" | "right-only" => Ok(Self::RightOnly),
            other => Err(Error::BadConfig(format!("unknown trim mode `{other}`"))),
        }
    }
}

/// Which estimator the adaptive search selects fractions for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptKind {
    Trimmed,
    Winsorized,
}

/// Trimmed two-sample mean: the average of the quantile-difference curve
/// over grid levels in `(alpha, 1 - beta]`, normalized by the number of
/// included grid points.
///
/// The grid is `u_i = i/(n0+1)` with the treated quantile at
/// `ceil(n1 * u_i)`; averaging over included points (rather than scaling by
/// `1/(1-alpha-beta)` directly) keeps the estimator exactly
/// shift-equivariant. With full trimming the included set collapses to the
/// median grid point.
pub fn trimmed_tau(view: &TwoSampleView, spec: &TrimSpec) -> Result<Estimate> {
    let spec = TrimSpec::new(spec.alpha, spec.beta)?;
    let tau = trimmed_point(view, &spec);
    let var = two_arm_variance(view, &spec, AdaptKind::Trimmed)?;
    Ok(Estimate::new(EstimatorKind::Trim, tau, Some(var))
        .with_diag("alpha", DiagValue::Num(spec.alpha))
        .with_diag("beta", DiagValue::Num(spec.beta)))
}

fn trimmed_point(view: &TwoSampleView, spec: &TrimSpec) -> f64 {
    let control = view.control();
    let treated = view.treated();
    let n0 = control.len();
    let n1 = treated.len();
    let denom = (n0 + 1) as f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 1..=n0 {
        let u = i as f64 / denom;
        if u > spec.alpha && u <= 1.0 - spec.beta {
            let j = quantile_index(n1, u);
            sum += treated[j] - control[i - 1];
            count += 1;
        }
    }
    if count == 0 {
        // Full trimming: only the medians remain.
        let i = quantile_index(n0, 0.5);
        let u = (i + 1) as f64 / denom;
        let j = quantile_index(n1, u);
        return treated[j] - control[i];
    }
    sum / count as f64
}

/// Winsorized two-sample mean: arm means after replacing observations
/// outside the `[alpha, 1-beta]` quantile range by the boundary quantiles.
pub fn winsorized_tau(view: &TwoSampleView, spec: &TrimSpec) -> Result<Estimate> {
    let spec = TrimSpec::new(spec.alpha, spec.beta)?;
    let tau = winsorized_mean(view.treated(), &spec)? - winsorized_mean(view.control(), &spec)?;
    let var = two_arm_variance(view, &spec, AdaptKind::Winsorized)?;
    Ok(Estimate::new(EstimatorKind::Wins, tau, Some(var))
        .with_diag("alpha", DiagValue::Num(spec.alpha))
        .with_diag("beta", DiagValue::Num(spec.beta)))
}

fn winsorized_mean(arm: &[f64], spec: &TrimSpec) -> Result<f64> {
    let (lo, hi) = clip_bounds(arm, spec)?;
    let sum: f64 = arm.iter().map(|&x| x.clamp(lo, hi)).sum();
    Ok(sum / arm.len() as f64)
}

fn clip_bounds(arm: &[f64], spec: &TrimSpec) -> Result<(f64, f64)> {
    let lo = if spec.alpha > 0.0 {
        empirical_quantile(arm, spec.alpha)?
    } else {
        f64::NEG_INFINITY
    };
    let hi = if spec.beta > 0.0 {
        empirical_quantile(arm, 1.0 - spec.beta)?
    } else {
        f64::INFINITY
    };
    Ok((lo, hi))
}

/// `p^{-1} sigma1^2/n + (1-p)^{-1} sigma0^2/n` for the requested estimator.
fn two_arm_variance(view: &TwoSampleView, spec: &TrimSpec, kind: AdaptKind) -> Result<f64> {
    let s0 = arm_sigma2(view.control(), spec, kind)?;
    let s1 = arm_sigma2(view.treated(), spec, kind)?;
    let p = view.p();
    Ok((s1 / p + s0 / (1.0 - p)) / view.n() as f64)
}

fn arm_sigma2(arm: &[f64], spec: &TrimSpec, kind: AdaptKind) -> Result<f64> {
    match kind {
        AdaptKind::Trimmed => sigma2_hat(arm, spec),
        AdaptKind::Winsorized => winsorized_sigma2_hat(arm, spec),
    }
}

/// Plug-in asymptotic variance of the one-sample (alpha, beta)-trimmed mean:
/// `mean(psi(v_i)^2)` with the clipped three-piece influence function and
/// the winsorized mean as the centering constant.
pub fn sigma2_hat(arm: &[f64], spec: &TrimSpec) -> Result<f64> {
    let spec = TrimSpec::new(spec.alpha, spec.beta)?;
    if arm.len() < 3 {
        return Err(Error::TooFewPoints {
            got: arm.len(),
            need: 3,
        });
    }
    let m = arm.len() as f64;
    let (lo, hi) = clip_bounds(arm, &spec)?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &x in arm {
        let w = x.clamp(lo, hi);
        sum += w;
        sum_sq += w * w;
    }
    let mu = sum / m;
    let var = (sum_sq / m - mu * mu).max(0.0);
    let keep = 1.0 - spec.alpha - spec.beta;
    Ok(var / (keep * keep))
}

/// Plug-in asymptotic variance of the one-sample winsorized mean. The
/// influence function is the clipped deviation plus boundary atoms
/// weighted by `alpha * q'(alpha)` and `beta * q'(1-beta)`, where the
/// quantile density `q'` is a symmetric order-statistic spacing estimate.
/// Cross-checked against the m-out-of-n bootstrap in tests.
pub fn winsorized_sigma2_hat(arm: &[f64], spec: &TrimSpec) -> Result<f64> {
    let spec = TrimSpec::new(spec.alpha, spec.beta)?;
    if arm.len() < 3 {
        return Err(Error::TooFewPoints {
            got: arm.len(),
            need: 3,
        });
    }
    let m = arm.len() as f64;
    let (lo, hi) = clip_bounds(arm, &spec)?;
    let mu = arm.iter().map(|&x| x.clamp(lo, hi)).sum::<f64>() / m;

    // Boundary-atom weights: a = alpha * q'(alpha), b = beta * q'(1-beta).
    let a = if spec.alpha > 0.0 {
        spec.alpha * quantile_density(arm, spec.alpha)
    } else {
        0.0
    };
    let b = if spec.beta > 0.0 {
        spec.beta * quantile_density(arm, 1.0 - spec.beta)
    } else {
        0.0
    };
    // Empirical centering of the indicator terms.
    let frac_le = |q: f64| arm.partition_point(|&x| x <= q) as f64 / m;
    let pa = if spec.alpha > 0.0 { frac_le(lo) } else { 0.0 };
    let pb = if spec.beta > 0.0 { frac_le(hi) } else { 1.0 };

    let mut acc = 0.0;
    for &x in arm {
        let mut psi = x.clamp(lo, hi) - mu;
        if spec.alpha > 0.0 {
            psi -= a * (if x <= lo { 1.0 } else { 0.0 } - pa);
        }
        if spec.beta > 0.0 {
            psi -= b * (if x <= hi { 1.0 } else { 0.0 } - pb);
        }
        acc += psi * psi;
    }
    Ok(acc / m)
}

/// Order-statistic spacing estimate of the quantile density `(F^-1)'(u)`.
fn quantile_density(arm: &[f64], u: f64) -> f64 {
    let m = arm.len();
    let j = quantile_index(m, u); // zero-based
    let k = ((m as f64).powf(2.0 / 3.0) / 2.0).ceil() as usize;
    let lo = j.saturating_sub(k);
    let hi = (j + k).min(m - 1);
    if hi == lo {
        return 0.0;
    }
    (arm[hi] - arm[lo]) * m as f64 / (hi - lo) as f64
}

/// Result of the adaptive search, exposed for diagnostics.
struct SearchOutcome {
    alpha: f64,
    beta: f64,
    objective: f64,
    profile_alpha: Vec<(f64, f64)>,
    profile_beta: Vec<(f64, f64)>,
}

/// Adaptive trim selection: minimize
/// `p^{-1} sigma1^2(a, b) + (1-p)^{-1} sigma0^2(a, b)` over the trim grid
/// and return the requested estimator at the argmin.
///
/// The grid is `{alpha0} U {j/200} U {alpha1}` intersected with
/// `[alpha0, alpha1]`, followed by one refinement pass at step 1/2000
/// around the coarse argmin. Ties prefer less trimming: smallest
/// `alpha + beta`, then smallest `beta`.
pub fn adapt_trim(
    view: &TwoSampleView,
    alpha0: f64,
    alpha1: f64,
    mode: TrimMode,
    kind: AdaptKind,
) -> Result<Estimate> {
    if !(0.0..0.5).contains(&alpha0) || !(alpha0..0.5).contains(&alpha1) {
        return Err(Error::BadTrim {
            alpha: alpha0,
            beta: alpha1,
        });
    }
    let eval0 = SigmaEval::new(view.control());
    let eval1 = SigmaEval::new(view.treated());
    let p = view.p();
    let objective = |alpha: f64, beta: f64| -> f64 {
        let s0 = eval0.sigma2(alpha, beta, kind);
        let s1 = eval1.sigma2(alpha, beta, kind);
        s1 / p + s0 / (1.0 - p)
    };

    let coarse = grid_points(alpha0, alpha1, 1.0 / 200.0);
    let outcome = search(&objective, &coarse, mode, None)?;
    // One refinement pass around the coarse argmin.
    let fine_lo = (outcome.alpha.min(outcome.beta) - 1.0 / 200.0).max(alpha0);
    let fine = grid_points(
        fine_lo,
        (outcome.alpha.max(outcome.beta) + 1.0 / 200.0).min(alpha1),
        1.0 / 2000.0,
    );
    let refined = search(&objective, &fine, mode, Some((&outcome, 1.0 / 200.0)))?;
    let best = if refined.objective < outcome.objective {
        refined
    } else {
        outcome
    };

    let spec = TrimSpec::new(best.alpha, best.beta)?;
    let mut est = match kind {
        AdaptKind::Trimmed => trimmed_tau(view, &spec)?,
        AdaptKind::Winsorized => winsorized_tau(view, &spec)?,
    };
    est.diagnostics
        .insert("alpha_hat".into(), DiagValue::Num(best.alpha));
    est.diagnostics
        .insert("beta_hat".into(), DiagValue::Num(best.beta));
    est.diagnostics
        .insert("objective".into(), DiagValue::Num(best.objective));
    est.diagnostics.insert(
        "objective_alpha".into(),
        DiagValue::Series(best.profile_alpha),
    );
    est.diagnostics.insert(
        "objective_beta".into(),
        DiagValue::Series(best.profile_beta),
    );
    Ok(est)
}

fn grid_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut pts = vec![lo];
    let mut j = (lo / step).floor() as i64;
    loop {
        j += 1;
        let v = j as f64 * step;
        if v >= hi {
            break;
        }
        if v > lo {
            pts.push(v);
        }
    }
    if hi > lo {
        pts.push(hi);
    }
    pts
}

fn search(
    objective: &dyn Fn(f64, f64) -> f64,
    grid: &[f64],
    mode: TrimMode,
    window: Option<(&SearchOutcome, f64)>,
) -> Result<SearchOutcome> {
    // Candidate (alpha, beta) pairs per mode; the refinement pass restricts
    // each coordinate to a window around the coarse argmin.
    let in_window = |a: f64, b: f64| match window {
        None => true,
        Some((c, w)) => (a - c.alpha).abs() <= w + 1e-12 && (b - c.beta).abs() <= w + 1e-12,
    };
    let mut best: Option<(f64, f64, f64)> = None;
    let mut consider = |a: f64, b: f64, val: f64| {
        let better = match best {
            None => true,
            Some((ba, bb, bv)) => {
                val < bv
                    || (val == bv
                        && (a + b < ba + bb || (a + b == ba + bb && b < bb)))
            }
        };
        if better {
            best = Some((a, b, val));
        }
    };
    match mode {
        TrimMode::Symmetric => {
            for &a in grid {
                if in_window(a, a) {
                    consider(a, a, objective(a, a));
                }
            }
        }
        TrimMode::RightOnly => {
            for &b in grid {
                if in_window(0.0, b) {
                    consider(0.0, b, objective(0.0, b));
                }
            }
        }
        TrimMode::Asymmetric => {
            for &a in grid {
                for &b in grid {
                    if in_window(a, b) {
                        consider(a, b, objective(a, b));
                    }
                }
            }
        }
    }
    let (alpha, beta, value) = best.ok_or(Error::BadTrim {
        alpha: f64::NAN,
        beta: f64::NAN,
    })?;
    // Objective profiles through the argmin for diagnostics.
    let profile_alpha: Vec<(f64, f64)> = grid.iter().map(|&a| (a, objective(a, beta))).collect();
    let profile_beta: Vec<(f64, f64)> = grid.iter().map(|&b| (b, objective(alpha, b))).collect();
    Ok(SearchOutcome {
        alpha,
        beta,
        objective: value,
        profile_alpha,
        profile_beta,
    })
}

/// Prefix-sum evaluator giving O(log m) per-(alpha, beta) variance
/// estimates; matches `sigma2_hat` / `winsorized_sigma2_hat` exactly.
struct SigmaEval<'a> {
    v: &'a [f64],
    prefix1: Vec<f64>,
    prefix2: Vec<f64>,
    spacing_k: usize,
}

impl<'a> SigmaEval<'a> {
    fn new(v: &'a [f64]) -> Self {
        let mut prefix1 = Vec::with_capacity(v.len() + 1);
        let mut prefix2 = Vec::with_capacity(v.len() + 1);
        prefix1.push(0.0);
        prefix2.push(0.0);
        let (mut s1, mut s2) = (0.0, 0.0);
        for &x in v {
            s1 += x;
            s2 += x * x;
            prefix1.push(s1);
            prefix2.push(s2);
        }
        let spacing_k = ((v.len() as f64).powf(2.0 / 3.0) / 2.0).ceil() as usize;
        SigmaEval {
            v,
            prefix1,
            prefix2,
            spacing_k,
        }
    }

    fn sigma2(&self, alpha: f64, beta: f64, kind: AdaptKind) -> f64 {
        match kind {
            AdaptKind::Trimmed => self.trim_sigma2(o_bounds(self.v, alpha, beta)),
            AdaptKind::Winsorized => self.wins_sigma2(alpha, beta),
        }
    }

    fn clipped_moments(&self, b: ClipBounds) -> (f64, f64) {
        let m = self.v.len();
        let (nl, nr) = (b.n_left, b.n_right);
        let mut s1 = self.prefix1[m - nr] - self.prefix1[nl];
        let mut s2 = self.prefix2[m - nr] - self.prefix2[nl];
        // Infinite (inactive) bounds have zero counts; keep 0 * inf out.
        if nl > 0 {
            s1 += nl as f64 * b.lo_val;
            s2 += nl as f64 * b.lo_val * b.lo_val;
        }
        if nr > 0 {
            s1 += nr as f64 * b.hi_val;
            s2 += nr as f64 * b.hi_val * b.hi_val;
        }
        (s1, s2)
    }

    fn trim_sigma2(&self, b: ClipBounds) -> f64 {
        let m = self.v.len() as f64;
        let (s1, s2) = self.clipped_moments(b);
        let mu = s1 / m;
        let var = (s2 / m - mu * mu).max(0.0);
        var / (b.keep * b.keep)
    }

    fn wins_sigma2(&self, alpha: f64, beta: f64) -> f64 {
        let m = self.v.len() as f64;
        let b = o_bounds(self.v, alpha, beta);
        let (s1, s2) = self.clipped_moments(b);
        let mu = s1 / m;
        let var_w = (s2 / m - mu * mu).max(0.0);

        // Atom weights and indicator counts.
        let (a, ca) = if alpha > 0.0 {
            let qd = self.quantile_density(alpha);
            let ca = self.v.partition_point(|&x| x <= b.lo_val) as f64;
            (alpha * qd, ca)
        } else {
            (0.0, 0.0)
        };
        let (bb, cb) = if beta > 0.0 {
            let qd = self.quantile_density(1.0 - beta);
            let cb = self.v.partition_point(|&x| x <= b.hi_val) as f64;
            (beta * qd, cb)
        } else {
            (0.0, m)
        };
        let pa = ca / m;
        let pb = cb / m;

        // sum(psi^2) expanded around the centered pieces:
        // psi_i = (w_i - mu) - a (A_i - pa) - b (B_i - pb), A subset of B.
        let mut total = m * var_w;
        if a != 0.0 {
            let saa = ca * (1.0 - pa);
            // sum (w - mu) A = ca * (lo - mu); A-rows clip to lo.
            let swa = ca * (b.lo_val - mu);
            total += a * a * saa - 2.0 * a * swa;
        }
        if bb != 0.0 {
            let sbb = cb * (1.0 - pb);
            // sum (w - mu) B: all B-rows keep their clipped value.
            let mut swb = self.prefix1[cb as usize] - self.prefix1[b.n_left] - cb * mu;
            if b.n_left > 0 {
                swb += b.n_left as f64 * b.lo_val;
            }
            total += bb * bb * sbb - 2.0 * bb * swb;
        }
        if a != 0.0 && bb != 0.0 {
            let sab = ca * (1.0 - pb);
            total += 2.0 * a * bb * sab;
        }
        (total / m).max(0.0)
    }

    fn quantile_density(&self, u: f64) -> f64 {
        let m = self.v.len();
        let j = quantile_index(m, u);
        let k = self.spacing_k;
        let lo = j.saturating_sub(k);
        let hi = (j + k).min(m - 1);
        if hi == lo {
            return 0.0;
        }
        (self.v[hi] - self.v[lo]) * m as f64 / (hi - lo) as f64
    }
}

#[derive(Clone, Copy)]
struct ClipBounds {
    lo_val: f64,
    hi_val: f64,
    n_left: usize,
    n_right: usize,
    keep: f64,
}

fn o_bounds(v: &[f64], alpha: f64, beta: f64) -> ClipBounds {
    let m = v.len();
    let (lo_val, n_left) = if alpha > 0.0 {
        let q = v[quantile_index(m, alpha)];
        (q, v.partition_point(|&x| x < q))
    } else {
        (f64::NEG_INFINITY, 0)
    };
    let (hi_val, n_right) = if beta > 0.0 {
        let q = v[quantile_index(m, 1.0 - beta)];
        (q, m - v.partition_point(|&x| x <= q))
    } else {
        (f64::INFINITY, 0)
    };
    ClipBounds {
        lo_val,
        hi_val,
        n_left,
        n_right,
        keep: 1.0 - alpha - beta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::diff_means;
    use crate::huber::ExtendedHuber;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_arms(n: usize, seed: u64) -> TwoSampleView {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        TwoSampleView::from_arms(c, t).unwrap()
    }

    #[test]
    fn no_trimming_matches_diff_means() {
        let v = normal_arms(500, 1);
        let spec = TrimSpec::new(0.0, 0.0).unwrap();
        let t = trimmed_tau(&v, &spec).unwrap().tau_hat;
        let m = diff_means(&v).tau_hat;
        let spread = v.treated()[v.n1() - 1] - v.treated()[0];
        assert!((t - m).abs() <= spread / v.n0().min(v.n1()) as f64);
        // Winsorizing with zero fractions is exactly the difference in means.
        let w = winsorized_tau(&v, &spec).unwrap().tau_hat;
        assert_abs_diff_eq!(w, m, epsilon = 1e-12);
    }

    #[test]
    fn full_trimming_matches_diff_medians() {
        // Odd equal arms: the surviving grid point is exactly the median.
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let c: Vec<f64> = (0..101).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t: Vec<f64> = (0..101).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v = TwoSampleView::from_arms(c, t).unwrap();
        let spec = TrimSpec::new(0.495, 0.495).unwrap();
        let tau = trimmed_tau(&v, &spec).unwrap().tau_hat;
        let med = empirical_quantile(v.treated(), 0.5).unwrap()
            - empirical_quantile(v.control(), 0.5).unwrap();
        assert_eq!(tau, med);
    }

    #[test]
    fn shift_equivariance_is_exact() {
        let v = normal_arms(400, 3);
        let spec = TrimSpec::new(0.1, 0.2).unwrap();
        let shifted = TwoSampleView::from_arms(
            v.control().to_vec(),
            v.treated().iter().map(|x| x + 3.25).collect(),
        )
        .unwrap();
        for f in [trimmed_tau, winsorized_tau] {
            let base = f(&v, &spec).unwrap().tau_hat;
            let moved = f(&shifted, &spec).unwrap().tau_hat;
            assert_abs_diff_eq!(moved, base + 3.25, epsilon = 1e-10);
        }
    }

    #[test]
    fn winsorized_hand_case() {
        // control [0,1,2,3,100], beta = 0.2: top value clipped to 3.
        let v = TwoSampleView::from_arms(vec![0.0, 1.0, 2.0, 3.0, 100.0], vec![0.0, 1.0, 2.0, 3.0, 100.0])
            .unwrap();
        let spec = TrimSpec::new(0.0, 0.2).unwrap();
        let m = winsorized_mean(v.control(), &spec).unwrap();
        assert_abs_diff_eq!(m, 1.8, epsilon = 1e-12);
    }

    #[test]
    fn sigma2_no_trim_is_plain_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let s2 = sigma2_hat(&xs, &TrimSpec::new(0.0, 0.0).unwrap()).unwrap();
        assert!((s2 - 1.0).abs() < 0.05, "sigma2 = {s2}");
    }

    #[test]
    fn sigma2_matches_quadrature_oracle() {
        // Independent oracle: the population variance of the trimmed mean
        // is (1/(1-a-b)^2) * double integral of (min(s,t) - st) over
        // [a, 1-b]^2 divided by the quantile densities. For uniform(0,1)
        // outcomes the densities are 1; computed by nested quadrature
        // below, the value at a = b = 1/4 is 1/6.
        let inner = |t: f64| {
            crate::quad::adaptive_simpson(&|s: f64| s.min(t) - s * t, 0.25, 0.75, 1e-12).unwrap()
        };
        let double = crate::quad::adaptive_simpson(&inner, 0.25, 0.75, 1e-10).unwrap();
        let oracle = double / (0.5 * 0.5);
        assert_abs_diff_eq!(oracle, 1.0 / 6.0, epsilon = 1e-8);

        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        xs.sort_by(f64::total_cmp);
        let s2 = sigma2_hat(&xs, &TrimSpec::new(0.25, 0.25).unwrap()).unwrap();
        let rel = (s2 - oracle).abs() / oracle;
        assert!(rel < 0.02, "sigma2 {s2} vs oracle {oracle} (rel {rel})");

        // Normal law, asymmetric fractions, against the shared quadrature
        // oracle; 5% at this n.
        let w = crate::oracle::WeightMeasure::trim(0.1, 0.2).unwrap();
        let pop = crate::oracle::sigma_f2_quadrature(&crate::laws::Law::Normal, &w).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let mut xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let s2 = sigma2_hat(&xs, &TrimSpec::new(0.1, 0.2).unwrap()).unwrap();
        let rel = (s2 - pop).abs() / pop;
        assert!(rel < 0.05, "sigma2 {s2} vs population {pop} (rel {rel})");
    }

    #[test]
    fn sigma2_constant_arm_is_zero() {
        let xs = vec![2.0; 50];
        let spec = TrimSpec::new(0.1, 0.1).unwrap();
        assert_eq!(sigma2_hat(&xs, &spec).unwrap(), 0.0);
        assert_eq!(winsorized_sigma2_hat(&xs, &spec).unwrap(), 0.0);
    }

    #[test]
    fn sigma2_bad_trim_rejected() {
        let xs = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            sigma2_hat(&xs, &TrimSpec { alpha: 0.6, beta: 0.0 }),
            Err(Error::BadTrim { .. })
        ));
        assert!(matches!(
            TrimSpec::new(-0.1, 0.0),
            Err(Error::BadTrim { .. })
        ));
    }

    #[test]
    fn prefix_evaluator_matches_direct_plugin() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for trial in 0..40 {
            let m = rng.random_range(5..400);
            let mut xs: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        rng.random_range(-2..2) as f64
                    } else {
                        StandardNormal.sample(&mut rng)
                    }
                })
                .collect();
            xs.sort_by(f64::total_cmp);
            let eval = SigmaEval::new(&xs);
            // Exact zeros exercise the inactive-bound paths.
            let alpha = if rng.random_bool(0.25) {
                0.0
            } else {
                rng.random_range(0.0..0.5)
            };
            let beta = if rng.random_bool(0.25) {
                0.0
            } else {
                rng.random_range(0.0..0.5)
            };
            let spec = TrimSpec { alpha, beta };
            let direct_t = sigma2_hat(&xs, &spec).unwrap();
            let fast_t = eval.sigma2(alpha, beta, AdaptKind::Trimmed);
            assert_abs_diff_eq!(direct_t, fast_t, epsilon = 1e-10);
            let direct_w = winsorized_sigma2_hat(&xs, &spec).unwrap();
            let fast_w = eval.sigma2(alpha, beta, AdaptKind::Winsorized);
            assert_abs_diff_eq!(direct_w, fast_w, epsilon = 1e-9 * (1.0 + direct_w));
            let _ = trial;
        }
    }

    #[test]
    fn adaptive_normal_prefers_little_trimming() {
        let v = normal_arms(4000, 7);
        let est = adapt_trim(&v, 0.0, 0.495, TrimMode::Asymmetric, AdaptKind::Trimmed).unwrap();
        let a = est.diag_num("alpha_hat").unwrap();
        let b = est.diag_num("beta_hat").unwrap();
        let obj = est.diag_num("objective").unwrap();
        let eval0 = SigmaEval::new(v.control());
        let eval1 = SigmaEval::new(v.treated());
        let at = |al: f64, be: f64| {
            eval1.sigma2(al, be, AdaptKind::Trimmed) / v.p()
                + eval0.sigma2(al, be, AdaptKind::Trimmed) / (1.0 - v.p())
        };
        assert!(obj <= at(0.0, 0.0) + 1e-12);
        assert!(a + b < 0.25, "normal data should trim little: {a}, {b}");
    }

    #[test]
    fn adaptive_double_exponential_beats_median_point() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random::<f64>() - 0.5;
                    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
                })
                .collect()
        };
        let v = TwoSampleView::from_arms(draw(4000), draw(4000)).unwrap();
        let est = adapt_trim(&v, 0.0, 0.495, TrimMode::Symmetric, AdaptKind::Trimmed).unwrap();
        let eval0 = SigmaEval::new(v.control());
        let eval1 = SigmaEval::new(v.treated());
        let at_median = eval1.sigma2(0.495, 0.495, AdaptKind::Trimmed) / v.p()
            + eval0.sigma2(0.495, 0.495, AdaptKind::Trimmed) / (1.0 - v.p());
        assert!(est.diag_num("objective").unwrap() <= at_median + 1e-12);
    }

    #[test]
    fn adaptive_huber_recovers_population_fractions() {
        // Population optimum for extended-Huber data is
        // (F(-k1), 1 - F(k2)); a single n = 4e4 draw lands nearby.
        let h = ExtendedHuber::new(1.0, 3.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let c = h.sample(40_000, &mut rng);
        let t = h.sample(40_000, &mut rng);
        let v = TwoSampleView::from_arms(c, t).unwrap();
        let est = adapt_trim(&v, 0.0, 0.495, TrimMode::Asymmetric, AdaptKind::Trimmed).unwrap();
        let a = est.diag_num("alpha_hat").unwrap();
        let b = est.diag_num("beta_hat").unwrap();
        assert!((a - h.alpha()).abs() < 0.08, "alpha_hat {a} vs {}", h.alpha());
        assert!((b - h.beta()).abs() < 0.08, "beta_hat {b} vs {}", h.beta());
    }

    #[test]
    fn right_only_mode_fixes_alpha_at_zero() {
        let v = normal_arms(1000, 13);
        let est = adapt_trim(&v, 0.0, 0.4, TrimMode::RightOnly, AdaptKind::Winsorized).unwrap();
        assert_eq!(est.diag_num("alpha_hat").unwrap(), 0.0);
    }

    #[test]
    fn scale_equivariance_of_point_estimates() {
        let v = normal_arms(300, 14);
        let spec = TrimSpec::new(0.05, 0.15).unwrap();
        let scaled = TwoSampleView::from_arms(
            v.control().iter().map(|x| 2.5 * x).collect(),
            v.treated().iter().map(|x| 2.5 * x).collect(),
        )
        .unwrap();
        for f in [trimmed_tau, winsorized_tau] {
            let base = f(&v, &spec).unwrap().tau_hat;
            let s = f(&scaled, &spec).unwrap().tau_hat;
            assert_abs_diff_eq!(s, 2.5 * base, epsilon = 1e-10);
        }
    }
}
