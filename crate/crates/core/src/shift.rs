//! Efficient estimators under the constant additive shift model: the
//! influence-function M-estimator (score root / one-step) and the weighted
//! average-quantile L-estimator, with the weight-truncation and variance
//! recipes built on the adaptive density fit of the control arm.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::classic::diff_medians_point;
use crate::density::{fit_adaptive_density, DensityFit};
use crate::error::{Error, Result};
use crate::laws::Law;
use crate::sample::{quantile_index, DiagValue, Estimate, EstimatorKind, TwoSampleView};

/// Weights over the control-arm quantile grid `u_i = i/(n0+1)`.
#[derive(Debug, Clone)]
pub struct WaqWeights {
    pub u_grid: Vec<f64>,
    /// Final weights; zero where truncated, summing to one.
    pub w: Vec<f64>,
    /// Raw second-log-derivative values the weights are proportional to.
    pub w_tilde: Vec<f64>,
    pub truncated: Vec<bool>,
    /// Normalization constant `c` with `w = c * w_tilde` on survivors.
    pub c: f64,
}

impl WaqWeights {
    /// Weights rescaled to have mean one over the grid (figure convention).
    pub fn mean_one(&self) -> Vec<f64> {
        let n = self.w.len() as f64;
        self.w.iter().map(|w| w * n).collect()
    }
}

/// Median absolute deviation scaled by 1.4826.
pub fn mad_scale(data: &[f64]) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let med = v[quantile_index(v.len(), 0.5)];
    let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    1.4826 * dev[quantile_index(dev.len(), 0.5)]
}

/// Efficient L-estimator weights from a control-arm density fit, with the
/// tail-truncation rule: an entry is zeroed when its share of the raw
/// weight mass, normalized by an order-statistic spacing density and the
/// control-arm MAD scale, reaches `log(log n)/log(n) * n^(1/4)`.
///
/// The MAD comes from the control arm so that the rule (like the weights
/// themselves) depends on the treated arm only through spacings; the
/// truncation decision is then exactly invariant under shifts of either
/// arm and under joint rescaling.
pub fn waq_weights(fit0: &DensityFit, view: &TwoSampleView) -> Result<WaqWeights> {
    let n0 = view.n0();
    let u_grid: Vec<f64> = (1..=n0).map(|i| i as f64 / (n0 + 1) as f64).collect();
    waq_weights_on_grid(fit0, view, u_grid)
}

/// Weight construction on an arbitrary grid: the quantile map, spacing
/// densities, MAD scale, and truncation threshold all come from `source`
/// (the estimation sample), so a split estimator can evaluate one half's
/// weight function on the other half's grid.
fn waq_weights_on_grid(
    fit: &DensityFit,
    source: &TwoSampleView,
    u_grid: Vec<f64>,
) -> Result<WaqWeights> {
    let control = source.control();
    let treated = source.treated();
    let n0 = control.len();
    let n1 = treated.len();
    let n = (n0 + n1) as f64;

    // On the source's own grid, quantile(control, i/(n0+1)) is exactly the
    // i-th order statistic.
    let w_tilde: Vec<f64> = u_grid
        .iter()
        .map(|&u| fit.lpsi(control[quantile_index(n0, u)], 2))
        .collect();
    let sum_tilde: f64 = w_tilde.iter().sum();

    let mad = mad_scale(control);
    let threshold = n.ln().ln() / n.ln() * n.powf(0.25);

    let spacing = |v: &[f64], j: usize| -> f64 {
        // First difference at the j-th order statistic (1-based), using the
        // adjacent gap at the lower boundary.
        if v.len() < 2 {
            0.0
        } else if j >= 2 {
            v[j - 1] - v[j - 2]
        } else {
            v[1] - v[0]
        }
    };

    let mut truncated = vec![false; u_grid.len()];
    for (idx, &u) in u_grid.iter().enumerate() {
        let i = quantile_index(n0, u) + 1;
        let j = quantile_index(n1, u) + 1;
        let gap = spacing(control, i).max(spacing(treated, j));
        // ratio = |(w~/sum w~) / (f_adhoc * mad)| with f_adhoc = (1/n0)/gap.
        let ratio = (w_tilde[idx] / sum_tilde * n0 as f64 * gap / mad).abs();
        if !(ratio < threshold) {
            truncated[idx] = true;
        }
    }

    let surviving_sum: f64 = w_tilde
        .iter()
        .zip(&truncated)
        .filter(|(_, t)| !**t)
        .map(|(w, _)| *w)
        .sum();
    if truncated.iter().all(|t| *t) || surviving_sum == 0.0 || !surviving_sum.is_finite() {
        return Err(Error::AllTruncated);
    }
    let c = 1.0 / surviving_sum;
    let w: Vec<f64> = w_tilde
        .iter()
        .zip(&truncated)
        .map(|(wt, t)| if *t { 0.0 } else { c * wt })
        .collect();

    Ok(WaqWeights {
        u_grid,
        w,
        w_tilde,
        truncated,
        c,
    })
}

/// Weighted average-quantile estimate
/// `sum_i w(i/(n0+1)) (Y1_(ceil(n1 i/(n0+1))) - Y0_(i))`.
///
/// Requires `n0 >= n1`; when the treated arm is larger the arms are swapped
/// and the estimate negated. With `split` the arms are halved at random,
/// weights from each half's control fit are applied to the other half, and
/// the two estimates averaged.
pub fn waq_estimate(view: &TwoSampleView, split: bool, seed: u64) -> Result<Estimate> {
    if view.n1() > view.n0() {
        let mut est = waq_estimate(&view.swapped(), split, seed)?;
        est.tau_hat = -est.tau_hat;
        est.diagnostics
            .insert("arms_swapped".into(), DiagValue::Flag(true));
        return Ok(est);
    }
    if !split {
        let fit0 = fit_adaptive_density(view.control())?;
        let weights = waq_weights(&fit0, view)?;
        let tau = waq_sum(view, &weights);
        let var = shift_variance(&fit0, view.control(), view.p(), view.n())?;
        let n_trunc = weights.truncated.iter().filter(|t| **t).count();
        return Ok(Estimate::new(EstimatorKind::Waq, tau, Some(var))
            .with_diag("truncated", DiagValue::Num(n_trunc as f64))
            .with_diag("normalizer", DiagValue::Num(weights.c)));
    }

    let (half_a, half_b) = split_halves(view, seed);
    let fit_a = fit_adaptive_density(half_a.control())?;
    let fit_b = fit_adaptive_density(half_b.control())?;
    // Each half's weight function (fit, quantiles, truncation ingredients)
    // is evaluated on the other half's grid.
    let grid_for = |v: &TwoSampleView| -> Vec<f64> {
        (1..=v.n0()).map(|i| i as f64 / (v.n0() + 1) as f64).collect()
    };
    let est_a = waq_sum(&half_a, &waq_weights_on_grid(&fit_b, &half_b, grid_for(&half_a))?);
    let est_b = waq_sum(&half_b, &waq_weights_on_grid(&fit_a, &half_a, grid_for(&half_b))?);
    let tau = 0.5 * (est_a + est_b);
    let info = 0.5 * (cross_info(&fit_a, half_b.control())? + cross_info(&fit_b, half_a.control())?);
    let var = variance_from_info(info, view.p(), view.n())?;
    Ok(Estimate::new(EstimatorKind::Waq, tau, Some(var))
        .with_diag("split", DiagValue::Flag(true)))
}

fn waq_sum(view: &TwoSampleView, weights: &WaqWeights) -> f64 {
    let control = view.control();
    let treated = view.treated();
    let n1 = treated.len();
    let mut tau = 0.0;
    for (i, &w) in weights.w.iter().enumerate() {
        if w != 0.0 {
            let j = quantile_index(n1, weights.u_grid[i]);
            tau += w * (treated[j] - control[i]);
        }
    }
    tau
}

/// How the influence-function estimate is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EifMode {
    /// Solve the score equation by bracketed bisection.
    Root,
    /// Single influence-function update from the initial estimate.
    OneStep,
}

/// Influence-function estimator for the shift. `init` defaults to the
/// difference in medians. Root mode solves
/// `mean lpsi1(Y1 - tau) - mean lpsi1(Y0) = 0`; if no sign change is found
/// within `50 * MAD`, it falls back to the one-step update and flags the
/// diagnostics.
pub fn eif_estimate(
    view: &TwoSampleView,
    split: bool,
    mode: EifMode,
    init: Option<f64>,
    seed: u64,
) -> Result<Estimate> {
    let tau0 = match init {
        Some(t) => t,
        None => diff_medians_point(view),
    };
    let mad = mad_scale(view.control());

    if !split {
        let fit0 = fit_adaptive_density(view.control())?;
        let control_score: f64 = mean_lpsi1(&fit0, view.control(), 0.0);
        let score = |tau: f64| mean_lpsi1(&fit0, view.treated(), tau) - control_score;
        let info = cross_info(&fit0, view.control())?;
        let var = variance_from_info(info, view.p(), view.n())?;
        return finish_eif(view, &fit0, score, mode, tau0, mad, info, var);
    }

    let (half_a, half_b) = split_halves(view, seed);
    let fit_a = fit_adaptive_density(half_a.control())?;
    let fit_b = fit_adaptive_density(half_b.control())?;
    let info_a = cross_info(&fit_b, half_a.control())?; // fit from B scored on A
    let info_b = cross_info(&fit_a, half_b.control())?;
    let info = 0.5 * (info_a + info_b);
    let var = variance_from_info(info, view.p(), view.n())?;
    let wa = half_a.n() as f64 / view.n() as f64;
    let wb = 1.0 - wa;
    match mode {
        EifMode::Root => {
            let base_a = mean_lpsi1(&fit_b, half_a.control(), 0.0);
            let base_b = mean_lpsi1(&fit_a, half_b.control(), 0.0);
            let score = |tau: f64| {
                wa * (mean_lpsi1(&fit_b, half_a.treated(), tau) - base_a)
                    + wb * (mean_lpsi1(&fit_a, half_b.treated(), tau) - base_b)
            };
            let fit0 = fit_adaptive_density(view.control())?;
            finish_eif(view, &fit0, score, EifMode::Root, tau0, mad, info, var)
        }
        EifMode::OneStep => {
            // One-step update with cross-fitted scores, each half weighted
            // by its share of the sample.
            let upd_a = one_step_update(&half_a, &fit_b, tau0, info_a);
            let upd_b = one_step_update(&half_b, &fit_a, tau0, info_b);
            let tau = tau0 + wa * upd_a + wb * upd_b;
            Ok(Estimate::new(EstimatorKind::Eif, tau, Some(var))
                .with_diag("split", DiagValue::Flag(true))
                .with_diag("init", DiagValue::Num(tau0))
                .with_diag("info", DiagValue::Num(info)))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_eif<F>(
    view: &TwoSampleView,
    fit0: &DensityFit,
    score: F,
    mode: EifMode,
    tau0: f64,
    mad: f64,
    info: f64,
    var: f64,
) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    match mode {
        EifMode::OneStep => {
            let tau = tau0 + one_step_update(view, fit0, tau0, info);
            Ok(Estimate::new(EstimatorKind::Eif, tau, Some(var))
                .with_diag("init", DiagValue::Num(tau0))
                .with_diag("info", DiagValue::Num(info)))
        }
        EifMode::Root => match solve_root(&score, tau0, mad) {
            Some((tau, iterations)) => Ok(Estimate::new(EstimatorKind::Eif, tau, Some(var))
                .with_diag("init", DiagValue::Num(tau0))
                .with_diag("info", DiagValue::Num(info))
                .with_diag("root_iterations", DiagValue::Num(iterations as f64))
                .with_diag("residual", DiagValue::Num(score(tau)))),
            None => {
                // No bracket: fall back to the one-step update.
                let tau = tau0 + one_step_update(view, fit0, tau0, info);
                Ok(Estimate::new(EstimatorKind::Eif, tau, Some(var))
                    .with_diag("init", DiagValue::Num(tau0))
                    .with_diag("info", DiagValue::Num(info))
                    .with_diag("no_bracket", DiagValue::Flag(true)))
            }
        },
    }
}

/// `(1/n) sum psi(Z_i, Y_i; tau0)` with
/// `psi = -(1/I) [ (Z/p) lpsi1(Y - tau) - ((1-Z)/(1-p)) lpsi1(Y) ]`.
fn one_step_update(view: &TwoSampleView, fit0: &DensityFit, tau0: f64, info: f64) -> f64 {
    let p = view.p();
    let n = view.n() as f64;
    let mut acc = 0.0;
    for &y in view.treated() {
        acc += fit0.lpsi(y - tau0, 1) / p;
    }
    for &y in view.control() {
        acc -= fit0.lpsi(y, 1) / (1.0 - p);
    }
    -acc / (info * n)
}

fn mean_lpsi1(fit: &DensityFit, arm: &[f64], offset: f64) -> f64 {
    arm.iter().map(|&y| fit.lpsi(y - offset, 1)).sum::<f64>() / arm.len() as f64
}

/// Bracketed bisection around `tau0`: expand geometrically until the score
/// changes sign (cap `50 * mad`), then bisect. Returns the root and the
/// number of bisection iterations, or `None` if no bracket exists.
fn solve_root<F>(score: &F, tau0: f64, mad: f64) -> Option<(f64, usize)>
where
    F: Fn(f64) -> f64,
{
    let scale = if mad > 0.0 { mad } else { 1.0 };
    let s0 = score(tau0);
    if s0 == 0.0 {
        return Some((tau0, 0));
    }
    let mut step = 0.05 * scale;
    let cap = 50.0 * scale;
    let (mut lo, mut hi) = (tau0, tau0);
    let (mut slo, mut shi) = (s0, s0);
    // Expand in both directions until the score brackets zero.
    while step <= cap {
        if slo * s0 > 0.0 {
            let cand = tau0 - step;
            let s = score(cand);
            if s * s0 <= 0.0 {
                hi = lo;
                shi = slo;
                lo = cand;
                slo = s;
                break;
            }
            lo = cand;
            slo = s;
        }
        if shi * s0 > 0.0 {
            let cand = tau0 + step;
            let s = score(cand);
            if s * s0 <= 0.0 {
                lo = hi;
                slo = shi;
                hi = cand;
                shi = s;
                break;
            }
            hi = cand;
            shi = s;
        }
        step *= 2.0;
    }
    if slo * shi > 0.0 {
        return None;
    }
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
        std::mem::swap(&mut slo, &mut shi);
    }
    let mut iterations = 0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let sm = score(mid);
        iterations += 1;
        if sm == 0.0 {
            return Some((mid, iterations));
        }
        if (sm > 0.0) == (shi > 0.0) {
            hi = mid;
            shi = sm;
        } else {
            lo = mid;
            slo = sm;
        }
        if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    // Prefer the endpoint with the smaller residual.
    let out = if slo.abs() <= shi.abs() { lo } else { hi };
    Some((out, iterations))
}

/// Estimated information `I = -(1/n0) sum lpsi2(Y0_i)` from a fit applied
/// to (possibly different) control observations.
fn cross_info(fit: &DensityFit, control: &[f64]) -> Result<f64> {
    let info = -control.iter().map(|&y| fit.lpsi(y, 2)).sum::<f64>() / control.len() as f64;
    if info <= 0.0 {
        return Err(Error::DegenerateInfo(info));
    }
    Ok(info)
}

fn variance_from_info(info: f64, p: f64, n: usize) -> Result<f64> {
    if info <= 0.0 {
        return Err(Error::DegenerateInfo(info));
    }
    Ok(1.0 / (p * (1.0 - p) * info * n as f64))
}

/// Approximate finite-sample variance of the shift estimators:
/// `1 / (p (1-p) I n)` with `I = -(1/n0) sum lpsi2(Y0_i)`.
pub fn shift_variance(fit0: &DensityFit, control: &[f64], p: f64, n: usize) -> Result<f64> {
    variance_from_info(cross_info(fit0, control)?, p, n)
}

/// Split each arm in half at random; odd leftovers go to the first half.
pub(crate) fn split_halves(view: &TwoSampleView, seed: u64) -> (TwoSampleView, TwoSampleView) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let halves = |arm: &[f64], rng: &mut ChaCha12Rng| -> (Vec<f64>, Vec<f64>) {
        let mut idx: Vec<usize> = (0..arm.len()).collect();
        idx.shuffle(rng);
        let cut = arm.len().div_ceil(2);
        let first = idx[..cut].iter().map(|&i| arm[i]).collect();
        let second = idx[cut..].iter().map(|&i| arm[i]).collect();
        (first, second)
    };
    let (c1, c2) = halves(view.control(), &mut rng);
    let (t1, t2) = halves(view.treated(), &mut rng);
    (
        TwoSampleView::from_arms(c1, t1).expect("nonempty halves"),
        TwoSampleView::from_arms(c2, t2).expect("nonempty halves"),
    )
}

/// Closed-form population weight at quantile level `u` for the shift model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleWeight {
    /// Value of the efficient weight density at `u`.
    Density(f64),
    /// The efficient weight measure is a point mass at the median
    /// (double exponential): there is no density value to report.
    MedianPointMass,
}

/// Population efficient weight `w_f(u) = (1/I) (-f'/f)'(F^{-1}(u))`.
pub fn optimal_weight_oracle(law: &Law, u: f64) -> Result<OracleWeight> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::BadQuantile { u });
    }
    match law {
        Law::Laplace => Ok(OracleWeight::MedianPointMass),
        Law::Normal => Ok(OracleWeight::Density(1.0)),
        Law::Cauchy => {
            let pi = std::f64::consts::PI;
            let s = (pi * u).sin();
            Ok(OracleWeight::Density(
                2.0 * (-(2.0 * pi * u).cos() * s * s) / law.fisher_info(),
            ))
        }
        Law::Huber(h) => {
            let inside = u > h.alpha() && u < 1.0 - h.beta();
            Ok(OracleWeight::Density(if inside {
                1.0 / h.fisher_info()
            } else {
                0.0
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn arms_from_law(law: &Law, n0: usize, n1: usize, shift: f64, seed: u64) -> TwoSampleView {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let c = law.sample(n0, &mut rng);
        let t: Vec<f64> = law.sample(n1, &mut rng).iter().map(|x| x + shift).collect();
        TwoSampleView::from_arms(c, t).unwrap()
    }

    #[test]
    fn normal_weights_are_roughly_constant() {
        // (ln phi)'' = -1, so the population weights are flat. The
        // second-derivative estimates at this n carry enough noise and
        // shoulder bias that the raw coefficient of variation sits near
        // 0.25 over the central 80% of the grid (0.3-0.4 over the full
        // grid); estimator-level efficiency is checked in the acceptance
        // suite.
        let v = arms_from_law(&Law::Normal, 10_000, 10_000, 0.0, 21);
        let fit0 = fit_adaptive_density(v.control()).unwrap();
        let w = waq_weights(&fit0, &v).unwrap();
        let kept: Vec<f64> = w
            .u_grid
            .iter()
            .enumerate()
            .filter(|(i, u)| **u > 0.1 && **u < 0.9 && !w.truncated[*i])
            .map(|(i, _)| w.w[i])
            .collect();
        let mean = kept.iter().sum::<f64>() / kept.len() as f64;
        let sd =
            (kept.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / kept.len() as f64).sqrt();
        assert!(sd / mean < 0.45, "cv = {}", sd / mean);
        // Flat weights are positive after normalization.
        assert!(kept.iter().all(|x| *x > 0.0));
        // Sum-one normalization.
        assert_abs_diff_eq!(w.w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cauchy_weights_track_the_closed_form() {
        let v = arms_from_law(&Law::Cauchy, 10_000, 10_000, 0.0, 22);
        let fit0 = fit_adaptive_density(v.control()).unwrap();
        let w = waq_weights(&fit0, &v).unwrap();
        let pi = std::f64::consts::PI;
        let mut num = 0.0;
        let mut den_a = 0.0;
        let mut den_b = 0.0;
        let mut neg_outside = 0usize;
        let mut n_outside = 0usize;
        for (i, &u) in w.u_grid.iter().enumerate() {
            if w.truncated[i] {
                continue;
            }
            let oracle = -(2.0 * pi * u).cos() * (pi * u).sin() * (pi * u).sin();
            num += w.w[i] * oracle;
            den_a += w.w[i] * w.w[i];
            den_b += oracle * oracle;
            if !(0.25..=0.75).contains(&u) {
                n_outside += 1;
                // Population weights are strictly negative outside the
                // central quantile range; count the matching signs.
                if w.w[i] < 0.0 {
                    neg_outside += 1;
                }
            }
        }
        let corr = num / (den_a.sqrt() * den_b.sqrt());
        // The estimated profile tracks -cos(2 pi u) sin^2(pi u) up to
        // smooth second-derivative noise whose wavelength matches the
        // kernel window at this n; measured correlation sits near 0.6-0.8
        // across seeds. The exact closed-form identity is verified against
        // the population score in the acceptance suite.
        assert!(corr > 0.55, "correlation with closed form = {corr}");
        assert!(
            neg_outside as f64 > 0.6 * n_outside as f64,
            "negative-weight fraction outside the middle: {neg_outside}/{n_outside}"
        );
    }

    #[test]
    fn waq_constant_shift_is_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let c: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t: Vec<f64> = c.iter().map(|x| x + 2.5).collect();
        let v = TwoSampleView::from_arms(c, t).unwrap();
        let est = waq_estimate(&v, false, 0).unwrap();
        assert_abs_diff_eq!(est.tau_hat, 2.5, epsilon = 1e-9);
    }

    #[test]
    fn waq_uniform_weights_reduce_to_untrimmed_average() {
        let v = arms_from_law(&Law::Normal, 400, 400, 0.0, 9);
        let n0 = v.n0();
        let weights = WaqWeights {
            u_grid: (1..=n0).map(|i| i as f64 / (n0 + 1) as f64).collect(),
            w: vec![1.0 / n0 as f64; n0],
            w_tilde: vec![1.0; n0],
            truncated: vec![false; n0],
            c: 1.0 / n0 as f64,
        };
        let got = waq_sum(&v, &weights);
        let spec = crate::trimmed::TrimSpec::new(0.0, 0.0).unwrap();
        let trim = crate::trimmed::trimmed_tau(&v, &spec).unwrap().tau_hat;
        assert_abs_diff_eq!(got, trim, epsilon = 1e-12);
    }

    #[test]
    fn waq_near_the_bound_for_normal_data() {
        let v = arms_from_law(&Law::Normal, 10_000, 10_000, 0.0, 31);
        let est = waq_estimate(&v, false, 0).unwrap();
        // sd bound is sqrt(4/n) = 0.0141; allow 5 sigma.
        assert!(est.tau_hat.abs() < 5.0 * 0.01414, "tau = {}", est.tau_hat);
        let var = est.var_hat.unwrap();
        assert!((var.sqrt() - 0.01414).abs() < 0.003, "sd = {}", var.sqrt());
    }

    #[test]
    fn eif_exact_shift_roots_at_c() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let c: Vec<f64> = (0..800).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t: Vec<f64> = c.iter().map(|x| x + 1.25).collect();
        let v = TwoSampleView::from_arms(c, t).unwrap();
        let est = eif_estimate(&v, false, EifMode::Root, None, 0).unwrap();
        assert_abs_diff_eq!(est.tau_hat, 1.25, epsilon = 1e-10);
        let resid = est.diag_num("residual").unwrap();
        assert!(resid.abs() <= 1e-8 / mad_scale(&v.pooled()));
    }

    #[test]
    fn eif_root_and_onestep_agree_on_normal_data() {
        let v = arms_from_law(&Law::Normal, 5_000, 5_000, 0.3, 7);
        let root = eif_estimate(&v, false, EifMode::Root, None, 0).unwrap();
        let onestep = eif_estimate(&v, false, EifMode::OneStep, None, 0).unwrap();
        let se = (root.var_hat.unwrap() + onestep.var_hat.unwrap()).sqrt();
        assert!(
            (root.tau_hat - onestep.tau_hat).abs() < 2.0 * se,
            "root {} vs onestep {}",
            root.tau_hat,
            onestep.tau_hat
        );
        assert!(root.diagnostics.get("no_bracket").is_none());
    }

    #[test]
    fn eif_close_to_means_on_normal_data() {
        let v = arms_from_law(&Law::Normal, 10_000, 10_000, 0.0, 8);
        let eif = eif_estimate(&v, false, EifMode::Root, None, 0).unwrap();
        let means = crate::classic::diff_means(&v);
        let se = (eif.var_hat.unwrap() + means.var_hat.unwrap()).sqrt();
        assert!((eif.tau_hat - means.tau_hat).abs() < 3.0 * se);
    }

    #[test]
    fn shift_variance_normal_and_cauchy() {
        let v = arms_from_law(&Law::Normal, 10_000, 10_000, 0.0, 41);
        let fit0 = fit_adaptive_density(v.control()).unwrap();
        let sd = shift_variance(&fit0, v.control(), 0.5, 20_000).unwrap().sqrt();
        assert!((sd - 0.01414).abs() / 0.01414 < 0.10, "sd = {sd}");

        let v = arms_from_law(&Law::Cauchy, 10_000, 10_000, 0.0, 42);
        let fit0 = fit_adaptive_density(v.control()).unwrap();
        let sd = shift_variance(&fit0, v.control(), 0.5, 20_000).unwrap().sqrt();
        assert!((sd - 0.020).abs() / 0.020 < 0.15, "sd = {sd}");
    }

    #[test]
    fn degenerate_info_is_reported() {
        assert!(matches!(
            variance_from_info(-0.3, 0.5, 100),
            Err(Error::DegenerateInfo(_))
        ));
    }

    #[test]
    fn shift_equivariance_under_fixed_seed() {
        let v = arms_from_law(&Law::Normal, 600, 400, 0.2, 10);
        let shifted_t = TwoSampleView::from_arms(
            v.control().to_vec(),
            v.treated().iter().map(|x| x + 5.0).collect(),
        )
        .unwrap();
        let shifted_both = TwoSampleView::from_arms(
            v.control().iter().map(|x| x + 5.0).collect(),
            v.treated().iter().map(|x| x + 5.0).collect(),
        )
        .unwrap();
        let fns: [fn(&TwoSampleView) -> Result<Estimate>; 2] = [
            |v| waq_estimate(v, false, 0),
            |v| eif_estimate(v, false, EifMode::Root, None, 0),
        ];
        for f in fns {
            let base = f(&v).unwrap().tau_hat;
            let t1 = f(&shifted_t).unwrap().tau_hat;
            let t2 = f(&shifted_both).unwrap().tau_hat;
            assert_abs_diff_eq!(t1, base + 5.0, epsilon = 1e-9 * (1.0 + base.abs()));
            assert_abs_diff_eq!(t2, base, epsilon = 1e-9 * (1.0 + base.abs()));
        }
    }

    #[test]
    fn swap_and_negate_when_treated_is_larger() {
        let v = arms_from_law(&Law::Normal, 300, 500, 0.4, 11);
        let est = waq_estimate(&v, false, 0).unwrap();
        assert!(est.diagnostics.contains_key("arms_swapped"));
        assert!((est.tau_hat - 0.4).abs() < 0.3);
    }

    #[test]
    fn split_paths_run_and_stay_near_truth() {
        let v = arms_from_law(&Law::Normal, 2_000, 2_000, 0.5, 12);
        let w = waq_estimate(&v, true, 99).unwrap();
        assert!((w.tau_hat - 0.5).abs() < 0.15, "waq split {}", w.tau_hat);
        let e = eif_estimate(&v, true, EifMode::Root, None, 99).unwrap();
        assert!((e.tau_hat - 0.5).abs() < 0.15, "eif split {}", e.tau_hat);
        let o = eif_estimate(&v, true, EifMode::OneStep, None, 99).unwrap();
        assert!((o.tau_hat - 0.5).abs() < 0.15, "onestep split {}", o.tau_hat);
        // Same seed, same answer.
        assert_eq!(w.tau_hat, waq_estimate(&v, true, 99).unwrap().tau_hat);
    }

    #[test]
    fn oracle_weights_match_spec_points() {
        // Normal: constant one.
        for u in [0.1, 0.5, 0.9] {
            assert_eq!(
                optimal_weight_oracle(&Law::Normal, u).unwrap(),
                OracleWeight::Density(1.0)
            );
        }
        // Cauchy: zero at u = 1/4, maximal positive at the median.
        match optimal_weight_oracle(&Law::Cauchy, 0.25).unwrap() {
            OracleWeight::Density(w) => assert_abs_diff_eq!(w, 0.0, epsilon = 1e-12),
            _ => panic!(),
        }
        match optimal_weight_oracle(&Law::Cauchy, 0.5).unwrap() {
            OracleWeight::Density(w) => assert_abs_diff_eq!(w, 4.0, epsilon = 1e-12),
            _ => panic!(),
        }
        assert_eq!(
            optimal_weight_oracle(&Law::Laplace, 0.3).unwrap(),
            OracleWeight::MedianPointMass
        );
        // Mean one: the cauchy density integrates to one.
        let f = |u: f64| match optimal_weight_oracle(&Law::Cauchy, u).unwrap() {
            OracleWeight::Density(w) => w,
            _ => unreachable!(),
        };
        let mass = crate::quad::integrate_rel(&f, 1e-9, 1.0 - 1e-9, 1e-10).unwrap();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn mad_scale_basics() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let m = mad_scale(&xs);
        assert!((m / (1.4826 * 250.0) - 1.0).abs() < 0.01, "mad = {m}");
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..50_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!((mad_scale(&xs) - 1.0).abs() < 0.02);
        let _ = rng.random::<f64>();
    }
}
