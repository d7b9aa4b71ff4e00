//! General parametric treatment-effect model `Y(1) = h(Y(0), theta)` with
//! `h` strictly increasing in `y`: quantile-matching initialization, the
//! efficient score, a one-step update, the in-sample and population average
//! treatment effects, and the log-to-level translation for multiplicative
//! models.

use serde::Serialize;

use crate::density::{fit_adaptive_density, DensityFit};
use crate::error::{Error, Result};
use crate::sample::{empirical_quantile, DiagValue, Estimate, EstimatorKind, TwoSampleView};

/// A parametric map between the potential outcomes. Implementations must be
/// reentrant: no internal mutable state.
pub trait TreatmentModel: Sync {
    /// Dimension of theta (the estimation path supports 1).
    fn dim(&self) -> usize {
        1
    }

    /// Starting value for the quantile-matching solver.
    fn initial_theta(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn h(&self, y: f64, theta: &[f64]) -> f64;

    fn h_inv(&self, y: f64, theta: &[f64]) -> f64;

    fn dh_inv_dy(&self, y: f64, theta: &[f64]) -> f64;

    /// Analytic score `g(y, theta) = d/dtheta log( f0(h^-1(y)) dh^-1/dy )`,
    /// given the fitted log-density derivative. Return `None` to use the
    /// finite-difference fallback.
    fn analytic_score(&self, _lpsi1: &dyn Fn(f64) -> f64, _y: f64, _theta: &[f64]) -> Option<f64> {
        None
    }

    /// Optional override for the information estimate (the additive model
    /// uses the curvature form shared with the shift estimators).
    fn info_override(
        &self,
        _fit0: &DensityFit,
        _control: &[f64],
        _theta: &[f64],
    ) -> Option<f64> {
        None
    }

    fn name(&self) -> &'static str;
}

/// `h(y, theta) = y + theta`: the constant additive shift.
pub struct AdditiveModel;

impl TreatmentModel for AdditiveModel {
    fn h(&self, y: f64, theta: &[f64]) -> f64 {
        y + theta[0]
    }

    fn h_inv(&self, y: f64, theta: &[f64]) -> f64 {
        y - theta[0]
    }

    fn dh_inv_dy(&self, _y: f64, _theta: &[f64]) -> f64 {
        1.0
    }

    fn analytic_score(&self, lpsi1: &dyn Fn(f64) -> f64, y: f64, theta: &[f64]) -> Option<f64> {
        Some(-lpsi1(y - theta[0]))
    }

    fn info_override(&self, fit0: &DensityFit, control: &[f64], _theta: &[f64]) -> Option<f64> {
        // Curvature form -(1/n0) sum lpsi2(Y0), matching the shift module
        // so the additive pipeline reproduces it exactly.
        Some(-control.iter().map(|&y| fit0.lpsi(y, 2)).sum::<f64>() / control.len() as f64)
    }

    fn name(&self) -> &'static str {
        "additive"
    }
}

/// `h(y, theta) = theta * y` for positive outcomes and `theta > 0`.
pub struct MultiplicativeModel;

impl TreatmentModel for MultiplicativeModel {
    fn initial_theta(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn h(&self, y: f64, theta: &[f64]) -> f64 {
        theta[0] * y
    }

    fn h_inv(&self, y: f64, theta: &[f64]) -> f64 {
        y / theta[0]
    }

    fn dh_inv_dy(&self, _y: f64, theta: &[f64]) -> f64 {
        1.0 / theta[0]
    }

    fn analytic_score(&self, lpsi1: &dyn Fn(f64) -> f64, y: f64, theta: &[f64]) -> Option<f64> {
        // d/dtheta [ log f0(y/theta) - log theta ]
        //   = -(1/theta) (1 + (y/theta) (f0'/f0)(y/theta)).
        let t = theta[0];
        Some(-(1.0 / t) * (1.0 + (y / t) * lpsi1(y / t)))
    }

    fn name(&self) -> &'static str {
        "multiplicative"
    }
}

/// Efficient score `g(y, theta)` for a scalar-parameter model.
///
/// Uses the model's analytic hook when available; otherwise differentiates
/// the model maps by centered differences with step `1e-5 (1 + |theta|)`,
/// keeping the fitted score `lpsi1` analytic:
/// `g = lpsi1(h^-1(y)) d h^-1/d theta + d log(dh^-1/dy)/d theta`.
pub fn score_g(fit0: &DensityFit, model: &dyn TreatmentModel, theta: &[f64], y: f64) -> f64 {
    let lpsi1 = |x: f64| fit0.lpsi(x, 1);
    if let Some(g) = model.analytic_score(&lpsi1, y, theta) {
        return g;
    }
    finite_difference_score(fit0, model, theta, y)
}

/// Finite-difference form of the score, exposed for cross-checking the
/// analytic hooks.
pub fn finite_difference_score(
    fit0: &DensityFit,
    model: &dyn TreatmentModel,
    theta: &[f64],
    y: f64,
) -> f64 {
    let t = theta[0];
    let d = 1e-5 * (1.0 + t.abs());
    let (tp, tm) = (&[t + d][..], &[t - d][..]);
    let dhinv_dtheta = (model.h_inv(y, tp) - model.h_inv(y, tm)) / (2.0 * d);
    let dlogjac_dtheta =
        (model.dh_inv_dy(y, tp).ln() - model.dh_inv_dy(y, tm).ln()) / (2.0 * d);
    fit0.lpsi(model.h_inv(y, theta), 1) * dhinv_dtheta + dlogjac_dtheta
}

/// Check that `h` is strictly increasing in `y` at `theta` over a
/// diagnostic grid of outcome values. Custom models are validated with
/// this before estimation.
pub fn check_monotone(model: &dyn TreatmentModel, theta: &[f64], y_grid: &[f64]) -> Result<()> {
    let mut sorted: Vec<f64> = y_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if w[0] < w[1] && model.h(w[0], theta) >= model.h(w[1], theta) {
            return Err(Error::BadParams(format!(
                "h(y, theta) is not strictly increasing in y near y = {} at theta = {:?}",
                w[0], theta
            )));
        }
    }
    Ok(())
}

/// Solve `F1^-1(u_j) = h(F0^-1(u_j), theta)` for `theta` by damped Newton
/// with a numerical Jacobian. `u_list` must be strictly increasing with
/// length equal to the model dimension.
pub fn quantile_match_init(
    view: &TwoSampleView,
    model: &dyn TreatmentModel,
    u_list: &[f64],
) -> Result<Vec<f64>> {
    let d = model.dim();
    if u_list.len() != d || u_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadConfig(format!(
            "need {d} strictly increasing quantile levels, got {:?}",
            u_list
        )));
    }
    let q0: Vec<f64> = u_list
        .iter()
        .map(|&u| empirical_quantile(view.control(), u))
        .collect::<Result<_>>()?;
    let q1: Vec<f64> = u_list
        .iter()
        .map(|&u| empirical_quantile(view.treated(), u))
        .collect::<Result<_>>()?;
    let residual = |theta: &[f64]| -> Vec<f64> {
        (0..d).map(|j| model.h(q0[j], theta) - q1[j]).collect()
    };
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = 1.0 + q1.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let tol = 1e-10 * scale;

    let mut theta = model.initial_theta();
    let mut r = residual(&theta);
    for iteration in 0..100 {
        if norm(&r) <= tol {
            check_monotone(model, &theta, view.control())?;
            return Ok(theta);
        }
        // Numerical Jacobian, column by column.
        let mut jac = vec![vec![0.0; d]; d];
        for k in 0..d {
            let step = 1e-6 * (1.0 + theta[k].abs());
            let mut tp = theta.clone();
            tp[k] += step;
            let mut tm = theta.clone();
            tm[k] -= step;
            let (rp, rm) = (residual(&tp), residual(&tm));
            for j in 0..d {
                jac[j][k] = (rp[j] - rm[j]) / (2.0 * step);
            }
        }
        let delta = solve_linear(&mut jac, &r).ok_or(Error::NoSolution {
            residual: norm(&r),
            iterations: iteration,
        })?;
        // Damping: halve the step until the residual norm decreases.
        let mut lambda = 1.0;
        let base = norm(&r);
        loop {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&delta)
                .map(|(t, dl)| t - lambda * dl)
                .collect();
            let rc = residual(&cand);
            if norm(&rc) < base || lambda < 1e-8 {
                theta = cand;
                r = rc;
                break;
            }
            lambda *= 0.5;
        }
    }
    if norm(&r) <= tol {
        check_monotone(model, &theta, view.control())?;
        Ok(theta)
    } else {
        Err(Error::NoSolution {
            residual: norm(&r),
            iterations: 100,
        })
    }
}

/// Gaussian elimination with partial pivoting; `None` on singular systems.
fn solve_linear(a: &mut [Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut x: Vec<f64> = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        for k in col + 1..n {
            x[col] -= a[col][k] * x[k];
        }
        x[col] /= a[col][col];
    }
    Some(x)
}

/// One-step efficient update for a scalar-parameter model:
///
/// `theta_hat = theta_tilde + (1/n) sum psi(Y_i, Z_i; theta_tilde)` with
/// `psi = I^-1 [ (z/p) g(y) - ((1-z)/(1-p)) g(h(y)) ]` and
/// `I = (1/n0) sum g(h(Y0_i))^2` unless the model overrides it.
pub fn one_step_theta(
    view: &TwoSampleView,
    theta_tilde: &[f64],
    model: &dyn TreatmentModel,
    split: bool,
    seed: u64,
) -> Result<Estimate> {
    if model.dim() != 1 {
        return Err(Error::BadParams(
            "one-step update supports scalar theta".into(),
        ));
    }
    if !split {
        let fit0 = fit_adaptive_density(view.control())?;
        let info = info_hat(&fit0, view.control(), model, theta_tilde)?;
        let update = influence_sum(view, &fit0, model, theta_tilde, info);
        let theta = theta_tilde[0] + update;
        let var = 1.0 / (view.p() * (1.0 - view.p())) / info / view.n() as f64;
        return Ok(Estimate::new(EstimatorKind::Theta, theta, Some(var))
            .with_diag("info", DiagValue::Num(info))
            .with_diag("model", DiagValue::Text(model.name().into()))
            .with_diag("theta_init", DiagValue::Num(theta_tilde[0])));
    }
    let (half_a, half_b) = crate::shift::split_halves(view, seed);
    let fit_a = fit_adaptive_density(half_a.control())?;
    let fit_b = fit_adaptive_density(half_b.control())?;
    let info_a = info_hat(&fit_b, half_a.control(), model, theta_tilde)?;
    let info_b = info_hat(&fit_a, half_b.control(), model, theta_tilde)?;
    let wa = half_a.n() as f64 / view.n() as f64;
    let update = wa * influence_sum(&half_a, &fit_b, model, theta_tilde, info_a)
        + (1.0 - wa) * influence_sum(&half_b, &fit_a, model, theta_tilde, info_b);
    let info = 0.5 * (info_a + info_b);
    let theta = theta_tilde[0] + update;
    let var = 1.0 / (view.p() * (1.0 - view.p())) / info / view.n() as f64;
    Ok(Estimate::new(EstimatorKind::Theta, theta, Some(var))
        .with_diag("info", DiagValue::Num(info))
        .with_diag("split", DiagValue::Flag(true))
        .with_diag("model", DiagValue::Text(model.name().into()))
        .with_diag("theta_init", DiagValue::Num(theta_tilde[0])))
}

fn info_hat(
    fit0: &DensityFit,
    control: &[f64],
    model: &dyn TreatmentModel,
    theta: &[f64],
) -> Result<f64> {
    let info = match model.info_override(fit0, control, theta) {
        Some(i) => i,
        None => {
            control
                .iter()
                .map(|&y| {
                    let g = score_g(fit0, model, theta, model.h(y, theta));
                    g * g
                })
                .sum::<f64>()
                / control.len() as f64
        }
    };
    if info <= 0.0 {
        return Err(Error::DegenerateInfo(info));
    }
    Ok(info)
}

fn influence_sum(
    view: &TwoSampleView,
    fit0: &DensityFit,
    model: &dyn TreatmentModel,
    theta: &[f64],
    info: f64,
) -> f64 {
    let p = view.p();
    let n = view.n() as f64;
    let mut acc = 0.0;
    for &y in view.treated() {
        acc += score_g(fit0, model, theta, y) / p;
    }
    for &y in view.control() {
        acc -= score_g(fit0, model, theta, model.h(y, theta)) / (1.0 - p);
    }
    acc / (info * n)
}

/// Convenience pipeline: quantile-matching init at the median followed by
/// the one-step update.
pub fn estimate_theta(
    view: &TwoSampleView,
    model: &dyn TreatmentModel,
    split: bool,
    seed: u64,
) -> Result<Estimate> {
    let init = quantile_match_init(view, model, &[0.5])?;
    one_step_theta(view, &init, model, split, seed)
}

/// In-sample average treatment effect:
/// `(1/n) sum { Z (Y - h^-1(Y)) + (1-Z) (h(Y) - Y) }`.
pub fn in_sample_ate(view: &TwoSampleView, model: &dyn TreatmentModel, theta: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &y in view.treated() {
        acc += y - model.h_inv(y, theta);
    }
    for &y in view.control() {
        acc += model.h(y, theta) - y;
    }
    acc / view.n() as f64
}

/// Empirical plug-in of the population average treatment effect,
/// `(1/n0) sum (h(Y0_i) - Y0_i)`.
pub fn population_ate(control: &[f64], model: &dyn TreatmentModel, theta: &[f64]) -> f64 {
    control
        .iter()
        .map(|&y| model.h(y, theta) - y)
        .sum::<f64>()
        / control.len() as f64
}

/// Level-scale treatment effect translated from an additive-in-logs fit.
#[derive(Debug, Clone, Serialize)]
pub struct LevelEffect {
    pub tau: f64,
    pub var: f64,
    pub tau_log: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub p: f64,
}

/// Translate a log-scale shift into a level effect for a population with
/// known arm means: `tau = (1-p)(e^t - 1) mu0 + p (1 - e^-t) mu1`, with the
/// delta-method variance `((1-p) e^t mu0 + p e^-t mu1)^2 V`.
pub fn level_from_log(tau_log: f64, mu0: f64, mu1: f64, p: f64, v: f64) -> Result<LevelEffect> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::BadConfig(format!("p = {p} outside (0,1)")));
    }
    if v < 0.0 || !mu0.is_finite() || !mu1.is_finite() {
        return Err(Error::BadConfig("level translation needs finite means and V >= 0".into()));
    }
    let e = tau_log.exp();
    let tau = (1.0 - p) * (e - 1.0) * mu0 + p * (1.0 - 1.0 / e) * mu1;
    let slope = (1.0 - p) * e * mu0 + p / e * mu1;
    Ok(LevelEffect {
        tau,
        var: slope * slope * v,
        tau_log,
        mu0,
        mu1,
        p,
    })
}

/// Estimate the multiplicative effect via the additive model on log
/// outcomes (exact for positive outcomes) and report it on the level scale.
pub fn multiplicative_via_logs(
    view: &TwoSampleView,
    mu0: f64,
    mu1: f64,
    p: f64,
    split: bool,
    seed: u64,
) -> Result<(Estimate, LevelEffect)> {
    if view.pooled().iter().any(|&y| y <= 0.0) {
        return Err(Error::BadConfig(
            "multiplicative model needs strictly positive outcomes".into(),
        ));
    }
    let log_view = TwoSampleView::from_arms(
        view.control().iter().map(|y| y.ln()).collect(),
        view.treated().iter().map(|y| y.ln()).collect(),
    )?;
    let est = crate::shift::eif_estimate(&log_view, split, crate::shift::EifMode::Root, None, seed)?;
    let level = level_from_log(
        est.tau_hat,
        mu0,
        mu1,
        p,
        est.var_hat.ok_or(Error::MissingVariance)?,
    )?;
    Ok((est, level))
}
