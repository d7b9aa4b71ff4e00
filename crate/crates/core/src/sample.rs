//! Canonical data representation for a completely randomized two-arm
//! experiment, plus the empirical-quantile primitives every estimator is
//! built on.
//!
//! Quantile convention used throughout the crate: the `u` quantile of an
//! arm of size `m` is the `ceil(m*u)`-th order statistic, with the index
//! clamped to `[1, m]`. No interpolation between order statistics.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Sorted outcomes for the control and treated arms.
///
/// Immutable after construction; all estimators take `&TwoSampleView`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleView {
    control: Vec<f64>,
    treated: Vec<f64>,
}

impl TwoSampleView {
    /// Split `(y, z)` pairs into sorted arms. `z` must be exactly 0 or 1.
    pub fn split_sample<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut control = Vec::new();
        let mut treated = Vec::new();
        for (index, (y, z)) in pairs.into_iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if z == 0.0 {
                control.push(y);
            } else if z == 1.0 {
                treated.push(y);
            } else {
                return Err(Error::BadIndicator { z, index });
            }
        }
        Self::from_arms(control, treated)
    }

    /// Build a view from raw (unsorted) arm outcomes.
    pub fn from_arms(mut control: Vec<f64>, mut treated: Vec<f64>) -> Result<Self> {
        if control.is_empty() {
            return Err(Error::EmptyArm { arm: 0 });
        }
        if treated.is_empty() {
            return Err(Error::EmptyArm { arm: 1 });
        }
        for (index, y) in control.iter().chain(treated.iter()).enumerate() {
            if !y.is_finite() {
                return Err(Error::NonFinite { index });
            }
        }
        control.sort_by(f64::total_cmp);
        treated.sort_by(f64::total_cmp);
        Ok(TwoSampleView { control, treated })
    }

    pub fn control(&self) -> &[f64] {
        &self.control
    }

    pub fn treated(&self) -> &[f64] {
        &self.treated
    }

    pub fn n0(&self) -> usize {
        self.control.len()
    }

    pub fn n1(&self) -> usize {
        self.treated.len()
    }

    pub fn n(&self) -> usize {
        self.control.len() + self.treated.len()
    }

    /// Treated fraction n1 / n; strictly inside (0, 1) by construction.
    pub fn p(&self) -> f64 {
        self.n1() as f64 / self.n() as f64
    }

    /// View with the roles of the two arms exchanged.
    pub fn swapped(&self) -> TwoSampleView {
        TwoSampleView {
            control: self.treated.clone(),
            treated: self.control.clone(),
        }
    }

    /// All outcomes, both arms, in one vector (control first).
    pub fn pooled(&self) -> Vec<f64> {
        let mut all = Vec::with_capacity(self.n());
        all.extend_from_slice(&self.control);
        all.extend_from_slice(&self.treated);
        all
    }
}

/// `ceil(m*u)`-th order statistic of a sorted arm, index clamped to `[1, m]`.
pub fn empirical_quantile(arm: &[f64], u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::BadQuantile { u });
    }
    if arm.is_empty() {
        return Err(Error::TooFewPoints { got: 0, need: 1 });
    }
    Ok(arm[quantile_index(arm.len(), u)])
}

/// Zero-based index of the `ceil(m*u)`-th order statistic, clamped.
///
/// The product is nudged down by a few ulps so that `u` values stored as
/// rounded ratios `k/m` still select the k-th order statistic.
pub(crate) fn quantile_index(m: usize, u: f64) -> usize {
    let t = m as f64 * u;
    let k = (t * (1.0 - 4.0 * f64::EPSILON)).ceil() as usize;
    k.clamp(1, m) - 1
}

/// Empirical quantile-treatment-effect curve on a grid of levels in (0, 1).
pub fn qte_curve(view: &TwoSampleView, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&u| {
            if !(u > 0.0 && u < 1.0) {
                return Err(Error::BadQuantile { u });
            }
            let d = empirical_quantile(view.treated(), u)? - empirical_quantile(view.control(), u)?;
            Ok((u, d))
        })
        .collect()
}

/// Which estimator produced an [`Estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Means,
    Medians,
    #[serde(rename = "hl")]
    HodgesLehmann,
    Trim,
    Wins,
    Eif,
    Waq,
    Theta,
}

impl EstimatorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "means" => Ok(Self::Means),
            "medians" => Ok(Self::Medians),
            "hl" => Ok(Self::HodgesLehmann),
            "trim" => Ok(Self::Trim),
            "wins" => Ok(Self::Wins),
            "eif" => Ok(Self::Eif),
            "waq" => Ok(Self::Waq),
            "theta" => Ok(Self::Theta),
            other => Err(Error::BadConfig(format!("unknown estimator `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Means => "means",
            Self::Medians => "medians",
            Self::HodgesLehmann => "hl",
            Self::Trim => "trim",
            Self::Wins => "wins",
            Self::Eif => "eif",
            Self::Waq => "waq",
            Self::Theta => "theta",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Method-specific diagnostic payload attached to an [`Estimate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum DiagValue {
    Num(f64),
    Flag(bool),
    Text(String),
    Series(Vec<(f64, f64)>),
}

/// Point estimate with (optional) variance estimate and diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub tau_hat: f64,
    pub var_hat: Option<f64>,
    pub method: EstimatorKind,
    pub diagnostics: BTreeMap<String, DiagValue>,
}

impl Estimate {
    pub fn new(method: EstimatorKind, tau_hat: f64, var_hat: Option<f64>) -> Self {
        debug_assert!(var_hat.is_none_or(|v| v >= 0.0));
        Estimate {
            tau_hat,
            var_hat,
            method,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_diag(mut self, key: &str, value: DiagValue) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn diag_num(&self, key: &str) -> Option<f64> {
        match self.diagnostics.get(key) {
            Some(DiagValue::Num(x)) => Some(*x),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_minimal() {
        let v = TwoSampleView::split_sample([(1.0, 0.0), (3.0, 1.0)]).unwrap();
        assert_eq!(v.control(), &[1.0]);
        assert_eq!(v.treated(), &[3.0]);
        assert_eq!(v.p(), 0.5);
    }

    #[test]
    fn split_sorts_each_arm() {
        let v =
            TwoSampleView::split_sample([(2.0, 0.0), (1.0, 0.0), (5.0, 1.0), (4.0, 1.0)]).unwrap();
        assert_eq!(v.control(), &[1.0, 2.0]);
        assert_eq!(v.treated(), &[4.0, 5.0]);
        assert_eq!(v.p(), 0.5);
    }

    #[test]
    fn split_rejects_empty_arm() {
        let err = TwoSampleView::split_sample([(1.0, 1.0), (2.0, 1.0)]).unwrap_err();
        assert_eq!(err, Error::EmptyArm { arm: 0 });
    }

    #[test]
    fn split_rejects_bad_indicator_and_nonfinite() {
        let err = TwoSampleView::split_sample([(1.0, 0.0), (2.0, 2.0)]).unwrap_err();
        assert!(matches!(err, Error::BadIndicator { .. }));
        let err = TwoSampleView::split_sample([(f64::NAN, 0.0), (2.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn quantile_order_statistics() {
        let arm = [1.0, 2.0, 3.0];
        assert_eq!(empirical_quantile(&arm, 0.5).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&arm, 1.0).unwrap(), 3.0);
        // ceil(3 * 0.34) = ceil(1.02) = 2
        assert_eq!(empirical_quantile(&[10.0, 20.0, 30.0], 0.34).unwrap(), 20.0);
        assert!(matches!(
            empirical_quantile(&arm, 0.0),
            Err(Error::BadQuantile { .. })
        ));
        assert!(matches!(
            empirical_quantile(&arm, 1.5),
            Err(Error::BadQuantile { .. })
        ));
    }

    #[test]
    fn quantile_matches_direct_indexing_exhaustively() {
        // Every (m, k) with the quantile u = k/m recovers the k-th order
        // statistic; intermediate u values land on ceil(m*u).
        for m in 1..=40usize {
            let arm: Vec<f64> = (1..=m).map(|i| i as f64).collect();
            for k in 1..=m {
                let u = k as f64 / m as f64;
                assert_eq!(empirical_quantile(&arm, u).unwrap(), k as f64);
                let u_mid = (k as f64 - 0.5) / m as f64;
                assert_eq!(empirical_quantile(&arm, u_mid).unwrap(), k as f64);
            }
        }
    }

    #[test]
    fn qte_constant_shift() {
        let control = vec![0.3, 1.0, 2.5, 4.0];
        let treated: Vec<f64> = control.iter().map(|x| x + 5.0).collect();
        let v = TwoSampleView::from_arms(control, treated).unwrap();
        let grid = [0.1, 0.25, 0.5, 0.75, 0.9];
        for (_, d) in qte_curve(&v, &grid).unwrap() {
            assert_eq!(d, 5.0);
        }
    }

    #[test]
    fn qte_hand_cases() {
        let v = TwoSampleView::from_arms(vec![1.0, 2.0], vec![2.0, 4.0]).unwrap();
        let out = qte_curve(&v, &[0.5, 0.9]).unwrap();
        assert_eq!(out[0], (0.5, 1.0));
        assert_eq!(out[1], (0.9, 2.0)); // ceil(2*0.9)=2 per arm
    }
}
