//! Confidence intervals from analytic variances and the m-out-of-n
//! bootstrap variance used for estimators without a closed-form variance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauss::big_phi_inv;
use crate::sample::{Estimate, TwoSampleView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CiSource {
    Analytic,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub source: CiSource,
}

impl ConfidenceInterval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

/// Wald interval `tau_hat +- z_{(1+level)/2} sqrt(var_hat)`.
pub fn normal_ci(est: &Estimate, level: f64) -> Result<ConfidenceInterval> {
    let var = est.var_hat.ok_or(Error::MissingVariance)?;
    normal_ci_from(est.tau_hat, var, level, CiSource::Analytic)
}

/// Wald interval from an explicit variance (e.g. a bootstrap estimate).
pub fn normal_ci_from(
    tau_hat: f64,
    var: f64,
    level: f64,
    source: CiSource,
) -> Result<ConfidenceInterval> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::BadConfig(format!("level = {level} outside (0,1)")));
    }
    if var < 0.0 {
        return Err(Error::BadConfig(format!("negative variance {var}")));
    }
    let z = big_phi_inv(0.5 * (1.0 + level));
    let half = z * var.sqrt();
    Ok(ConfidenceInterval {
        lo: tau_hat - half,
        hi: tau_hat + half,
        level,
        source,
    })
}

/// m-out-of-n bootstrap variance: draw `b` resamples of size `m` (with
/// replacement within each arm, arm sizes `round(m p)` and the remainder),
/// apply the estimator, and rescale the spread of the replicates by `m/n`.
///
/// Replicates run in parallel on independent seeded substreams; failures on
/// more than 10% of resamples abort with `ResampleFailure`.
pub fn m_of_n_bootstrap_var<F>(
    view: &TwoSampleView,
    estimator: F,
    m: usize,
    b: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&TwoSampleView) -> Result<f64> + Sync,
{
    let n = view.n();
    if m < 2 || m > n {
        return Err(Error::BadConfig(format!(
            "resample size m = {m} outside [2, n = {n}]"
        )));
    }
    if b < 50 {
        return Err(Error::BadConfig(format!("need at least 50 resamples, got {b}")));
    }
    let m1 = ((m as f64 * view.p()).round() as usize).clamp(1, m - 1);
    let m0 = m - m1;

    let estimates: Vec<Result<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            let draw = |arm: &[f64], k: usize, rng: &mut ChaCha12Rng| -> Vec<f64> {
                (0..k)
                    .map(|_| arm[rng.random_range(0..arm.len())])
                    .collect()
            };
            let control = draw(view.control(), m0, &mut rng);
            let treated = draw(view.treated(), m1, &mut rng);
            let resample = TwoSampleView::from_arms(control, treated)?;
            estimator(&resample)
        })
        .collect();

    let ok: Vec<f64> = estimates.iter().filter_map(|r| r.as_ref().ok()).copied().collect();
    let failed = b - ok.len();
    if failed * 10 > b {
        return Err(Error::ResampleFailure { failed, total: b });
    }
    let k = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / k;
    let var = ok.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    Ok(var * m as f64 / n as f64)
}
