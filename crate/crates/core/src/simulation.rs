//! Monte Carlo harness: scenario configuration, seeded replication with
//! per-replicate substreams, and per-estimator summaries (bias, sd,
//! relative efficiency, RMSE, MAD, coverage, median CI length).

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{diff_means, diff_medians, hl_plugin_variance, hodges_lehmann};
use crate::density::{fit_adaptive_density, DensityFit};
use crate::error::{Error, Result};
use crate::inference::{m_of_n_bootstrap_var, normal_ci, normal_ci_from, CiSource, ConfidenceInterval};
use crate::laws::Law;
use crate::oracle::{efficiency_bound, efficiency_bound_from_info};
use crate::sample::{EstimatorKind, TwoSampleView};
use crate::shift::{eif_estimate, waq_estimate, EifMode};
use crate::trimmed::{adapt_trim, AdaptKind, TrimMode};

fn default_ci() -> String {
    "analytic".into()
}

fn default_ci_level() -> f64 {
    0.95
}

fn default_trim_range() -> [f64; 2] {
    [0.0, 0.495]
}

/// A Monte Carlo scenario. Deserialized from TOML or JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// `normal`, `laplace`, `cauchy`, `huber` (with `k1`, `k2`), or
    /// `empirical` (with `empirical_file`).
    pub law: String,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub n0: usize,
    pub n1: usize,
    #[serde(default)]
    pub shift: f64,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    pub estimators: Vec<String>,
    #[serde(default = "default_ci")]
    pub ci: String,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    pub boot_m: Option<usize>,
    #[serde(rename = "boot_B")]
    pub boot_b: Option<usize>,
    pub empirical_file: Option<String>,
    #[serde(default)]
    pub trim_mode: Option<String>,
    #[serde(default = "default_trim_range")]
    pub trim_range: [f64; 2],
}

impl ScenarioSpec {
    /// Parse a scenario from TOML (preferred) or JSON text.
    pub fn parse(text: &str) -> Result<Self> {
        let toml_err = match toml::from_str::<ScenarioSpec>(text) {
            Ok(s) => return Ok(s),
            Err(e) => e,
        };
        serde_json::from_str::<ScenarioSpec>(text).map_err(|json_err| {
            Error::BadConfig(format!(
                "scenario parses as neither TOML ({toml_err}) nor JSON ({json_err})"
            ))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::BadConfig("reps must be at least 1".into()));
        }
        if self.n0 < 100 || self.n1 < 100 {
            return Err(Error::BadConfig("arm sizes must be at least 100".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::BadConfig("no estimators requested".into()));
        }
        for name in &self.estimators {
            let kind = EstimatorKind::parse(name)?;
            if kind == EstimatorKind::Theta {
                return Err(Error::BadConfig(
                    "the parametric pipeline is driven through `estimate`, not scenarios".into(),
                ));
            }
        }
        match self.ci.as_str() {
            "analytic" | "bootstrap" => {}
            other => return Err(Error::BadConfig(format!("unknown ci mode `{other}`"))),
        }
        if !(0.0 < self.ci_level && self.ci_level < 1.0) {
            return Err(Error::BadConfig(format!(
                "ci_level = {} outside (0,1)",
                self.ci_level
            )));
        }
        if self.law == "empirical" {
            if self.empirical_file.is_none() {
                return Err(Error::BadConfig(
                    "empirical law needs `empirical_file`".into(),
                ));
            }
        } else {
            Law::parse(&self.law, self.k1, self.k2)?;
        }
        if let Some(mode) = &self.trim_mode {
            TrimMode::parse(mode)?;
        }
        let [a0, a1] = self.trim_range;
        if !(0.0..0.5).contains(&a0) || !(a0..0.5).contains(&a1) {
            return Err(Error::BadConfig(format!(
                "trim_range [{a0}, {a1}] outside 0 <= a0 <= a1 < 0.5"
            )));
        }
        Ok(())
    }
}

/// Per-estimator summary row.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub bias: f64,
    pub sd: f64,
    pub relative_efficiency: f64,
    pub rmse: f64,
    pub mad: f64,
    pub coverage: f64,
    pub median_ci_length: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub rows: Vec<EstimatorSummary>,
    pub spec: ScenarioSpec,
    pub efficiency_bound: f64,
    /// Wall time is informational only; it is excluded from the CSV and
    /// table renderings so reports stay bit-identical across runs.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

enum Population {
    Closed(Law),
    Empirical(Vec<f64>),
}

/// Run a scenario: seeded replications (parallel, each on its own RNG
/// substream), per-replicate estimates and confidence intervals, and the
/// summary table. A replicate failure is recorded per estimator; more than
/// 5% failures for any estimator aborts the run.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<MonteCarloReport> {
    spec.validate()?;
    let start = Instant::now();
    let kinds: Vec<EstimatorKind> = spec
        .estimators
        .iter()
        .map(|s| EstimatorKind::parse(s))
        .collect::<Result<_>>()?;

    let population = if spec.law == "empirical" {
        let path = spec.empirical_file.as_ref().unwrap();
        let ys = read_y_csv(Path::new(path))?;
        if ys.len() < spec.n0 + spec.n1 {
            return Err(Error::BadConfig(format!(
                "empirical population has {} rows, need at least {}",
                ys.len(),
                spec.n0 + spec.n1
            )));
        }
        Population::Empirical(ys)
    } else {
        Population::Closed(Law::parse(&spec.law, spec.k1, spec.k2)?)
    };

    let n = spec.n0 + spec.n1;
    let p = spec.n1 as f64 / n as f64;
    let bound = match &population {
        Population::Closed(law) => efficiency_bound(law, p, n)?,
        Population::Empirical(ys) => {
            // Estimate the bound from a density fit on the full population.
            let fit = fit_adaptive_density(ys)?;
            let info = -ys.iter().map(|&y| fit.lpsi(y, 2)).sum::<f64>() / ys.len() as f64;
            efficiency_bound_from_info(info, p, n)?
        }
    };

    let per_rep: Vec<Vec<Result<(f64, ConfidenceInterval)>>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            rng.set_stream(rep as u64 + 1);
            let view = match draw_view(&population, spec, &mut rng) {
                Ok(v) => v,
                Err(e) => return vec![Err(e); kinds.len()],
            };
            let sub_seed: u64 = rng.random();
            run_estimators(&view, &kinds, spec, sub_seed)
        })
        .collect();

    let mut rows = Vec::with_capacity(kinds.len());
    for (idx, kind) in kinds.iter().enumerate() {
        let mut taus = Vec::with_capacity(spec.reps);
        let mut lengths = Vec::with_capacity(spec.reps);
        let mut covered = 0usize;
        let mut failures = 0usize;
        for rep in &per_rep {
            match &rep[idx] {
                Ok((tau, ci)) => {
                    taus.push(*tau);
                    lengths.push(ci.length());
                    if ci.covers(spec.shift) {
                        covered += 1;
                    }
                }
                Err(_) => failures += 1,
            }
        }
        if failures * 20 > spec.reps {
            return Err(Error::ResampleFailure {
                failed: failures,
                total: spec.reps,
            });
        }
        let k = taus.len() as f64;
        let mean = taus.iter().sum::<f64>() / k;
        let bias = mean - spec.shift;
        let sd = if taus.len() > 1 {
            (taus.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let rmse = (taus
            .iter()
            .map(|t| (t - spec.shift) * (t - spec.shift))
            .sum::<f64>()
            / k)
            .sqrt();
        let mut abs_err: Vec<f64> = taus.iter().map(|t| (t - spec.shift).abs()).collect();
        let mad = median_in_place(&mut abs_err);
        let med_len = median_in_place(&mut lengths);
        rows.push(EstimatorSummary {
            estimator: kind.name().into(),
            bias,
            sd,
            relative_efficiency: sd / bound.sqrt(),
            rmse,
            mad,
            coverage: covered as f64 / k,
            median_ci_length: med_len,
            failures,
        });
    }

    Ok(MonteCarloReport {
        rows,
        spec: spec.clone(),
        efficiency_bound: bound,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn draw_view(
    population: &Population,
    spec: &ScenarioSpec,
    rng: &mut ChaCha12Rng,
) -> Result<TwoSampleView> {
    let (mut control, mut treated) = match population {
        Population::Closed(law) => (law.sample(spec.n0, rng), law.sample(spec.n1, rng)),
        Population::Empirical(ys) => {
            // Without-replacement draw via partial Fisher-Yates; the first
            // n1 of the shuffled draw form the treated arm.
            let total = spec.n0 + spec.n1;
            let mut idx: Vec<u32> = (0..ys.len() as u32).collect();
            for i in 0..total {
                let j = rng.random_range(i..idx.len());
                idx.swap(i, j);
            }
            let treated = idx[..spec.n1].iter().map(|&i| ys[i as usize]).collect();
            let control = idx[spec.n1..total].iter().map(|&i| ys[i as usize]).collect();
            (control, treated)
        }
    };
    control.sort_by(f64::total_cmp);
    for y in &mut treated {
        *y += spec.shift;
    }
    treated.sort_by(f64::total_cmp);
    TwoSampleView::from_arms(control, treated)
}

fn run_estimators(
    view: &TwoSampleView,
    kinds: &[EstimatorKind],
    spec: &ScenarioSpec,
    sub_seed: u64,
) -> Vec<Result<(f64, ConfidenceInterval)>> {
    let analytic_ci = spec.ci == "analytic";
    let trim_mode = spec
        .trim_mode
        .as_deref()
        .map(TrimMode::parse)
        .transpose()
        .unwrap_or(Some(TrimMode::Asymmetric))
        .unwrap_or(TrimMode::Asymmetric);
    let [a0, a1] = spec.trim_range;

    // Fits shared across estimators within the replicate.
    let needs_fit0 = kinds.iter().any(|k| {
        matches!(k, EstimatorKind::Medians | EstimatorKind::Eif | EstimatorKind::Waq)
            || (analytic_ci && *k == EstimatorKind::HodgesLehmann)
    });
    let fit0: Option<Result<DensityFit>> =
        needs_fit0.then(|| fit_adaptive_density(view.control()));
    let fit1: Option<Result<DensityFit>> = kinds
        .contains(&EstimatorKind::Medians)
        .then(|| fit_adaptive_density(view.treated()));
    let get_fit = |slot: &Option<Result<DensityFit>>| -> Result<DensityFit> {
        match slot {
            Some(Ok(f)) => Ok(f.clone()),
            Some(Err(e)) => Err(e.clone()),
            None => unreachable!("fit requested but not prepared"),
        }
    };

    kinds
        .iter()
        .map(|kind| -> Result<(f64, ConfidenceInterval)> {
            let est = match kind {
                EstimatorKind::Means => diff_means(view),
                EstimatorKind::Medians => {
                    diff_medians(view, &get_fit(&fit0)?, &get_fit(&fit1)?)?
                }
                EstimatorKind::HodgesLehmann => {
                    let mut e = hodges_lehmann(view);
                    if analytic_ci {
                        e.var_hat = Some(hl_plugin_variance(view, &get_fit(&fit0)?)?);
                    }
                    e
                }
                EstimatorKind::Trim => adapt_trim(view, a0, a1, trim_mode, AdaptKind::Trimmed)?,
                EstimatorKind::Wins => {
                    adapt_trim(view, a0, a1, trim_mode, AdaptKind::Winsorized)?
                }
                EstimatorKind::Eif => eif_estimate(view, false, EifMode::Root, None, sub_seed)?,
                EstimatorKind::Waq => waq_estimate(view, false, sub_seed)?,
                EstimatorKind::Theta => unreachable!("rejected by validate"),
            };
            let ci = if analytic_ci {
                normal_ci(&est, spec.ci_level)?
            } else {
                let m = spec.boot_m.unwrap_or(2_000).min(view.n());
                let b = spec.boot_b.unwrap_or(200);
                let kind = *kind;
                let var = m_of_n_bootstrap_var(
                    view,
                    |resample| point_estimate(resample, kind, spec, sub_seed),
                    m,
                    b,
                    sub_seed ^ 0x5851_f42d_4c95_7f2d,
                )?;
                normal_ci_from(est.tau_hat, var, spec.ci_level, CiSource::Bootstrap)?
            };
            Ok((est.tau_hat, ci))
        })
        .collect()
}

/// Point estimate only, for bootstrap resamples.
fn point_estimate(
    view: &TwoSampleView,
    kind: EstimatorKind,
    spec: &ScenarioSpec,
    sub_seed: u64,
) -> Result<f64> {
    let trim_mode = spec
        .trim_mode
        .as_deref()
        .map(TrimMode::parse)
        .transpose()?
        .unwrap_or(TrimMode::Asymmetric);
    let [a0, a1] = spec.trim_range;
    Ok(match kind {
        EstimatorKind::Means => diff_means(view).tau_hat,
        EstimatorKind::Medians => crate::classic::diff_medians_point(view),
        EstimatorKind::HodgesLehmann => hodges_lehmann(view).tau_hat,
        EstimatorKind::Trim => adapt_trim(view, a0, a1, trim_mode, AdaptKind::Trimmed)?.tau_hat,
        EstimatorKind::Wins => {
            adapt_trim(view, a0, a1, trim_mode, AdaptKind::Winsorized)?.tau_hat
        }
        EstimatorKind::Eif => eif_estimate(view, false, EifMode::Root, None, sub_seed)?.tau_hat,
        EstimatorKind::Waq => waq_estimate(view, false, sub_seed)?.tau_hat,
        EstimatorKind::Theta => unreachable!(),
    })
}

fn median_in_place(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl MonteCarloReport {
    /// CSV rendering with full-precision values; deterministic for a given
    /// spec and seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "estimator,bias,sd,relative_efficiency,rmse,mad,coverage,median_ci_length,failures\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.estimator,
                r.bias,
                r.sd,
                r.relative_efficiency,
                r.rmse,
                r.mad,
                r.coverage,
                r.median_ci_length,
                r.failures
            ));
        }
        out
    }

    /// Aligned text table for human consumption.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "law: {}  n0: {}  n1: {}  shift: {}  reps: {}  seed: {}  ci: {}\n",
            self.spec.law,
            self.spec.n0,
            self.spec.n1,
            self.spec.shift,
            self.spec.reps,
            self.spec.seed,
            self.spec.ci
        ));
        out.push_str(&format!(
            "efficiency bound sd: {:.6}\n",
            self.efficiency_bound.sqrt()
        ));
        out.push_str(&format!(
            "{:<10} {:>10} {:>10} {:>9} {:>10} {:>10} {:>9} {:>10} {:>5}\n",
            "estimator", "bias", "sd", "rel.eff", "rmse", "mad", "coverage", "med.len", "fail"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>10.4} {:>10.4} {:>9.3} {:>10.4} {:>10.4} {:>9.3} {:>10.4} {:>5}\n",
                r.estimator,
                r.bias,
                r.sd,
                r.relative_efficiency,
                r.rmse,
                r.mad,
                r.coverage,
                r.median_ci_length,
                r.failures
            ));
        }
        out
    }
}

/// Read a numeric column named `y` from a headed CSV file.
pub fn read_y_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::BadConfig(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::BadConfig(format!("bad CSV header: {e}")))?;
    let y_col = headers
        .iter()
        .position(|h| h.trim() == "y")
        .ok_or_else(|| Error::BadConfig("CSV needs a `y` column".into()))?;
    let mut ys = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::BadConfig(format!("CSV row {line}: {e}")))?;
        let raw = record
            .get(y_col)
            .ok_or_else(|| Error::BadConfig(format!("CSV row {line}: missing y")))?;
        let y: f64 = raw
            .trim()
            .parse()
            .map_err(|_| Error::BadConfig(format!("CSV row {line}: bad y `{raw}`")))?;
        if !y.is_finite() {
            return Err(Error::NonFinite { index: line });
        }
        ys.push(y);
    }
    Ok(ys)
}

/// Read `(y, z)` pairs from a headed CSV file with columns `y` and `z`.
pub fn read_yz_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::BadConfig(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::BadConfig(format!("bad CSV header: {e}")))?;
    let y_col = headers
        .iter()
        .position(|h| h.trim() == "y")
        .ok_or_else(|| Error::BadConfig("CSV needs a `y` column".into()))?;
    let z_col = headers
        .iter()
        .position(|h| h.trim() == "z")
        .ok_or_else(|| Error::BadConfig("CSV needs a `z` column".into()))?;
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::BadConfig(format!("CSV row {line}: {e}")))?;
        let y: f64 = record
            .get(y_col)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::BadConfig(format!("CSV row {line}: bad y")))?;
        let z: f64 = record
            .get(z_col)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::BadConfig(format!("CSV row {line}: bad z")))?;
        out.push((y, z));
    }
    Ok(out)
}
