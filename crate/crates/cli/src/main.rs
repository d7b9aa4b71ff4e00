//! Command-line entry points: estimate a treatment effect from a CSV,
//! run a Monte Carlo scenario, and emit weight/density diagnostics.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 estimator
//! failure (the error name is reported in the JSON `error` field).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tailshift::classic::{diff_means, diff_medians, hodges_lehmann, hodges_lehmann_with_plugin};
use tailshift::density::fit_adaptive_density;
use tailshift::inference::{m_of_n_bootstrap_var, normal_ci, normal_ci_from, CiSource};
use tailshift::laws::Law;
use tailshift::parametric::{
    in_sample_ate, multiplicative_via_logs, one_step_theta, population_ate, quantile_match_init,
    AdditiveModel, MultiplicativeModel, TreatmentModel,
};
use tailshift::shift::{eif_estimate, optimal_weight_oracle, waq_estimate, waq_weights, EifMode, OracleWeight};
use tailshift::simulation::{read_yz_csv, run_scenario, ScenarioSpec};
use tailshift::trimmed::{adapt_trim, AdaptKind, TrimMode};
use tailshift::{Error, Estimate, EstimatorKind, Result, TwoSampleView};

#[derive(Parser)]
#[command(name = "tailshift", version, about = "Treatment-effect estimation for heavy-tailed randomized experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a treatment effect from a CSV with columns `y` and `z`.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo scenario from a TOML or JSON config file.
    Simulate(SimulateArgs),
    /// Emit weighted-average-quantile weights (estimated or closed form).
    Weights(WeightsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Means,
    Medians,
    Hl,
    Trim,
    Wins,
    Eif,
    Waq,
}

impl EstimatorArg {
    fn kind(self) -> EstimatorKind {
        match self {
            Self::Means => EstimatorKind::Means,
            Self::Medians => EstimatorKind::Medians,
            Self::Hl => EstimatorKind::HodgesLehmann,
            Self::Trim => EstimatorKind::Trim,
            Self::Wins => EstimatorKind::Wins,
            Self::Eif => EstimatorKind::Eif,
            Self::Waq => EstimatorKind::Waq,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CiArg {
    Analytic,
    Bootstrap,
}

#[derive(Clone, Copy, ValueEnum)]
enum EifModeArg {
    Root,
    Onestep,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrimModeArg {
    Sym,
    Asym,
    Right,
}

impl TrimModeArg {
    fn mode(self) -> TrimMode {
        match self {
            Self::Sym => TrimMode::Symmetric,
            Self::Asym => TrimMode::Asymmetric,
            Self::Right => TrimMode::RightOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Additive,
    Multiplicative,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Theta,
    #[value(name = "is-ate")]
    IsAte,
    #[value(name = "pop-ate")]
    PopAte,
    Level,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV with header `y,z`.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "means")]
    estimator: EstimatorArg,
    #[arg(long, value_enum, default_value = "analytic")]
    ci: CiArg,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long = "boot-m")]
    boot_m: Option<usize>,
    #[arg(long = "boot-B")]
    boot_b: Option<usize>,
    /// Use half-sample splitting for eif/waq.
    #[arg(long)]
    split: bool,
    #[arg(long = "eif-mode", value_enum, default_value = "root")]
    eif_mode: EifModeArg,
    #[arg(long = "trim-mode", value_enum, default_value = "asym")]
    trim_mode: TrimModeArg,
    /// Trim search range `a0,a1` with 0 <= a0 <= a1 < 0.5.
    #[arg(long = "trim-range", default_value = "0,0.495")]
    trim_range: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parametric treatment-effect model (activates the theta pipeline
    /// together with --report).
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// What to report from the parametric pipeline.
    #[arg(long, value_enum)]
    report: Option<ReportArg>,
    /// Population means `mu0,mu1` for --report level.
    #[arg(long = "level-means")]
    level_means: Option<String>,
    /// Treated fraction for --report level.
    #[arg(long = "level-p")]
    level_p: Option<f64>,
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML or JSON).
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV report here (the text table then goes to stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    /// Input CSV with header `y,z`; the control arm drives the fit.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Closed-form law instead of data: normal | laplace | cauchy | huber.
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Weights(args) => cmd_weights(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(CmdError::Estimator { error, output }) => {
            let doc = json!({ "error": error.name(), "message": error.to_string() });
            let text = serde_json::to_string_pretty(&doc).expect("serializable");
            if emit(output.as_deref(), &text).is_err() {
                eprintln!("{text}");
            }
            eprintln!("error: {error}");
            ExitCode::from(3)
        }
    }
}

enum CmdError {
    /// Invalid input or configuration: exit 2.
    Input(Error),
    /// The estimator itself failed: exit 3, JSON error document emitted.
    Estimator { error: Error, output: Option<PathBuf> },
}

fn classify(error: Error, output: Option<&Path>) -> CmdError {
    if error.is_input_error() {
        CmdError::Input(error)
    } else {
        CmdError::Estimator {
            error,
            output: output.map(Path::to_path_buf),
        }
    }
}

fn emit(path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_pair(text: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::BadConfig(format!("{what} wants `a,b`, got `{text}`")));
    }
    let a = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::BadConfig(format!("bad number in {what}: `{}`", parts[0])))?;
    let b = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::BadConfig(format!("bad number in {what}: `{}`", parts[1])))?;
    Ok((a, b))
}

fn cmd_estimate(args: EstimateArgs) -> std::result::Result<(), CmdError> {
    let pairs = read_yz_csv(&args.input).map_err(CmdError::Input)?;
    let view = TwoSampleView::split_sample(pairs).map_err(CmdError::Input)?;
    let (a0, a1) = parse_pair(&args.trim_range, "--trim-range").map_err(CmdError::Input)?;
    if args.report.is_some() || args.model.is_some() {
        return cmd_estimate_parametric(&args, &view);
    }

    let out = args.output.clone();
    let run = || -> Result<(Estimate, tailshift::inference::ConfidenceInterval)> {
        let kind = args.estimator.kind();
        let mut est = match kind {
            EstimatorKind::Means => diff_means(&view),
            EstimatorKind::Medians => {
                let fit0 = fit_adaptive_density(view.control())?;
                let fit1 = fit_adaptive_density(view.treated())?;
                diff_medians(&view, &fit0, &fit1)?
            }
            EstimatorKind::HodgesLehmann => match args.ci {
                CiArg::Analytic => {
                    let fit0 = fit_adaptive_density(view.control())?;
                    hodges_lehmann_with_plugin(&view, &fit0)?
                }
                CiArg::Bootstrap => hodges_lehmann(&view),
            },
            EstimatorKind::Trim => {
                adapt_trim(&view, a0, a1, args.trim_mode.mode(), AdaptKind::Trimmed)?
            }
            EstimatorKind::Wins => {
                adapt_trim(&view, a0, a1, args.trim_mode.mode(), AdaptKind::Winsorized)?
            }
            EstimatorKind::Eif => {
                let mode = match args.eif_mode {
                    EifModeArg::Root => EifMode::Root,
                    EifModeArg::Onestep => EifMode::OneStep,
                };
                eif_estimate(&view, args.split, mode, None, args.seed)?
            }
            EstimatorKind::Waq => waq_estimate(&view, args.split, args.seed)?,
            EstimatorKind::Theta => unreachable!(),
        };
        let ci = match args.ci {
            CiArg::Analytic => normal_ci(&est, args.level)?,
            CiArg::Bootstrap => {
                let m = args.boot_m.unwrap_or(2_000).min(view.n());
                let b = args.boot_b.unwrap_or(200);
                let var = m_of_n_bootstrap_var(
                    &view,
                    |resample| bootstrap_point(resample, kind, &args, a0, a1),
                    m,
                    b,
                    args.seed.wrapping_add(1),
                )?;
                est.var_hat = Some(var);
                normal_ci_from(est.tau_hat, var, args.level, CiSource::Bootstrap)?
            }
        };
        Ok((est, ci))
    };

    let (est, ci) = run().map_err(|e| classify(e, out.as_deref()))?;
    let doc = json!({
        "estimator": est.method,
        "tau_hat": est.tau_hat,
        "var_hat": est.var_hat,
        "ci": ci,
        "diagnostics": est.diagnostics,
        "n0": view.n0(),
        "n1": view.n1(),
        "p": view.p(),
    });
    let text = serde_json::to_string_pretty(&doc).expect("serializable");
    emit(out.as_deref(), &text).map_err(|e| CmdError::Input(Error::BadConfig(e.to_string())))
}

fn bootstrap_point(
    view: &TwoSampleView,
    kind: EstimatorKind,
    args: &EstimateArgs,
    a0: f64,
    a1: f64,
) -> Result<f64> {
    Ok(match kind {
        EstimatorKind::Means => diff_means(view).tau_hat,
        EstimatorKind::Medians => tailshift::classic::diff_medians_point(view),
        EstimatorKind::HodgesLehmann => hodges_lehmann(view).tau_hat,
        EstimatorKind::Trim => {
            adapt_trim(view, a0, a1, args.trim_mode.mode(), AdaptKind::Trimmed)?.tau_hat
        }
        EstimatorKind::Wins => {
            adapt_trim(view, a0, a1, args.trim_mode.mode(), AdaptKind::Winsorized)?.tau_hat
        }
        EstimatorKind::Eif => {
            let mode = match args.eif_mode {
                EifModeArg::Root => EifMode::Root,
                EifModeArg::Onestep => EifMode::OneStep,
            };
            eif_estimate(view, false, mode, None, args.seed)?.tau_hat
        }
        EstimatorKind::Waq => waq_estimate(view, false, args.seed)?.tau_hat,
        EstimatorKind::Theta => unreachable!(),
    })
}

fn cmd_estimate_parametric(
    args: &EstimateArgs,
    view: &TwoSampleView,
) -> std::result::Result<(), CmdError> {
    let report = args.report.unwrap_or(ReportArg::Theta);
    let out = args.output.clone();
    let run = || -> Result<serde_json::Value> {
        let model_arg = args.model.unwrap_or(ModelArg::Additive);
        // The level report estimates the multiplicative parameter through
        // logs; everything else drives the requested model directly.
        if matches!(report, ReportArg::Level) {
            let means = args
                .level_means
                .as_deref()
                .ok_or_else(|| Error::BadConfig("--report level needs --level-means mu0,mu1".into()))?;
            let (mu0, mu1) = parse_pair(means, "--level-means")?;
            let p = args
                .level_p
                .ok_or_else(|| Error::BadConfig("--report level needs --level-p".into()))?;
            if !matches!(model_arg, ModelArg::Multiplicative) {
                return Err(Error::BadConfig(
                    "--report level applies to the multiplicative model".into(),
                ));
            }
            let (log_est, level) = multiplicative_via_logs(view, mu0, mu1, p, args.split, args.seed)?;
            let ci = normal_ci_from(level.tau, level.var, args.level, CiSource::Analytic)?;
            return Ok(json!({
                "estimator": "theta",
                "model": "multiplicative",
                "report": "level",
                "tau_hat": level.tau,
                "var_hat": level.var,
                "tau_log": level.tau_log,
                "var_log": log_est.var_hat,
                "ci": ci,
                "diagnostics": log_est.diagnostics,
                "n0": view.n0(),
                "n1": view.n1(),
                "p": view.p(),
            }));
        }

        let model: &dyn TreatmentModel = match model_arg {
            ModelArg::Additive => &AdditiveModel,
            ModelArg::Multiplicative => &MultiplicativeModel,
        };
        let init = quantile_match_init(view, model, &[0.5])?;
        let theta = one_step_theta(view, &init, model, args.split, args.seed)?;
        let theta_vec = [theta.tau_hat];
        let (value, var_value): (f64, Option<f64>) = match report {
            ReportArg::Theta => (theta.tau_hat, theta.var_hat),
            ReportArg::IsAte => {
                let v = in_sample_ate(view, model, &theta_vec);
                // Variance by m-out-of-n bootstrap of the whole pipeline.
                let m = args.boot_m.unwrap_or(2_000).min(view.n());
                let b = args.boot_b.unwrap_or(200);
                let var = m_of_n_bootstrap_var(
                    view,
                    |resample| {
                        let init = quantile_match_init(resample, model, &[0.5])?;
                        let t = one_step_theta(resample, &init, model, false, args.seed)?;
                        Ok(in_sample_ate(resample, model, &[t.tau_hat]))
                    },
                    m,
                    b,
                    args.seed.wrapping_add(2),
                )?;
                (v, Some(var))
            }
            ReportArg::PopAte => {
                let v = population_ate(view.control(), model, &theta_vec);
                let m = args.boot_m.unwrap_or(2_000).min(view.n());
                let b = args.boot_b.unwrap_or(200);
                let var = m_of_n_bootstrap_var(
                    view,
                    |resample| {
                        let init = quantile_match_init(resample, model, &[0.5])?;
                        let t = one_step_theta(resample, &init, model, false, args.seed)?;
                        Ok(population_ate(resample.control(), model, &[t.tau_hat]))
                    },
                    m,
                    b,
                    args.seed.wrapping_add(3),
                )?;
                (v, Some(var))
            }
            ReportArg::Level => unreachable!(),
        };
        let ci = var_value
            .map(|v| normal_ci_from(value, v, args.level, CiSource::Analytic))
            .transpose()?;
        Ok(json!({
            "estimator": "theta",
            "model": model.name(),
            "report": match report {
                ReportArg::Theta => "theta",
                ReportArg::IsAte => "is-ate",
                ReportArg::PopAte => "pop-ate",
                ReportArg::Level => unreachable!(),
            },
            "tau_hat": value,
            "var_hat": var_value,
            "theta_hat": theta.tau_hat,
            "var_theta": theta.var_hat,
            "ci": ci,
            "diagnostics": theta.diagnostics,
            "n0": view.n0(),
            "n1": view.n1(),
            "p": view.p(),
        }))
    };
    let doc = run().map_err(|e| classify(e, out.as_deref()))?;
    let text = serde_json::to_string_pretty(&doc).expect("serializable");
    emit(out.as_deref(), &text).map_err(|e| CmdError::Input(Error::BadConfig(e.to_string())))
}

fn cmd_simulate(args: SimulateArgs) -> std::result::Result<(), CmdError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CmdError::Input(Error::BadConfig(format!("cannot read config: {e}"))))?;
    let mut spec = ScenarioSpec::parse(&text).map_err(CmdError::Input)?;
    // Reproducibility by default: a seed must come from the config file or
    // the command line, never the wall clock.
    let config_has_seed = text.lines().any(|l| l.trim_start().starts_with("seed"))
        || serde_json::from_str::<serde_json::Value>(&text)
            .map(|v| v.get("seed").is_some())
            .unwrap_or(false);
    match args.seed {
        Some(seed) => spec.seed = seed,
        None if !config_has_seed => {
            return Err(CmdError::Input(Error::BadConfig(
                "simulate needs a seed (config `seed` key or --seed)".into(),
            )))
        }
        None => {}
    }
    spec.validate().map_err(CmdError::Input)?;
    let report = run_scenario(&spec).map_err(|e| classify(e, None))?;
    match &args.output {
        Some(path) => {
            std::fs::write(path, report.to_csv())
                .map_err(|e| CmdError::Input(Error::BadConfig(e.to_string())))?;
            print!("{}", report.to_table());
        }
        None => {
            print!("{}", report.to_csv());
            eprint!("{}", report.to_table());
        }
    }
    eprintln!("wall time: {:.1}s", report.wall_time_secs);
    Ok(())
}

fn cmd_weights(args: WeightsArgs) -> std::result::Result<(), CmdError> {
    let out = args.output.clone();
    let csv = match (&args.input, &args.law) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(CmdError::Input(Error::BadConfig(
                "weights wants exactly one of --input or --law".into(),
            )))
        }
        (None, Some(law_name)) => {
            let law = Law::parse(law_name, args.k1, args.k2).map_err(CmdError::Input)?;
            oracle_weights_csv(&law).map_err(|e| classify(e, out.as_deref()))?
        }
        (Some(path), None) => {
            let pairs = read_yz_csv(path).map_err(CmdError::Input)?;
            let view = TwoSampleView::split_sample(pairs).map_err(CmdError::Input)?;
            estimated_weights_csv(&view).map_err(|e| classify(e, out.as_deref()))?
        }
    };
    emit(out.as_deref(), csv.trim_end()).map_err(|e| CmdError::Input(Error::BadConfig(e.to_string())))
}

/// Closed-form weights on the 999-point grid, normalized to mean one
/// (the figure convention); `w_est` carries the sum-one normalization.
fn oracle_weights_csv(law: &Law) -> Result<String> {
    let mut raw = Vec::with_capacity(999);
    for k in 1..=999 {
        let u = k as f64 / 1000.0;
        match optimal_weight_oracle(law, u)? {
            OracleWeight::Density(w) => raw.push((u, w)),
            OracleWeight::MedianPointMass => {
                return Err(Error::BadLaw(
                    "the efficient weights for this law are a point mass at the median".into(),
                ))
            }
        }
    }
    let mean = raw.iter().map(|(_, w)| w).sum::<f64>() / raw.len() as f64;
    let sum = raw.iter().map(|(_, w)| w).sum::<f64>();
    let mut csv = String::from("u,w,truncated,f_hat,lpsi2,w_est\n");
    for (u, w) in raw {
        let x = law.quantile(u)?;
        csv.push_str(&format!(
            "{},{},false,{},{},{}\n",
            u,
            w / mean,
            law.pdf(x),
            law.lpsi2(x),
            w / sum
        ));
    }
    Ok(csv)
}

/// Estimated weights over the control-arm grid; `w` is mean-one normalized
/// for plotting, `w_est` is the sum-one weight used by the estimator.
fn estimated_weights_csv(view: &TwoSampleView) -> Result<String> {
    let fit0 = fit_adaptive_density(view.control())?;
    let weights = waq_weights(&fit0, view)?;
    let mean_one = weights.mean_one();
    let mut csv = String::from("u,w,truncated,f_hat,lpsi2,w_est\n");
    for (i, &u) in weights.u_grid.iter().enumerate() {
        let x = view.control()[i];
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            u,
            mean_one[i],
            weights.truncated[i],
            fit0.density(x),
            weights.w_tilde[i],
            weights.w[i]
        ));
    }
    Ok(csv)
}
