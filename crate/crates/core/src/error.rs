//! Error type shared by all estimation routines.

use thiserror::Error;

/// Errors surfaced by the estimators and their supporting machinery.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// One of the two arms has no observations.
    #[error("EmptyArm: arm {arm} has no observations")]
    EmptyArm { arm: u8 },

    /// An outcome is NaN or infinite.
    #[error("NonFinite: outcome at position {index} is not finite")]
    NonFinite { index: usize },

    /// A treatment indicator is neither 0 nor 1.
    #[error("BadIndicator: z = {z} at position {index} (expected 0 or 1)")]
    BadIndicator { z: f64, index: usize },

    /// A quantile level outside (0, 1].
    #[error("BadQuantile: u = {u} outside (0, 1]")]
    BadQuantile { u: f64 },

    /// The 5%-95% quantile range collapsed; no usable scale.
    #[error("DegenerateScale: 0.05 and 0.95 quantiles coincide")]
    DegenerateScale,

    /// Too few observations for the requested operation.
    #[error("TooFewPoints: got {got}, need at least {need}")]
    TooFewPoints { got: usize, need: usize },

    /// Trim fractions violate alpha, beta in [0, 1/2), alpha + beta < 1.
    #[error("BadTrim: alpha = {alpha}, beta = {beta}")]
    BadTrim { alpha: f64, beta: f64 },

    /// Invalid distribution parameters.
    #[error("BadParams: {0}")]
    BadParams(String),

    /// A density value needed in a denominator is at or below the floor.
    #[error("DegenerateDensity: estimated density {value:e} at x = {at} is below floor")]
    DegenerateDensity { value: f64, at: f64 },

    /// Estimated Fisher information is not strictly positive.
    #[error("DegenerateInfo: information estimate {0} is not positive")]
    DegenerateInfo(f64),

    /// Every weighted-average-quantile weight was truncated to zero.
    #[error("AllTruncated: all weights removed by the truncation rule")]
    AllTruncated,

    /// An estimate has no variance attached where one is required.
    #[error("MissingVariance: estimate carries no variance")]
    MissingVariance,

    /// Too many bootstrap replicates failed.
    #[error("ResampleFailure: {failed} of {total} resamples errored")]
    ResampleFailure { failed: usize, total: usize },

    /// Unknown or unsupported distribution name.
    #[error("BadLaw: {0}")]
    BadLaw(String),

    /// Root finding / Newton iteration did not converge.
    #[error("NoSolution: residual {residual:e} after {iterations} iterations")]
    NoSolution { residual: f64, iterations: usize },

    /// Numerical quadrature failed to converge.
    #[error("NonIntegrable: quadrature did not converge ({0})")]
    NonIntegrable(String),

    /// Invalid configuration (scenario files, CLI-level validation).
    #[error("BadConfig: {0}")]
    BadConfig(String),
}

impl Error {
    /// Stable short name of the error variant (used in machine-readable
    /// output).
    pub fn name(&self) -> &'static str {
        match self {
            Error::EmptyArm { .. } => "EmptyArm",
            Error::NonFinite { .. } => "NonFinite",
            Error::BadIndicator { .. } => "BadIndicator",
            Error::BadQuantile { .. } => "BadQuantile",
            Error::DegenerateScale => "DegenerateScale",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::BadTrim { .. } => "BadTrim",
            Error::BadParams(_) => "BadParams",
            Error::DegenerateDensity { .. } => "DegenerateDensity",
            Error::DegenerateInfo(_) => "DegenerateInfo",
            Error::AllTruncated => "AllTruncated",
            Error::MissingVariance => "MissingVariance",
            Error::ResampleFailure { .. } => "ResampleFailure",
            Error::BadLaw(_) => "BadLaw",
            Error::NoSolution { .. } => "NoSolution",
            Error::NonIntegrable(_) => "NonIntegrable",
            Error::BadConfig(_) => "BadConfig",
        }
    }

    /// True when the error reflects bad input or configuration rather than
    /// a failure inside an estimator.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyArm { .. }
                | Error::NonFinite { .. }
                | Error::BadIndicator { .. }
                | Error::BadQuantile { .. }
                | Error::TooFewPoints { .. }
                | Error::BadTrim { .. }
                | Error::BadParams(_)
                | Error::BadLaw(_)
                | Error::BadConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
