//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("mode count on axis {axis} must be even and >= 4, got {n}")]
    BadModeCount { axis: usize, n: usize },
    #[error("box length on axis {axis} must be positive and finite, got {l}")]
    BadBoxLength { axis: usize, l: f64 },
    #[error("dealias fraction must lie in (0, 1], got {0}")]
    BadDealiasFraction(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("sample array shape {got:?} does not match grid shape {want:?}")]
    ShapeMismatch { got: [usize; 3], want: [usize; 3] },
    #[error("fields live on different grids")]
    GridMismatch,
}

#[derive(Debug, Error, PartialEq)]
pub enum NormError {
    /// Requesting a negative horizontal power on a field with horizontal-mean
    /// content: the norm diverges instead of being regularized.
    #[error(
        "ill-posed negative horizontal norm: mode with xi_h = 0 carries magnitude {magnitude:e} \
         above tolerance {tol:e}"
    )]
    IllPosed { magnitude: f64, tol: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("solution blew up: non-finite coefficient detected at t = {t}")]
    BlowUp { t: f64 },
    #[error("time step {dt} exceeds the advective stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("state times are inconsistent: next.t = {next_t} but prev.t + dt = {expected}")]
    TimeMismatch { next_t: f64, expected: f64 },
    #[error("series window [{t0}, {t1}] holds {got} samples, need at least {need}")]
    TooFewSamples { t0: f64, t1: f64, got: usize, need: usize },
    #[error("nonpositive value {value} at t = {t} inside the fit window")]
    NonpositiveValue { t: f64, value: f64 },
    #[error("series samples must be strictly increasing in time")]
    NonMonotoneTime,
    #[error("series carries no negative-norm entries (horizontal-mean-free data required)")]
    MissingNegativeNorms,
    #[error(transparent)]
    Norm(#[from] NormError),
}

#[derive(Debug, Error, PartialEq)]
pub enum InequalityError {
    #[error("exponent q must lie in [2, inf], got {0}")]
    BadExponent(f64),
    #[error("smoothness s = {s} must exceed 1/2 - 1/q = {min}")]
    BadSmoothness { s: f64, min: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("invalid ledger configuration: {0}")]
    BadConfig(String),
    #[error("step size too large: state became nonpositive at t = {t}")]
    StepTooLarge { t: f64 },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes: expected \"MMP1\", got {0:?}")]
    BadMagic([u8; 4]),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("checkpoint payload truncated")]
    Truncated,
    #[error("checkpoint carries invalid parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config text is empty; required sections: {0}")]
    Empty(&'static str),
    #[error("config parse failure: {0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Range { field: &'static str, reason: String },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
