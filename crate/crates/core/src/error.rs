use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite state encountered in {context}")]
    NonFiniteState { context: &'static str },

    #[error("degenerate contact: E2 D^-1 E2^T is singular (|det| = {det:e})")]
    DegenerateContact { det: f64 },

    #[error("actuation singularity: |det B_e| = {det:e} below floor {floor:e}")]
    ActuationSingularity { det: f64, floor: f64 },

    #[error("swing phase exceeded {limit} s without reaching the switching surface")]
    StepTimeout { limit: f64 },

    #[error("robot fell over: |q1| = {q1:.4} rad, |q2| = {q2:.4} rad")]
    FellOver { q1: f64, q2: f64 },

    #[error("swing foot penetrated the surface by {depth:.4e} m (tolerance {tol:.4e} m)")]
    Scuffing { depth: f64, tol: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last distance {last_distance:e})")]
    NoConvergence {
        iterations: usize,
        last_distance: f64,
    },

    #[error("gait aborted ({kind}): {message}")]
    GaitAbort { kind: String, message: String },

    #[error("config parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },

    #[error("config validation failed for {}: {}", keys.join(", "), messages.join("; "))]
    Validation {
        keys: Vec<String>,
        messages: Vec<String>,
    },

    #[error("io error on {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Short machine-readable tag used in step records and sweep tables.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::NonFiniteState { .. } => "non_finite_state",
            Error::DegenerateContact { .. } => "degenerate_contact",
            Error::ActuationSingularity { .. } => "actuation_singularity",
            Error::StepTimeout { .. } => "step_timeout",
            Error::FellOver { .. } => "fell_over",
            Error::Scuffing { .. } => "scuffing",
            Error::StepSizeUnderflow { .. } => "step_size_underflow",
            Error::NoConvergence { .. } => "no_convergence",
            Error::GaitAbort { .. } => "gait_abort",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Io { .. } => "io",
        }
    }
}
