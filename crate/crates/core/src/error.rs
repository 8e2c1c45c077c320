use thiserror::Error;

/// Everything that can go wrong in this crate, minus panics (which are
/// reserved for internal logic bugs).
#[derive(Debug, Error)]
pub enum SgmmError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("component {index} not positive definite (det = {det:e})")]
    NonPositiveDefinite { index: usize, det: f64 },

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("all {total} components fall below the weight threshold {threshold:e}")]
    AllComponentsFiltered { total: usize, threshold: f64 },

    #[error("map is constant; {context} is undefined")]
    ConstantMap { context: &'static str },

    #[error("map has zero total mass; {context} is undefined")]
    ZeroMap { context: &'static str },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no negative fixations supplied for shuffled AUC")]
    MissingNegatives,

    #[error("optimization diverged at step {step} (loss = {loss})")]
    DivergenceDetected { step: usize, loss: f64 },

    #[error("{path}:{line}: {msg}")]
    ParseError { path: String, line: usize, msg: String },

    #[error("{path}:{line}: point ({u}, {v}) out of canvas bounds {width}x{height}")]
    BoundsError { path: String, line: usize, u: f64, v: f64, width: u32, height: u32 },

    #[error("{path}: {msg}")]
    FormatError { path: String, msg: String },

    #[error("{context}: {source}")]
    IoError { context: String, source: std::io::Error },
}

impl SgmmError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        SgmmError::IoError { context: context.into(), source }
    }

    /// Coarse category used by the CLI to pick an exit code: bad data vs
    /// filesystem/format trouble vs an optimizer blowing up.
    pub fn kind(&self) -> ErrorKind {
        match self {
            SgmmError::IoError { .. }
            | SgmmError::ParseError { .. }
            | SgmmError::BoundsError { .. }
            | SgmmError::FormatError { .. } => ErrorKind::Io,
            SgmmError::DivergenceDetected { .. } => ErrorKind::Divergence,
            _ => ErrorKind::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Divergence,
}

pub type Result<T> = std::result::Result<T, SgmmError>;
