//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two buffers that must share dimensions do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter is outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A wavelet pyramid's bands are inconsistent with its metadata.
    #[error("invalid pyramid structure: {0}")]
    Structure(String),

    /// Solver configuration violates the step-size or parameter constraints.
    #[error("invalid solver configuration: {0}")]
    Config(String),

    /// The iteration produced non-finite values.
    #[error("solver diverged: {0}")]
    Divergence(String),

    /// A diagnostic inner minimization ran out of budget.
    #[error("inner minimization did not converge within {iters} iterations (residual {residual:e})")]
    InnerLoop { iters: usize, residual: f64 },

    /// A file's contents do not match the expected format.
    #[error("malformed file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
