use thiserror::Error;

/// Errors raised by the spectral contour solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The curve is too close to self-intersection for the velocity
    /// integrals to be trusted.
    #[error("degenerate curve: chord ratio {ratio:.3e} between s1={s1:.6} and s2={s2:.6}")]
    Degenerate { s1: f64, s2: f64, ratio: f64 },

    #[error("singular input: {0}")]
    Singular(String),

    #[error("solution blew up at t={t}: {detail}")]
    BlowUp { t: f64, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
