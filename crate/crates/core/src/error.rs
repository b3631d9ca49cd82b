use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Steady-state mass near the top of the number basis is too large.
    #[error("photon-number truncation inadequate: tail mass {tail_mass:.3e} at n_max = {n_max}; raise n_max")]
    Truncation { n_max: usize, tail_mass: f64 },

    #[error("no fixed point of G - L on [0, {n_scan_max}]")]
    NoFixedPoint { n_scan_max: f64 },

    #[error("fixed point at n0 = {n0} is unstable")]
    UnstableFixedPoint { n0: f64 },

    #[error("correlation undefined: mean photon number is zero")]
    UndefinedCorrelation,

    #[error("normalization undefined: {0}")]
    UndefinedNormalization(String),

    #[error("integration failed: {0}")]
    Stiffness(String),

    #[error("timestamps not sorted: first inversion at index {index}")]
    Unsorted { index: usize },

    #[error(
        "fit did not converge after {iterations} iterations (C0 = {c0:e}, tau_c = {tau_c:e} s)"
    )]
    FitNonConvergence {
        iterations: usize,
        c0: f64,
        tau_c: f64,
    },

    #[error("insufficient data for fit: {0}")]
    InsufficientData(String),

    #[error("photon number reached n_max = {n_max} at t = {time:e} s; raise n_max")]
    PhotonCap { n_max: usize, time: f64 },

    #[error("malformed timestamp file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Broad category used by front ends to pick an exit status.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorKind::Config,
            Error::Io(_) | Error::Format(_) => ErrorKind::Io,
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}
