use std::fmt;

/// Errors surfaced by the simulation layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter or input is outside its mathematical domain.
    DomainError(String),
    /// A chaotic state left the escape radius; the trajectory is diverging.
    /// `sample` is set when the failure occurred inside a batch run.
    EscapeRadiusExceeded { norm: f64, sample: Option<usize> },
    /// Requested FM deviation does not fit inside one channel.
    DeviationExceedsChannel { deviation_hz: f64, limit_hz: f64 },
    /// Transmitter and receiver states had not converged when the link started.
    SyncNotReached { error: f64, tol: f64 },
    /// Two sequences that must agree in length do not.
    LengthMismatch(String),
    /// A lookup index is outside the table.
    IndexOutOfRange { index: u32, min: u32, max: u32 },
    /// A noise specification does not pin down a variance.
    SpecIncomplete(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DomainError(msg) => write!(f, "domain error: {msg}"),
            Error::EscapeRadiusExceeded { norm, sample: Some(i) } => {
                write!(f, "escape radius exceeded at sample {i}: |x| = {norm:e}")
            }
            Error::EscapeRadiusExceeded { norm, sample: None } => {
                write!(f, "escape radius exceeded: |x| = {norm:e}")
            }
            Error::DeviationExceedsChannel { deviation_hz, limit_hz } => {
                write!(
                    f,
                    "FM deviation {deviation_hz} Hz exceeds channel half-width {limit_hz} Hz"
                )
            }
            Error::SyncNotReached { error, tol } => {
                write!(f, "sync error {error:e} above tolerance {tol:e} at link start")
            }
            Error::LengthMismatch(msg) => write!(f, "length mismatch: {msg}"),
            Error::IndexOutOfRange { index, min, max } => {
                write!(f, "index {index} outside [{min}, {max}]")
            }
            Error::SpecIncomplete(msg) => write!(f, "incomplete specification: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
