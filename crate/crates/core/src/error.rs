//! Error type shared by every analysis module.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input failed structural validation (bad value, missing field, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// S-parameter conversion denominator vanished.
    #[error("numerical degeneracy at {freq_hz} Hz: {what}")]
    Degenerate { freq_hz: f64, what: String },

    /// Reflection denominator vanished: the termination sits on the
    /// parametric oscillation threshold at this frequency.
    #[error("reflection pole at {freq_hz} Hz (|denominator| = {magnitude:e})")]
    Pole { freq_hz: f64, magnitude: f64 },

    /// Synthesis produced a non-positive element.
    #[error("infeasible synthesis: {element} = {value:e} (short by {deficit:e})")]
    Infeasible {
        element: String,
        value: f64,
        deficit: f64,
    },

    /// An iteration failed to settle.
    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    /// The gain profile never reaches 3 dB.
    #[error("profile peak {peak_db:.3} dB is below 3 dB")]
    NoGain { peak_db: f64 },

    /// Not enough compliant points for a power-law fit.
    #[error("insufficient data for the {trace} trace: {detail}")]
    InsufficientData { trace: String, detail: String },

    /// Combinatorial expansion exceeds the supported size.
    #[error("order cap exceeded: {0}")]
    OrderCap(String),

    /// Time step too coarse for the fastest resonator.
    #[error("undersampled: timestep {timestep_s:e} s exceeds {limit_s:e} s")]
    Undersampled { timestep_s: f64, limit_s: f64 },

    /// Noise-budget inversion produced a negative photon number.
    #[error("inconsistent measurement: {quantity} = {value}")]
    InconsistentMeasurement { quantity: String, value: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Coarse failure class, used by front ends to pick exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_)
            | Error::Invalid(_)
            | Error::InsufficientData { .. }
            | Error::OrderCap(_)
            | Error::Undersampled { .. }
            | Error::InconsistentMeasurement { .. }
            | Error::Io(_) => ErrorClass::Validation,
            Error::Degenerate { .. }
            | Error::Pole { .. }
            | Error::NonConvergence { .. }
            | Error::NoGain { .. } => ErrorClass::Numerical,
            Error::Infeasible { .. } => ErrorClass::Infeasible,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Infeasible,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Invalid(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
