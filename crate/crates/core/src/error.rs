use thiserror::Error;

/// Errors raised by the curvature-function, geometry, flow and monitor code.
///
/// Numeric payloads are stored as `f64` so the error type does not depend on
/// the scalar instantiation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("component {index} of the curvature vector is {value}, outside the positive cone")]
    NotAdmissible { index: usize, value: f64 },

    #[error("matrix spectrum {spectrum:?} is not in the positive cone")]
    SpectrumNotAdmissible { spectrum: Vec<f64> },

    #[error("admissibility lost at node {node}: smallest eigenvalue of the convexity matrix is {min_eig}")]
    AdmissibilityLost { node: usize, min_eig: f64 },

    #[error("time step underflow at t = {t}: no admissible step down to dt = {dt}")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
