use thiserror::Error;

/// Errors raised by the physics, synthesis and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain an operation is defined on.
    #[error("{quantity} = {value} is outside the valid range {range}")]
    Domain {
        quantity: &'static str,
        value: f64,
        range: &'static str,
    },

    /// A malformed argument (wrong parity, empty input, non-positive value).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Inconsistent experiment or interferometer configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The adaptive integrator could not make progress.
    #[error("integration failed at t = {time:e} s: {reason}")]
    Integration { time: f64, reason: String },

    /// A linear solve was singular beyond the trace constraint.
    #[error("singular system: {0}")]
    Singular(String),

    /// Interferometer calibration could not be established.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// Detector voltages that cannot come from the interferometer model.
    #[error("unphysical detector data: {0}")]
    Unphysical(String),

    /// Trace segmentation failed (no control markers).
    #[error("segmentation error: {0}")]
    Segmentation(String),

    /// A required control-off reference was not supplied.
    #[error("missing control-off reference: {0}")]
    Reference(String),

    /// Trace serialization or parsing failure.
    #[error("trace format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Wraps an integration failure with the velocity class it occurred in.
    pub fn in_velocity_class(self, velocity: f64) -> Self {
        match self {
            Error::Integration { time, reason } => Error::Integration {
                time,
                reason: format!("{reason} (velocity class v = {velocity} m/s)"),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
