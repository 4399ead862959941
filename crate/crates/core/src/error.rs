use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("simulation fault at t={time}: {detail}")]
    SimulationFault { time: f64, detail: String },
    #[error("step size too large: {0}")]
    StepSize(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("metric unavailable: {0}")]
    MetricUnavailable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
