use thiserror::Error;

use crate::AgentId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("model configuration: {0}")]
    Model(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A covariance or information matrix could not be factored even after jitter.
    #[error("covariance conditioning failed in {0}")]
    Conditioning(&'static str),

    /// The innovation covariance used for input estimation is numerically singular.
    #[error("input estimation degenerate: {0}")]
    EstimationDegenerate(&'static str),

    #[error("neighborhood of agent {0} does not contain the agent itself")]
    MissingSelf(AgentId),

    #[error("second exchange attempted at step {0}")]
    SecondExchange(usize),

    #[error("invalid packet: {0}")]
    Packet(String),

    #[error("config: {0}")]
    Config(String),

    #[error("harness: {0}")]
    Harness(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
