use thiserror::Error;

use crate::neural::TrainReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate uplink channel")]
    DegenerateUplink,

    #[error("no ZF degrees of freedom")]
    NoZfDof,

    #[error("downlink in SI null space")]
    DownlinkInNullSpace,

    #[error("{0}")]
    ModeMismatch(&'static str),

    #[error("instance too large for enumeration: {0}")]
    InstanceTooLarge(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize, report: Box<TrainReport> },

    #[error("model format: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
