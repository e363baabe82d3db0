use thiserror::Error;

use crate::model::Legality;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid block width {0} (expected 0.6, 1.2 or 1.8)")]
    InvalidWidth(f64),

    #[error("geometry is empty")]
    EmptyGeometry,

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("illegal action at x={x}, layer={layer}: {verdict:?}")]
    IllegalAction { x: f64, layer: i32, verdict: Legality },

    #[error("no blocks remaining in decision state")]
    NoRemainingBlocks,

    #[error("block {0} has no support below it")]
    Unsupported(usize),

    #[error("support graph is not a forest; chain oracle not applicable")]
    NotApplicable,

    #[error("classifier is untrained")]
    UntrainedModel,

    #[error("training diverged at epoch {epoch}: loss={loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("trace replay diverged at step {step}: {reason}")]
    ReplayDivergence { step: usize, reason: String },

    #[error("likelihood report has no `{0}` baseline rows")]
    MissingBaseline(String),

    #[error("unsupported format tag `{0}`")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown session {0}")]
    SessionNotFound(String),

    #[error("session {0} is no longer active")]
    SessionClosed(String),

    #[error("event log is inconsistent: {0}")]
    EventLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
