use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: missing required payload field `{field}` for {event_type}")]
    MissingField {
        line: usize,
        field: &'static str,
        event_type: &'static str,
    },

    #[error("streamer not found in match: `{streamer}`")]
    StreamerNotFound { streamer: String },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("no events")]
    NoEvents,

    #[error("need at least {need} distinct matches, found {have}")]
    TooFewMatches { have: usize, need: usize },

    #[error("need at least 2 streamers for leave-one-streamer-out, found {0}")]
    TooFewStreamers(usize),

    #[error("degenerate class distribution ({high} high, {low} low)")]
    DegenerateClasses { high: usize, low: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input value at index {0}")]
    NonFinite(usize),

    #[error("divergence: loss became non-finite in epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("model document rejected: {0}")]
    ModelFormat(String),

    #[error("silhouette undefined for a single cluster")]
    SilhouetteUndefined,

    #[error("all grid cells are infeasible")]
    AllCellsInfeasible,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
