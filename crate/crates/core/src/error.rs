use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("unsupported joint type `{kind}` on joint `{joint}`")]
    UnsupportedJointType { joint: String, kind: String },

    #[error("revolute joint `{0}` has no <limit lower upper>")]
    MissingLimit(String),

    #[error("kinematic cycle detected at link `{0}`")]
    Cycle(String),

    #[error("frame role `{role}` does not resolve to a link ({reason})")]
    UnresolvedRole { role: String, reason: String },

    #[error("unknown frame role `{0}`")]
    UnknownRole(String),

    #[error("malformed XML: {0}")]
    MalformedXml(String),

    #[error("invalid objective config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("objective is not finite at the start point")]
    NonFiniteObjective,

    #[error("record {index}: {message}")]
    Schema { index: usize, message: String },

    #[error("unsupported format_version `{0}`")]
    UnsupportedVersion(String),

    #[error("no frames")]
    NoFrames,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
