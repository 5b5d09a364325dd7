use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum KmsError {
    #[error("key pool exhausted: requested {requested} bits, {available} available")]
    Exhausted { requested: u64, available: u64 },

    #[error("unknown key id {0}")]
    UnknownId(Uuid),

    #[error("key {0} already consumed by this role")]
    AlreadyConsumed(Uuid),

    #[error("bad request: {0}")]
    Malformed(String),

    #[error("peer servers out of sync: {0}")]
    Desync(String),

    #[error("peer unavailable: {0}")]
    PeerUnavailable(String),

    #[error("persistence error: {0}")]
    Io(String),
}

impl KmsError {
    /// HTTP status used on the key-delivery API.
    pub fn status(&self) -> u16 {
        match self {
            KmsError::Exhausted { .. } => 503,
            KmsError::UnknownId(_) => 404,
            KmsError::AlreadyConsumed(_) => 409,
            KmsError::Malformed(_) => 400,
            KmsError::Desync(_) => 409,
            KmsError::PeerUnavailable(_) => 502,
            KmsError::Io(_) => 500,
        }
    }
}

impl From<std::io::Error> for KmsError {
    fn from(e: std::io::Error) -> Self {
        KmsError::Io(e.to_string())
    }
}
