use qkdlink_core::crypto::CryptoError;
use qkdlink_kms::KmsError;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HarnessError {
    #[error(transparent)]
    Kms(#[from] KmsError),

    #[error(transparent)]
    Crypto(#[from] CryptoError),

    #[error("cycle {cycle}: decrypted payload differs from the source")]
    Integrity { cycle: u64 },

    #[error("frame authentication failed")]
    Auth,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<qkdlink_core::CoreError> for HarnessError {
    fn from(e: qkdlink_core::CoreError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
