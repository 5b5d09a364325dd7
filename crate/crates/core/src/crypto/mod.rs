//! Cipher backends and the telemetry byte formats.
//!
//! The block cipher and AEAD primitives come from the RustCrypto `aes`/`cbc` and
//! `ascon-aead` crates; this module fixes the sizes, error mapping and wire layout.

mod aes;
mod ascon;
mod codec;
mod envelope;
mod otp;

use thiserror::Error;

pub use self::aes::{aes256_decrypt, aes256_encrypt, AES_BLOCK_BYTES};
pub use self::ascon::{ascon_decrypt, ascon_encrypt, ASCON_TAG_BYTES};
pub use codec::{decode_signals, encode_signals, encode_signals_lossy};
pub use envelope::{associated_data, material_bytes, open, seal, CipherEnvelope};
pub use otp::{otp_decrypt, otp_encrypt};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("{what} must be {expected} bytes, got {got}")]
    Size {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("integrity check failed")]
    Integrity,

    #[error("unsupported precision {0} bits")]
    Precision(u32),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("algorithm {0} is not supported by this operation")]
    Unsupported(crate::Algorithm),

    #[error("malformed envelope: {0}")]
    Malformed(String),
}
