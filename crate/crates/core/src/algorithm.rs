use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Symmetric schemes used to protect telemetry with QKD key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Otp,
    Aes256,
    Ascon128,
    Ascon128a,
    Ascon80pq,
}

/// Key and IV/nonce sizing of a cipher. OTP key size follows the plaintext.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CipherSpec {
    pub algorithm: Algorithm,
    /// `None` for OTP, where the key is as long as the message.
    pub key_bits: Option<u32>,
    pub iv_or_nonce_bits: u32,
    pub aead: bool,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Otp,
        Algorithm::Aes256,
        Algorithm::Ascon128,
        Algorithm::Ascon128a,
        Algorithm::Ascon80pq,
    ];

    pub fn spec(self) -> CipherSpec {
        let (key_bits, iv_or_nonce_bits, aead) = match self {
            Algorithm::Otp => (None, 0, false),
            Algorithm::Aes256 => (Some(256), 128, false),
            Algorithm::Ascon128 | Algorithm::Ascon128a => (Some(128), 128, true),
            Algorithm::Ascon80pq => (Some(160), 128, true),
        };
        CipherSpec {
            algorithm: self,
            key_bits,
            iv_or_nonce_bits,
            aead,
        }
    }

    /// Key plus IV/nonce bits drawn from the pool per encryption, for fixed-key ciphers.
    pub fn fixed_key_material_bits(self) -> Option<u64> {
        let spec = self.spec();
        spec.key_bits
            .map(|k| u64::from(k) + u64::from(spec.iv_or_nonce_bits))
    }

    /// Wire tag used in the envelope header.
    pub fn wire_tag(self) -> u8 {
        match self {
            Algorithm::Otp => 0x01,
            Algorithm::Aes256 => 0x02,
            Algorithm::Ascon128 => 0x03,
            Algorithm::Ascon128a => 0x04,
            Algorithm::Ascon80pq => 0x05,
        }
    }

    pub fn from_wire_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.wire_tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Otp => "otp",
            Algorithm::Aes256 => "aes256",
            Algorithm::Ascon128 => "ascon128",
            Algorithm::Ascon128a => "ascon128a",
            Algorithm::Ascon80pq => "ascon80pq",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| CoreError::Config(format!("unknown algorithm `{s}`")))
    }
}
