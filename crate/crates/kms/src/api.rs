//! JSON bodies of the key-delivery, peer and admin endpoints.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::KmsError;
use crate::ledger::Role;
use crate::server::PendingKey;

pub const DEFAULT_KEY_SIZE_BITS: u64 = 256;
pub const MAX_KEY_PER_REQUEST: u64 = 1024;
pub const MAX_KEY_SIZE_BITS: u64 = 1 << 20;
pub const MIN_KEY_SIZE_BITS: u64 = 8;

fn one() -> u64 {
    1
}

fn default_size() -> u64 {
    DEFAULT_KEY_SIZE_BITS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRequest {
    #[serde(default = "one")]
    pub number: u64,
    #[serde(default = "default_size")]
    pub size: u64,
}

impl Default for KeyRequest {
    fn default() -> Self {
        Self {
            number: 1,
            size: DEFAULT_KEY_SIZE_BITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyIdEntry {
    #[serde(rename = "key_ID")]
    pub key_id: Uuid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyIdsRequest {
    #[serde(rename = "key_IDs")]
    pub key_ids: Vec<KeyIdEntry>,
}

impl KeyIdsRequest {
    pub fn new(ids: impl IntoIterator<Item = Uuid>) -> Self {
        Self {
            key_ids: ids.into_iter().map(|key_id| KeyIdEntry { key_id }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    #[serde(rename = "key_ID")]
    pub key_id: Uuid,
    /// Base64 key bytes.
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyContainer {
    pub keys: Vec<KeyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct StatusResponse {
    pub source_KME_ID: String,
    pub target_KME_ID: String,
    pub master_SAE_ID: String,
    pub slave_SAE_ID: String,
    pub key_size: u64,
    pub stored_key_count: u64,
    pub max_key_count: u64,
    pub max_key_per_request: u64,
    pub max_key_size: u64,
    pub min_key_size: u64,
    pub max_SAE_ID_count: u64,
    pub available_bits: u64,
    pub credited_bits: u64,
    pub debited_bits: u64,
    pub failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorEntry {
    #[serde(rename = "key_ID")]
    pub key_id: Uuid,
    pub offset_bytes: u64,
    pub bits: u64,
}

impl From<PendingKey> for MirrorEntry {
    fn from(p: PendingKey) -> Self {
        Self {
            key_id: p.key_id,
            offset_bytes: p.offset_bytes,
            bits: p.bits,
        }
    }
}

impl From<MirrorEntry> for PendingKey {
    fn from(m: MirrorEntry) -> Self {
        Self {
            key_id: m.key_id,
            offset_bytes: m.offset_bytes,
            bits: m.bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorRequest {
    pub from: Role,
    pub t_ns: u64,
    pub keys: Vec<MirrorEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CreditRequest {
    pub bits: u64,
    #[serde(default)]
    pub t_ns: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimeRequest {
    #[serde(default)]
    pub t_ns: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditResponse {
    pub credited: bool,
    pub available_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub message: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available: Option<u64>,
    #[serde(rename = "key_ID", default, skip_serializing_if = "Option::is_none")]
    pub key_id: Option<Uuid>,
}

impl From<&KmsError> for ErrorBody {
    fn from(e: &KmsError) -> Self {
        let mut body = ErrorBody {
            message: e.to_string(),
            code: String::new(),
            requested: None,
            available: None,
            key_id: None,
        };
        body.code = match e {
            KmsError::Exhausted { requested, available } => {
                body.requested = Some(*requested);
                body.available = Some(*available);
                "EXHAUSTED"
            }
            KmsError::UnknownId(id) => {
                body.key_id = Some(*id);
                "UNKNOWN_ID"
            }
            KmsError::AlreadyConsumed(id) => {
                body.key_id = Some(*id);
                "ALREADY_CONSUMED"
            }
            KmsError::Malformed(_) => "MALFORMED",
            KmsError::Desync(_) => "DESYNC",
            KmsError::PeerUnavailable(_) => "PEER_UNAVAILABLE",
            KmsError::Io(_) => "IO",
        }
        .into();
        body
    }
}

impl ErrorBody {
    /// Reconstructs the error a remote server reported.
    pub fn into_error(self) -> KmsError {
        let inner = |m: &str| m.split_once(": ").map_or(m, |(_, rest)| rest).to_string();
        match (self.code.as_str(), self.key_id) {
            ("EXHAUSTED", _) => KmsError::Exhausted {
                requested: self.requested.unwrap_or(0),
                available: self.available.unwrap_or(0),
            },
            ("UNKNOWN_ID", Some(id)) => KmsError::UnknownId(id),
            ("ALREADY_CONSUMED", Some(id)) => KmsError::AlreadyConsumed(id),
            ("MALFORMED", _) => KmsError::Malformed(inner(&self.message)),
            ("DESYNC", _) => KmsError::Desync(inner(&self.message)),
            ("PEER_UNAVAILABLE", _) => KmsError::PeerUnavailable(inner(&self.message)),
            ("IO", _) => KmsError::Io(inner(&self.message)),
            _ => KmsError::Malformed(self.message),
        }
    }
}
