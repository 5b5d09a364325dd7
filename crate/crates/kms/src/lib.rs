//! Key-management servers for one QKD link.
//!
//! Each side of the link runs a [`KeyServer`]. Generated key is credited to both, side A
//! issues keys to its SAE and mirrors every allocation to B before answering, and B
//! serves them by ID. [`KmsPair`] runs both in process; [`http`] exposes one server over
//! an ETSI GS QKD 014-style REST API and [`client`] talks to it.

pub mod api;
pub mod client;
pub mod error;
pub mod http;
pub mod keystream;
pub mod ledger;
pub mod pair;
pub mod server;

use uuid::Uuid;

pub use client::{HttpKmsClient, HttpPairFeed};
pub use error::KmsError;
pub use ledger::{KeyState, LedgerEvent, LedgerState, Role};
pub use pair::KmsPair;
pub use server::{KeyBlock, KeyServer, PersistConfig, Result, ServerConfig};

/// What terminal A needs: fresh keys of a given size.
pub trait KeyRequester: Send + Sync {
    fn get_key(&self, size_bits: u64) -> Result<KeyBlock>;
}

/// What terminal B needs: the key matching an ID.
pub trait KeyResolver: Send + Sync {
    fn get_key_by_id(&self, key_id: Uuid) -> Result<KeyBlock>;
}

/// Link-side control of both servers: credits from the key generator and failure injection.
pub trait PoolFeed: Send + Sync {
    fn credit(&self, t_ns: u64, bits: u64) -> Result<()>;
    fn inject_failure(&self, t_ns: u64) -> Result<()>;
    fn restore(&self, t_ns: u64) -> Result<()>;
    fn available_bits(&self) -> Result<u64>;
    /// Moves the simulated clock used to stamp ledger events.
    fn advance_to(&self, t_ns: u64) -> Result<()>;
}
