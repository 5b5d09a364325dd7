//! In-process server pair with synchronous forward-on-serve.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use uuid::Uuid;

use crate::error::KmsError;
use crate::ledger::{LedgerState, Role};
use crate::server::{KeyBlock, KeyServer, Result};
use crate::{KeyRequester, KeyResolver, PoolFeed};

/// Servers A (master, issues keys) and B (serves them by ID).
///
/// Serving locks A then B, so an issue and its mirror on B are one atomic step; credits
/// take both locks in the same order and reach B first.
pub struct KmsPair {
    a: Mutex<KeyServer>,
    b: Mutex<KeyServer>,
    now_ns: AtomicU64,
}

impl KmsPair {
    pub fn new(link_seed: u64) -> Self {
        Self::from_servers(KeyServer::in_memory(Role::A, link_seed), KeyServer::in_memory(Role::B, link_seed))
            .expect("roles match")
    }

    pub fn from_servers(a: KeyServer, b: KeyServer) -> Result<Self> {
        if a.role() != Role::A || b.role() != Role::B {
            return Err(KmsError::Malformed("pair needs servers with roles A and B".into()));
        }
        let now = a.state().last_timestamp_ns.max(b.state().last_timestamp_ns);
        Ok(Self {
            a: Mutex::new(a),
            b: Mutex::new(b),
            now_ns: AtomicU64::new(now),
        })
    }

    /// Advances the pair's clock (never backwards).
    pub fn set_time(&self, t_ns: u64) {
        self.now_ns.fetch_max(t_ns, Ordering::SeqCst);
    }

    pub fn now_ns(&self) -> u64 {
        self.now_ns.load(Ordering::SeqCst)
    }

    fn lock(m: &Mutex<KeyServer>) -> std::sync::MutexGuard<'_, KeyServer> {
        m.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn credit_at(&self, t_ns: u64, bits: u64) -> Result<bool> {
        self.set_time(t_ns);
        let mut a = Self::lock(&self.a);
        let mut b = Self::lock(&self.b);
        let t = self.now_ns();
        let credited_b = b.credit(t, bits)?;
        let credited_a = a.credit(t, bits)?;
        if credited_a != credited_b {
            return Err(KmsError::Desync("servers disagree on failure state".into()));
        }
        Ok(credited_a)
    }

    pub fn get_keys(&self, count: u64, bits: u64) -> Result<Vec<KeyBlock>> {
        let mut a = Self::lock(&self.a);
        let pending = a.prepare_batch(count, bits)?;
        let t = self.now_ns();
        {
            let mut b = Self::lock(&self.b);
            b.mirror_batch(t, Role::A, &pending)?;
        }
        pending.iter().map(|p| a.commit_issue(t, p)).collect()
    }

    pub fn fetch_by_id(&self, key_id: Uuid) -> Result<KeyBlock> {
        let mut b = Self::lock(&self.b);
        let t = self.now_ns();
        b.fetch(t, key_id)
    }

    pub fn fail_at(&self, t_ns: u64) -> Result<()> {
        self.set_time(t_ns);
        let mut a = Self::lock(&self.a);
        let mut b = Self::lock(&self.b);
        b.inject_failure(self.now_ns())?;
        a.inject_failure(self.now_ns())
    }

    pub fn restore_at(&self, t_ns: u64) -> Result<()> {
        self.set_time(t_ns);
        let mut a = Self::lock(&self.a);
        let mut b = Self::lock(&self.b);
        b.restore(self.now_ns())?;
        a.restore(self.now_ns())
    }

    /// Consistent snapshot of both ledgers.
    pub fn states(&self) -> (LedgerState, LedgerState) {
        let a = Self::lock(&self.a);
        let b = Self::lock(&self.b);
        (a.state().clone(), b.state().clone())
    }

    pub fn into_servers(self) -> (KeyServer, KeyServer) {
        (
            self.a.into_inner().unwrap_or_else(|p| p.into_inner()),
            self.b.into_inner().unwrap_or_else(|p| p.into_inner()),
        )
    }
}

impl KeyRequester for KmsPair {
    fn get_key(&self, size_bits: u64) -> Result<KeyBlock> {
        Ok(self.get_keys(1, size_bits)?.remove(0))
    }
}

impl KeyResolver for KmsPair {
    fn get_key_by_id(&self, key_id: Uuid) -> Result<KeyBlock> {
        self.fetch_by_id(key_id)
    }
}

impl PoolFeed for KmsPair {
    fn credit(&self, t_ns: u64, bits: u64) -> Result<()> {
        self.credit_at(t_ns, bits).map(|_| ())
    }

    fn inject_failure(&self, t_ns: u64) -> Result<()> {
        self.fail_at(t_ns)
    }

    fn restore(&self, t_ns: u64) -> Result<()> {
        self.restore_at(t_ns)
    }

    fn available_bits(&self) -> Result<u64> {
        Ok(Self::lock(&self.a).available_bits())
    }

    fn advance_to(&self, t_ns: u64) -> Result<()> {
        self.set_time(t_ns);
        Ok(())
    }
}
