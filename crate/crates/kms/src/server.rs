//! One key-management server: ledger state machine plus optional append-only log.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::KmsError;
use crate::keystream::{IdStream, KeyStream};
use crate::ledger::{format_line, parse_line, KeyRecord, LedgerEvent, LedgerState, Role};

pub type Result<T, E = KmsError> = std::result::Result<T, E>;

/// Key bytes delivered to an SAE together with their ID.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyBlock {
    pub key_id: Uuid,
    pub key: Vec<u8>,
    pub created_at_ns: u64,
}

impl KeyBlock {
    pub fn bits(&self) -> u64 {
        self.key.len() as u64 * 8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersistConfig {
    pub log_path: PathBuf,
    /// Write a full snapshot after this many events (0 disables snapshots).
    pub snapshot_every: u64,
}

impl PersistConfig {
    pub fn new(log_path: impl Into<PathBuf>) -> Self {
        Self {
            log_path: log_path.into(),
            snapshot_every: 10_000,
        }
    }

    pub fn snapshot_path(&self) -> PathBuf {
        let mut p = self.log_path.clone().into_os_string();
        p.push(".snapshot.json");
        PathBuf::from(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub role: Role,
    /// Seed of the key stream both servers of a link share.
    pub link_seed: u64,
    /// Seed of the key-ID stream; must also match between peers only if IDs are compared.
    pub id_seed: u64,
    pub persist: Option<PersistConfig>,
}

impl ServerConfig {
    pub fn new(role: Role, link_seed: u64) -> Self {
        Self {
            role,
            link_seed,
            id_seed: link_seed ^ 0x9e37_79b9_7f4a_7c15,
            persist: None,
        }
    }

    pub fn with_log(mut self, persist: PersistConfig) -> Self {
        self.persist = Some(persist);
        self
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    /// Key bytes are not stored: they are re-derived from the link seed (simulation only).
    note: String,
    state: LedgerState,
}

struct LogSink {
    file: File,
    cfg: PersistConfig,
}

impl LogSink {
    fn append(&mut self, line: &str) -> Result<()> {
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        self.file.write_all(buf.as_bytes())?;
        Ok(())
    }

    fn snapshot(&self, state: &LedgerState) -> Result<()> {
        let snap = Snapshot {
            note: "simulator ledger snapshot; key material is derived from the link seed".into(),
            state: state.clone(),
        };
        let path = self.cfg.snapshot_path();
        let tmp = path.with_extension("tmp");
        let json = serde_json::to_vec(&snap).map_err(|e| KmsError::Io(e.to_string()))?;
        fs::write(&tmp, json)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// A claimed but not yet committed key allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingKey {
    pub key_id: Uuid,
    pub offset_bytes: u64,
    pub bits: u64,
}

pub struct KeyServer {
    role: Role,
    state: LedgerState,
    stream: KeyStream,
    ids: IdStream,
    sink: Option<LogSink>,
}

impl std::fmt::Debug for KeyServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyServer")
            .field("role", &self.role)
            .field("available_bits", &self.state.available_bits)
            .field("keys", &self.state.keys.len())
            .finish()
    }
}

impl KeyServer {
    /// Opens a server, replaying snapshot and log when persistence files already exist.
    pub fn open(cfg: ServerConfig) -> Result<Self> {
        let (state, sink) = match &cfg.persist {
            None => (LedgerState::default(), None),
            Some(p) => {
                let state = recover(p)?;
                let file = OpenOptions::new().create(true).append(true).open(&p.log_path)?;
                (state, Some(LogSink { file, cfg: p.clone() }))
            }
        };
        Ok(Self {
            role: cfg.role,
            state,
            stream: KeyStream::new(cfg.link_seed),
            ids: IdStream::new(cfg.id_seed),
            sink,
        })
    }

    pub fn in_memory(role: Role, link_seed: u64) -> Self {
        Self::open(ServerConfig::new(role, link_seed)).expect("no persistence to fail")
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn available_bits(&self) -> u64 {
        self.state.available_bits
    }

    fn record(&mut self, t_ns: u64, event: LedgerEvent) -> Result<()> {
        self.state.apply(t_ns, &event)?;
        if let Some(sink) = &mut self.sink {
            sink.append(&format_line(t_ns, &event))?;
            let every = sink.cfg.snapshot_every;
            if every > 0 && self.state.events.is_multiple_of(every) {
                sink.snapshot(&self.state)?;
            }
        }
        Ok(())
    }

    /// Adds generated key; ignored while key generation is failed. Returns whether it was credited.
    pub fn credit(&mut self, t_ns: u64, bits: u64) -> Result<bool> {
        if self.state.failed || bits == 0 {
            return Ok(false);
        }
        self.record(t_ns, LedgerEvent::Credit { bits })?;
        Ok(true)
    }

    /// Claims `count` keys of `bits` each without changing state; all or nothing.
    pub fn prepare_batch(&self, count: u64, bits: u64) -> Result<Vec<PendingKey>> {
        if bits == 0 || !bits.is_multiple_of(8) {
            return Err(KmsError::Malformed(format!("key size {bits} is not a positive multiple of 8 bits")));
        }
        if count == 0 {
            return Err(KmsError::Malformed("number of keys must be positive".into()));
        }
        let total = count
            .checked_mul(bits)
            .ok_or_else(|| KmsError::Malformed("request too large".into()))?;
        if total > self.state.available_bits {
            return Err(KmsError::Exhausted {
                requested: total,
                available: self.state.available_bits,
            });
        }
        let base = self.state.keys.len() as u64;
        let mut offset = self.state.next_offset_bytes();
        let mut out = Vec::with_capacity(count as usize);
        for i in 0..count {
            let key_id = self.ids.nth(base + i);
            if self.state.keys.contains_key(&key_id) || out.iter().any(|p: &PendingKey| p.key_id == key_id) {
                return Err(KmsError::Desync(format!("key id {key_id} collides")));
            }
            out.push(PendingKey {
                key_id,
                offset_bytes: offset,
                bits,
            });
            offset += bits / 8;
        }
        Ok(out)
    }

    pub fn prepare_issue(&self, bits: u64) -> Result<PendingKey> {
        Ok(self.prepare_batch(1, bits)?[0])
    }

    /// Commits a claim from [`prepare_batch`](Self::prepare_batch); claims must be committed in order.
    pub fn commit_issue(&mut self, t_ns: u64, p: &PendingKey) -> Result<KeyBlock> {
        if p.offset_bytes != self.state.next_offset_bytes() {
            return Err(KmsError::Desync("stale key claim".into()));
        }
        self.record(
            t_ns,
            LedgerEvent::Issue {
                role: self.role,
                key_id: p.key_id,
                bits: p.bits,
            },
        )?;
        Ok(self.block(&self.state.keys[&p.key_id]))
    }

    /// Allocates and serves one key to the local SAE.
    pub fn issue(&mut self, t_ns: u64, bits: u64) -> Result<KeyBlock> {
        let p = self.prepare_issue(bits)?;
        self.commit_issue(t_ns, &p)
    }

    /// Mirrors an allocation the peer made; offsets must line up.
    pub fn mirror(&mut self, t_ns: u64, from: Role, key_id: Uuid, offset_bytes: u64, bits: u64) -> Result<()> {
        if offset_bytes != self.state.next_offset_bytes() {
            return Err(KmsError::Desync(format!(
                "peer offset {offset_bytes} but local stream is at {}",
                self.state.next_offset_bytes()
            )));
        }
        self.record(t_ns, LedgerEvent::Mirror { from, key_id, bits })
    }

    /// Mirrors a batch of peer allocations all-or-nothing.
    pub fn mirror_batch(&mut self, t_ns: u64, from: Role, keys: &[PendingKey]) -> Result<()> {
        let mut offset = self.state.next_offset_bytes();
        let mut total = 0u64;
        for (i, k) in keys.iter().enumerate() {
            if k.offset_bytes != offset {
                return Err(KmsError::Desync(format!(
                    "peer offset {} but local stream is at {offset}",
                    k.offset_bytes
                )));
            }
            if k.bits == 0 || k.bits % 8 != 0 {
                return Err(KmsError::Malformed(format!("key size {} is not a positive multiple of 8 bits", k.bits)));
            }
            if self.state.keys.contains_key(&k.key_id) || keys[..i].iter().any(|p| p.key_id == k.key_id) {
                return Err(KmsError::Desync(format!("key id {} already allocated", k.key_id)));
            }
            offset += k.bits / 8;
            total += k.bits;
        }
        if total > self.state.available_bits {
            return Err(KmsError::Exhausted {
                requested: total,
                available: self.state.available_bits,
            });
        }
        for k in keys {
            self.mirror(t_ns, from, k.key_id, k.offset_bytes, k.bits)?;
        }
        Ok(())
    }

    /// Checks that every ID can be served to the local SAE without changing anything.
    pub fn check_fetchable(&self, key_ids: &[Uuid]) -> Result<()> {
        for (i, id) in key_ids.iter().enumerate() {
            let rec = self.state.keys.get(id).ok_or(KmsError::UnknownId(*id))?;
            if rec.state.served_to(self.role) || key_ids[..i].contains(id) {
                return Err(KmsError::AlreadyConsumed(*id));
            }
        }
        Ok(())
    }

    /// Serves a key by ID to the local SAE; a key served to both sides is retired.
    pub fn fetch(&mut self, t_ns: u64, key_id: Uuid) -> Result<KeyBlock> {
        self.record(t_ns, LedgerEvent::Serve { role: self.role, key_id })?;
        let block = self.block(&self.state.keys[&key_id]);
        if self.state.keys[&key_id].state == crate::ledger::KeyState::ServedBoth {
            self.record(t_ns, LedgerEvent::Retire { key_id })?;
        }
        Ok(block)
    }

    pub fn inject_failure(&mut self, t_ns: u64) -> Result<()> {
        if self.state.failed {
            return Ok(());
        }
        self.record(t_ns, LedgerEvent::Fail)
    }

    pub fn restore(&mut self, t_ns: u64) -> Result<()> {
        if !self.state.failed {
            return Ok(());
        }
        self.record(t_ns, LedgerEvent::Restore)
    }

    fn block(&self, rec: &KeyRecord) -> KeyBlock {
        KeyBlock {
            key_id: rec.key_id,
            key: self.stream.bytes(rec.offset_bytes, (rec.bits / 8) as usize),
            created_at_ns: rec.created_at_ns,
        }
    }

    /// Writes a snapshot now, regardless of the interval.
    pub fn snapshot(&self) -> Result<()> {
        match &self.sink {
            Some(sink) => sink.snapshot(&self.state),
            None => Ok(()),
        }
    }
}

fn read_snapshot(path: &Path) -> Result<Option<LedgerState>> {
    match fs::read(path) {
        Ok(bytes) => {
            let snap: Snapshot = serde_json::from_slice(&bytes).map_err(|e| KmsError::Io(format!("snapshot: {e}")))?;
            Ok(Some(snap.state))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Rebuilds the ledger from the latest snapshot plus the log tail. A torn final line
/// (no newline) is treated as never written and cut off.
pub fn recover(p: &PersistConfig) -> Result<LedgerState> {
    let mut state = read_snapshot(&p.snapshot_path())?.unwrap_or_default();
    let mut file = match OpenOptions::new().read(true).write(true).open(&p.log_path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            if state.events > 0 {
                return Err(KmsError::Io("snapshot present but log missing".into()));
            }
            return Ok(state);
        }
        Err(e) => return Err(e.into()),
    };
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        text.truncate(keep);
        file.set_len(keep as u64)?;
        file.seek(SeekFrom::End(0))?;
    }
    let lines: Vec<&str> = text.lines().collect();
    let skip = state.events as usize;
    if lines.len() < skip {
        return Err(KmsError::Io(format!(
            "log has {} lines but snapshot covers {skip}",
            lines.len()
        )));
    }
    for line in &lines[skip..] {
        let (t, ev) = parse_line(line)?;
        state
            .apply(t, &ev)
            .map_err(|e| KmsError::Io(format!("replay of `{line}` failed: {e}")))?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn issue_examples() {
        let mut s = KeyServer::in_memory(Role::A, 1);
        s.credit(0, 1_000).unwrap();
        let k = s.issue(1, 256).unwrap();
        assert_eq!(k.bits(), 256);
        assert_eq!(s.available_bits(), 744);
        let mut s = KeyServer::in_memory(Role::A, 1);
        s.credit(0, 100).unwrap();
        assert!(matches!(s.issue(1, 256), Err(KmsError::Exhausted { .. })));
        assert_eq!(s.available_bits(), 100);
    }

    #[test]
    fn sequential_ids_differ() {
        let mut s = KeyServer::in_memory(Role::A, 1);
        s.credit(0, 10_000).unwrap();
        let a = s.issue(1, 256).unwrap();
        let b = s.issue(2, 256).unwrap();
        assert_ne!(a.key_id, b.key_id);
        assert_ne!(a.key, b.key);
    }

    #[test]
    fn credits_stop_while_failed() {
        let mut s = KeyServer::in_memory(Role::B, 1);
        s.inject_failure(5).unwrap();
        assert!(!s.credit(6, 500).unwrap());
        s.restore(7).unwrap();
        assert!(s.credit(8, 500).unwrap());
        assert_eq!(s.available_bits(), 500);
        assert!(!s.credit(9, 0).unwrap());
    }

    #[test]
    fn size_must_be_whole_bytes() {
        let mut s = KeyServer::in_memory(Role::A, 1);
        s.credit(0, 1_000).unwrap();
        assert!(matches!(s.issue(0, 12), Err(KmsError::Malformed(_))));
        assert!(matches!(s.prepare_batch(0, 8), Err(KmsError::Malformed(_))));
    }
}
