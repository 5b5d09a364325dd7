//! Pool ledger: key records, the event vocabulary and the single transition function
//! shared by live serving and log replay.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::KmsError;

/// The SAE side a server (or a request) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::A => Role::B,
            Role::B => Role::A,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Role::A => "a",
            Role::B => "b",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::A => f.write_str("A"),
            Role::B => f.write_str("B"),
        }
    }
}

impl FromStr for Role {
    type Err = KmsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" | "A" => Ok(Role::A),
            "b" | "B" => Ok(Role::B),
            other => Err(KmsError::Malformed(format!("unknown role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KeyState {
    Available,
    ServedA,
    ServedB,
    ServedBoth,
    Retired,
}

impl KeyState {
    pub fn served_to(self, role: Role) -> bool {
        match self {
            KeyState::Available => false,
            KeyState::ServedA => role == Role::A,
            KeyState::ServedB => role == Role::B,
            KeyState::ServedBoth | KeyState::Retired => true,
        }
    }

    fn after_serving(self, role: Role) -> KeyState {
        match (self, role) {
            (KeyState::Available, Role::A) => KeyState::ServedA,
            (KeyState::Available, Role::B) => KeyState::ServedB,
            (KeyState::ServedB, Role::A) | (KeyState::ServedA, Role::B) => KeyState::ServedBoth,
            (s, _) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub key_id: Uuid,
    /// Position of the key material in the shared link stream, in bytes.
    pub offset_bytes: u64,
    pub bits: u64,
    pub created_at_ns: u64,
    pub state: KeyState,
}

/// Ledger events; one log line each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerEvent {
    Credit { bits: u64 },
    /// A new key is allocated and served to the local SAE.
    Issue { role: Role, key_id: Uuid, bits: u64 },
    /// The peer server issued a key to its SAE; mirror the allocation.
    Mirror { from: Role, key_id: Uuid, bits: u64 },
    /// An existing key is served to `role` by ID.
    Serve { role: Role, key_id: Uuid },
    Retire { key_id: Uuid },
    Fail,
    Restore,
}

/// Complete observable ledger state of one server.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    pub credited_bits: u64,
    pub debited_bits: u64,
    pub available_bits: u64,
    pub served_a: u64,
    pub served_b: u64,
    pub retired: u64,
    pub failed: bool,
    pub events: u64,
    pub last_timestamp_ns: u64,
    pub keys: BTreeMap<Uuid, KeyRecord>,
}

impl LedgerState {
    /// `available = credited - debited`.
    pub fn conserved(&self) -> bool {
        self.credited_bits.checked_sub(self.debited_bits) == Some(self.available_bits)
    }

    pub fn next_offset_bytes(&self) -> u64 {
        self.debited_bits / 8
    }

    fn count_serve(&mut self, role: Role) {
        match role {
            Role::A => self.served_a += 1,
            Role::B => self.served_b += 1,
        }
    }

    fn allocate(&mut self, t_ns: u64, key_id: Uuid, bits: u64, served: Role) -> Result<(), KmsError> {
        if self.keys.contains_key(&key_id) {
            return Err(KmsError::Desync(format!("key id {key_id} already allocated")));
        }
        if !bits.is_multiple_of(8) || bits == 0 {
            return Err(KmsError::Malformed(format!("key size {bits} is not a positive multiple of 8 bits")));
        }
        if self.available_bits < bits {
            return Err(KmsError::Exhausted {
                requested: bits,
                available: self.available_bits,
            });
        }
        self.keys.insert(
            key_id,
            KeyRecord {
                key_id,
                offset_bytes: self.next_offset_bytes(),
                bits,
                created_at_ns: t_ns,
                state: KeyState::Available.after_serving(served),
            },
        );
        self.available_bits -= bits;
        self.debited_bits += bits;
        Ok(())
    }

    /// Checks and applies one event; on error nothing changes.
    pub fn apply(&mut self, t_ns: u64, event: &LedgerEvent) -> Result<(), KmsError> {
        match *event {
            LedgerEvent::Credit { bits } => {
                if self.failed {
                    return Err(KmsError::Malformed("credit while key generation is failed".into()));
                }
                self.credited_bits += bits;
                self.available_bits += bits;
            }
            LedgerEvent::Issue { role, key_id, bits } => {
                self.allocate(t_ns, key_id, bits, role)?;
                self.count_serve(role);
            }
            LedgerEvent::Mirror { from, key_id, bits } => {
                self.allocate(t_ns, key_id, bits, from)?;
            }
            LedgerEvent::Serve { role, key_id } => {
                let rec = self.keys.get_mut(&key_id).ok_or(KmsError::UnknownId(key_id))?;
                if rec.state.served_to(role) {
                    return Err(KmsError::AlreadyConsumed(key_id));
                }
                rec.state = rec.state.after_serving(role);
                self.count_serve(role);
            }
            LedgerEvent::Retire { key_id } => {
                let rec = self.keys.get_mut(&key_id).ok_or(KmsError::UnknownId(key_id))?;
                if rec.state != KeyState::ServedBoth {
                    return Err(KmsError::Desync(format!("retiring {key_id} in state {:?}", rec.state)));
                }
                rec.state = KeyState::Retired;
                self.retired += 1;
            }
            LedgerEvent::Fail => self.failed = true,
            LedgerEvent::Restore => self.failed = false,
        }
        self.events += 1;
        self.last_timestamp_ns = self.last_timestamp_ns.max(t_ns);
        Ok(())
    }
}

/// Formats one log line `timestamp_ns|event|key_id|bits` (no trailing newline).
pub fn format_line(t_ns: u64, event: &LedgerEvent) -> String {
    let (name, id, bits): (String, Option<Uuid>, u64) = match *event {
        LedgerEvent::Credit { bits } => ("credit".into(), None, bits),
        LedgerEvent::Issue { role, key_id, bits } => (format!("issue_{}", role.tag()), Some(key_id), bits),
        LedgerEvent::Mirror { from, key_id, bits } => (format!("mirror_{}", from.tag()), Some(key_id), bits),
        LedgerEvent::Serve { role, key_id } => (format!("serve_{}", role.tag()), Some(key_id), 0),
        LedgerEvent::Retire { key_id } => ("retire".into(), Some(key_id), 0),
        LedgerEvent::Fail => ("fail".into(), None, 0),
        LedgerEvent::Restore => ("restore".into(), None, 0),
    };
    let id = id.map_or_else(|| "-".to_string(), |u| u.to_string());
    format!("{t_ns}|{name}|{id}|{bits}")
}

pub fn parse_line(line: &str) -> Result<(u64, LedgerEvent), KmsError> {
    let bad = |why: &str| KmsError::Io(format!("corrupt log line `{line}`: {why}"));
    let parts: Vec<&str> = line.split('|').collect();
    let [t, name, id, bits] = parts[..] else {
        return Err(bad("expected 4 fields"));
    };
    let t_ns: u64 = t.parse().map_err(|_| bad("timestamp"))?;
    let bits: u64 = bits.parse().map_err(|_| bad("bits"))?;
    let key_id = || Uuid::parse_str(id).map_err(|_| bad("key id"));
    let role_suffix = |prefix: &str| name.strip_prefix(prefix).map(Role::from_str);
    let event = if name == "credit" {
        LedgerEvent::Credit { bits }
    } else if name == "fail" {
        LedgerEvent::Fail
    } else if name == "restore" {
        LedgerEvent::Restore
    } else if name == "retire" {
        LedgerEvent::Retire { key_id: key_id()? }
    } else if let Some(role) = role_suffix("issue_") {
        LedgerEvent::Issue {
            role: role?,
            key_id: key_id()?,
            bits,
        }
    } else if let Some(from) = role_suffix("mirror_") {
        LedgerEvent::Mirror {
            from: from?,
            key_id: key_id()?,
            bits,
        }
    } else if let Some(role) = role_suffix("serve_") {
        LedgerEvent::Serve {
            role: role?,
            key_id: key_id()?,
        }
    } else {
        return Err(bad("unknown event"));
    };
    Ok((t_ns, event))
}
