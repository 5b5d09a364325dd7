//! Length-prefixed, HMAC-authenticated frames over a byte stream.
//!
//! Frame: `len (u32 BE) | cycle (u64 BE) | payload | HMAC-SHA256(len | cycle | payload)`,
//! where `len` counts everything after itself.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};

use hmac::{Hmac, Mac};
use sha2::Sha256;

use crate::error::{HarnessError, Result};

type HmacSha256 = Hmac<Sha256>;

pub const MAC_BYTES: usize = 32;
pub const MAX_FRAME_BYTES: usize = 64 << 20;

/// Pre-shared key of the authenticated classical channel; not drawn from the QKD pool.
#[derive(Clone, PartialEq, Eq)]
pub struct AuthKey([u8; 32]);

impl AuthKey {
    pub fn new(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn from_seed(seed: u64) -> Self {
        use rand::{RngCore, SeedableRng};
        let mut k = [0u8; 32];
        rand_chacha::ChaCha20Rng::seed_from_u64(seed ^ 0xa076_1d64_78bd_642f).fill_bytes(&mut k);
        Self(k)
    }

    fn mac(&self) -> HmacSha256 {
        HmacSha256::new_from_slice(&self.0).expect("any key length")
    }
}

impl std::fmt::Debug for AuthKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("AuthKey(..)")
    }
}

pub struct FramedStream<S> {
    inner: S,
    key: AuthKey,
}

impl<S: Read + Write> FramedStream<S> {
    pub fn new(inner: S, key: AuthKey) -> Self {
        Self { inner, key }
    }

    pub fn send(&mut self, cycle: u64, payload: &[u8]) -> Result<()> {
        let len = 8 + payload.len() + MAC_BYTES;
        if len > MAX_FRAME_BYTES {
            return Err(HarnessError::Protocol(format!("frame of {len} bytes too large")));
        }
        let mut buf = Vec::with_capacity(4 + len);
        buf.extend_from_slice(&(len as u32).to_be_bytes());
        buf.extend_from_slice(&cycle.to_be_bytes());
        buf.extend_from_slice(payload);
        let mut mac = self.key.mac();
        mac.update(&buf);
        buf.extend_from_slice(&mac.finalize().into_bytes());
        self.inner.write_all(&buf)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<(u64, Vec<u8>)> {
        let mut head = [0u8; 12];
        self.inner.read_exact(&mut head)?;
        let len = u32::from_be_bytes(head[..4].try_into().expect("4 bytes")) as usize;
        if !(8 + MAC_BYTES..=MAX_FRAME_BYTES).contains(&len) {
            return Err(HarnessError::Protocol(format!("bad frame length {len}")));
        }
        let mut rest = vec![0u8; len - 8];
        self.inner.read_exact(&mut rest)?;
        let (payload, tag) = rest.split_at(rest.len() - MAC_BYTES);
        let mut mac = self.key.mac();
        mac.update(&head);
        mac.update(payload);
        mac.verify_slice(tag).map_err(|_| HarnessError::Auth)?;
        let cycle = u64::from_be_bytes(head[4..].try_into().expect("8 bytes"));
        Ok((cycle, payload.to_vec()))
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

/// Two connected TCP endpoints on 127.0.0.1, Nagle disabled.
pub fn loopback_pair() -> Result<(TcpStream, TcpStream)> {
    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    let a = TcpStream::connect(listener.local_addr()?)?;
    let (b, _) = listener.accept()?;
    a.set_nodelay(true)?;
    b.set_nodelay(true)?;
    Ok((a, b))
}
