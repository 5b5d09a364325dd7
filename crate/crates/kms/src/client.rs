//! Blocking HTTP clients for SAEs and for the link-side feed.
//!
//! Must not be called from inside an async runtime (reqwest's blocking client owns one).

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;
use uuid::Uuid;

use crate::api::{
    CreditRequest, CreditResponse, ErrorBody, KeyContainer, KeyIdsRequest, KeyRequest, StatusResponse, TimeRequest,
};
use crate::error::KmsError;
use crate::ledger::LedgerState;
use crate::server::{KeyBlock, Result};
use crate::{KeyRequester, KeyResolver, PoolFeed};

fn http_client() -> Result<Client> {
    Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .map_err(|e| KmsError::Io(e.to_string()))
}

fn decode<T: DeserializeOwned>(resp: std::result::Result<Response, reqwest::Error>) -> Result<T> {
    let resp = resp.map_err(|e| KmsError::PeerUnavailable(e.to_string()))?;
    let status = resp.status();
    if status.is_success() {
        return resp.json().map_err(|e| KmsError::Malformed(format!("bad response body: {e}")));
    }
    match resp.json::<ErrorBody>() {
        Ok(body) => Err(body.into_error()),
        Err(_) => Err(KmsError::PeerUnavailable(format!("server answered {status}"))),
    }
}

fn blocks(c: KeyContainer) -> Result<Vec<KeyBlock>> {
    c.keys
        .into_iter()
        .map(|e| {
            let key = B64
                .decode(e.key.as_bytes())
                .map_err(|err| KmsError::Malformed(format!("key is not base64: {err}")))?;
            Ok(KeyBlock {
                key_id: e.key_id,
                key,
                created_at_ns: 0,
            })
        })
        .collect()
}

/// An SAE's view of its server.
#[derive(Debug, Clone)]
pub struct HttpKmsClient {
    base: String,
    /// SAE ID that goes in the path (the other end of the link).
    peer_sae: String,
    client: Client,
    unknown_id_retries: u32,
    retry_delay: Duration,
}

impl HttpKmsClient {
    pub fn new(base_url: impl Into<String>, peer_sae: impl Into<String>) -> Result<Self> {
        Ok(Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            peer_sae: peer_sae.into(),
            client: http_client()?,
            unknown_id_retries: 3,
            retry_delay: Duration::from_millis(5),
        })
    }

    /// Bounded retry while a key ID is not (yet) known to this server.
    pub fn with_retries(mut self, retries: u32, delay: Duration) -> Self {
        self.unknown_id_retries = retries;
        self.retry_delay = delay;
        self
    }

    fn url(&self, verb: &str) -> String {
        format!("{}/api/v1/keys/{}/{verb}", self.base, self.peer_sae)
    }

    pub fn get_keys(&self, number: u64, size_bits: u64) -> Result<Vec<KeyBlock>> {
        let req = KeyRequest { number, size: size_bits };
        blocks(decode(self.client.post(self.url("enc_keys")).json(&req).send())?)
    }

    pub fn get_keys_by_id(&self, ids: &[Uuid]) -> Result<Vec<KeyBlock>> {
        let req = KeyIdsRequest::new(ids.iter().copied());
        let mut attempt = 0;
        loop {
            match decode(self.client.post(self.url("dec_keys")).json(&req).send()).and_then(blocks) {
                Err(KmsError::UnknownId(_)) if attempt < self.unknown_id_retries => {
                    attempt += 1;
                    std::thread::sleep(self.retry_delay);
                }
                other => return other,
            }
        }
    }

    pub fn status(&self) -> Result<StatusResponse> {
        decode(self.client.get(self.url("status")).send())
    }
}

impl KeyRequester for HttpKmsClient {
    fn get_key(&self, size_bits: u64) -> Result<KeyBlock> {
        self.get_keys(1, size_bits)?
            .pop()
            .ok_or_else(|| KmsError::Malformed("empty key container".into()))
    }
}

impl KeyResolver for HttpKmsClient {
    fn get_key_by_id(&self, key_id: Uuid) -> Result<KeyBlock> {
        self.get_keys_by_id(&[key_id])?
            .pop()
            .ok_or_else(|| KmsError::Malformed("empty key container".into()))
    }
}

/// Admin access to one server.
#[derive(Debug, Clone)]
pub struct AdminClient {
    base: String,
    client: Client,
}

impl AdminClient {
    pub fn new(base_url: impl Into<String>) -> Result<Self> {
        Ok(Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            client: http_client()?,
        })
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        decode(self.client.post(format!("{}/api/v1/admin/{path}", self.base)).json(body).send())
    }

    pub fn credit(&self, t_ns: u64, bits: u64) -> Result<CreditResponse> {
        self.post("credit", &CreditRequest { bits, t_ns: Some(t_ns) })
    }

    pub fn fail(&self, t_ns: u64) -> Result<()> {
        self.post::<_, serde_json::Value>("fail", &TimeRequest { t_ns: Some(t_ns) }).map(|_| ())
    }

    pub fn restore(&self, t_ns: u64) -> Result<()> {
        self.post::<_, serde_json::Value>("restore", &TimeRequest { t_ns: Some(t_ns) }).map(|_| ())
    }

    pub fn advance(&self, t_ns: u64) -> Result<()> {
        self.post::<_, TimeRequest>("clock", &TimeRequest { t_ns: Some(t_ns) }).map(|_| ())
    }

    pub fn ledger(&self) -> Result<LedgerState> {
        decode(self.client.get(format!("{}/api/v1/admin/ledger", self.base)).send())
    }
}

/// Drives both servers of a link; every change reaches B before A so that A never
/// holds key that B could not mirror.
#[derive(Debug, Clone)]
pub struct HttpPairFeed {
    pub a: AdminClient,
    pub b: AdminClient,
}

impl HttpPairFeed {
    pub fn new(a_url: impl Into<String>, b_url: impl Into<String>) -> Result<Self> {
        Ok(Self {
            a: AdminClient::new(a_url)?,
            b: AdminClient::new(b_url)?,
        })
    }
}

impl PoolFeed for HttpPairFeed {
    fn credit(&self, t_ns: u64, bits: u64) -> Result<()> {
        let b = self.b.credit(t_ns, bits)?;
        let a = self.a.credit(t_ns, bits)?;
        if a.credited != b.credited {
            return Err(KmsError::Desync("servers disagree on failure state".into()));
        }
        Ok(())
    }

    fn inject_failure(&self, t_ns: u64) -> Result<()> {
        self.b.fail(t_ns)?;
        self.a.fail(t_ns)
    }

    fn restore(&self, t_ns: u64) -> Result<()> {
        self.b.restore(t_ns)?;
        self.a.restore(t_ns)
    }

    fn available_bits(&self) -> Result<u64> {
        Ok(self.a.ledger()?.available_bits)
    }

    fn advance_to(&self, t_ns: u64) -> Result<()> {
        self.b.advance(t_ns)?;
        self.a.advance(t_ns)
    }
}
