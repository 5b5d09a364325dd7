use qkdlink_kms::api::{ErrorBody, KeyContainer, KeyIdsRequest, KeyRequest, StatusResponse};
use qkdlink_kms::client::AdminClient;
use qkdlink_kms::http::{spawn, HttpConfig, ServerHandle};
use qkdlink_kms::{HttpKmsClient, HttpPairFeed, KeyRequester, KeyResolver, KmsError, PoolFeed, Role, ServerConfig};
use reqwest::blocking::Client;
use uuid::Uuid;

fn pair(seed: u64) -> (ServerHandle, ServerHandle) {
    let b = spawn(HttpConfig::new(ServerConfig::new(Role::B, seed))).unwrap();
    let a = spawn(HttpConfig::new(ServerConfig::new(Role::A, seed)).peer(b.url())).unwrap();
    (a, b)
}

fn post(url: String, body: &str) -> (u16, String) {
    let resp = Client::new()
        .post(url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .unwrap();
    (resp.status().as_u16(), resp.text().unwrap())
}

#[test]
fn keys_flow_between_the_two_sides() {
    let (a, b) = pair(11);
    let feed = HttpPairFeed::new(a.url(), b.url()).unwrap();
    feed.credit(1_000, 4_096).unwrap();
    let sae_a = HttpKmsClient::new(a.url(), "sae-b").unwrap();
    let sae_b = HttpKmsClient::new(b.url(), "sae-a").unwrap();

    let ka = sae_a.get_key(2_176).unwrap();
    assert_eq!(ka.bits(), 2_176);
    let kb = sae_b.get_key_by_id(ka.key_id).unwrap();
    assert_eq!(ka.key, kb.key);
    assert_eq!(feed.available_bits().unwrap(), 4_096 - 2_176);

    let st = sae_a.status().unwrap();
    assert_eq!(st.master_SAE_ID, "sae-a");
    assert_eq!(st.slave_SAE_ID, "sae-b");
    assert_eq!(st.available_bits, 1_920);
    assert!(!st.failed);

    let la = AdminClient::new(a.url()).unwrap().ledger().unwrap();
    let lb = AdminClient::new(b.url()).unwrap().ledger().unwrap();
    assert_eq!(la.available_bits, lb.available_bits);
    assert_eq!(lb.retired, 1);
    assert!(la.conserved() && lb.conserved());
}

#[test]
fn error_statuses() {
    let (a, b) = pair(12);
    let feed = HttpPairFeed::new(a.url(), b.url()).unwrap();
    feed.credit(1, 1_000).unwrap();
    let enc = format!("{}/api/v1/keys/sae-b/enc_keys", a.url());
    let dec = format!("{}/api/v1/keys/sae-a/dec_keys", b.url());

    let (code, body) = post(enc.clone(), r#"{"number":2,"size":256}"#);
    assert_eq!(code, 200, "{body}");
    let keys: KeyContainer = serde_json::from_str(&body).unwrap();
    assert_eq!(keys.keys.len(), 2);

    // Exhausted and atomic: 2 x 256 > 488 remaining.
    let (code, body) = post(enc.clone(), r#"{"number":2,"size":256}"#);
    assert_eq!(code, 503);
    let err: ErrorBody = serde_json::from_str(&body).unwrap();
    assert_eq!(err.code, "EXHAUSTED");
    assert_eq!((err.requested, err.available), (Some(512), Some(488)));
    assert_eq!(feed.available_bits().unwrap(), 488);

    let ids = serde_json::to_string(&KeyIdsRequest::new([keys.keys[0].key_id])).unwrap();
    assert_eq!(post(dec.clone(), &ids).0, 200);
    let (code, body) = post(dec.clone(), &ids);
    assert_eq!(code, 409);
    assert!(body.contains("ALREADY_CONSUMED"));

    let unknown = serde_json::to_string(&KeyIdsRequest::new([keys.keys[1].key_id, Uuid::from_u128(5)])).unwrap();
    let (code, body) = post(dec.clone(), &unknown);
    assert_eq!(code, 404);
    assert!(body.contains("UNKNOWN_ID"));
    // The pre-check kept the valid first ID unserved.
    let one = serde_json::to_string(&KeyIdsRequest::new([keys.keys[1].key_id])).unwrap();
    assert_eq!(post(dec.clone(), &one).0, 200);

    assert_eq!(post(enc.clone(), "{not json").0, 400);
    assert_eq!(post(enc.clone(), r#"{"number":1,"size":12}"#).0, 400);
    assert_eq!(post(enc.clone(), r#"{"number":0,"size":8}"#).0, 400);
    assert_eq!(post(format!("{}/api/v1/keys/nobody/enc_keys", a.url()), "{}").0, 400);
    assert_eq!(post(format!("{}/api/v1/keys/sae-a/enc_keys", b.url()), "{}").0, 400);

    let resp = Client::new().get(format!("{}/api/v1/keys/sae-b/status", a.url())).send().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let st: StatusResponse = resp.json().unwrap();
    assert_eq!(st.available_bits, 488);
}

#[test]
fn peer_down_refuses_without_side_effects() {
    let b = spawn(HttpConfig::new(ServerConfig::new(Role::B, 13))).unwrap();
    let b_url = b.url();
    let a = spawn(HttpConfig::new(ServerConfig::new(Role::A, 13)).peer(b_url.clone())).unwrap();
    HttpPairFeed::new(a.url(), b.url()).unwrap().credit(1, 1_024).unwrap();
    b.shutdown();
    let sae_a = HttpKmsClient::new(a.url(), "sae-b").unwrap();
    assert!(matches!(sae_a.get_key(256), Err(KmsError::PeerUnavailable(_))));
    let ledger = AdminClient::new(a.url()).unwrap().ledger().unwrap();
    assert_eq!(ledger.available_bits, 1_024);
    assert!(ledger.keys.is_empty());
}

#[test]
fn failure_stops_credits_over_http() {
    let (a, b) = pair(14);
    let feed = HttpPairFeed::new(a.url(), b.url()).unwrap();
    feed.credit(1, 512).unwrap();
    feed.inject_failure(2).unwrap();
    feed.credit(3, 512).unwrap();
    assert_eq!(feed.available_bits().unwrap(), 512);
    let sae_a = HttpKmsClient::new(a.url(), "sae-b").unwrap();
    sae_a.get_key(512).unwrap();
    assert!(matches!(sae_a.get_key(8), Err(KmsError::Exhausted { requested: 8, available: 0 })));
    feed.restore(4).unwrap();
    feed.credit(5, 64).unwrap();
    assert_eq!(sae_a.get_keys(8, 8).unwrap().len(), 8);
}

#[test]
fn get_variants_of_key_requests() {
    let (a, b) = pair(15);
    HttpPairFeed::new(a.url(), b.url()).unwrap().credit(1, 512).unwrap();
    let resp = Client::new()
        .get(format!("{}/api/v1/keys/sae-b/enc_keys?number=1&size=128", a.url()))
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let keys: KeyContainer = resp.json().unwrap();
    let resp = Client::new()
        .get(format!("{}/api/v1/keys/sae-a/dec_keys?key_ID={}", b.url(), keys.keys[0].key_id))
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let back: KeyContainer = resp.json().unwrap();
    assert_eq!(back.keys, keys.keys);
    let _ = KeyRequest::default();
}
