use std::collections::HashMap;
use std::sync::Arc;

use qkdlink_kms::{KeyRequester, KeyResolver, KmsError, KmsPair, PoolFeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

#[test]
fn hundred_thousand_interleaved_operations() {
    let pair = KmsPair::new(21);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut issued: HashMap<Uuid, Vec<u8>> = HashMap::new();
    let mut outstanding: Vec<Uuid> = Vec::new();
    let mut resolved: Vec<Uuid> = Vec::new();
    let (mut refusals, mut t) = (0u64, 0u64);
    for op in 0..100_000u64 {
        t += 1_000;
        match rng.gen_range(0..100) {
            0..=29 => pair.credit(t, rng.gen_range(0..4_096)).unwrap(),
            30..=64 => {
                let bits = 8 * rng.gen_range(1..=64);
                match pair.get_key(bits) {
                    Ok(k) => {
                        assert_eq!(k.bits(), bits);
                        assert!(issued.insert(k.key_id, k.key).is_none(), "id reused");
                        outstanding.push(k.key_id);
                    }
                    Err(KmsError::Exhausted { requested, available }) => {
                        assert!(requested > available);
                        refusals += 1;
                    }
                    Err(e) => panic!("{e}"),
                }
            }
            65..=94 if !outstanding.is_empty() => {
                let id = outstanding.swap_remove(rng.gen_range(0..outstanding.len()));
                let k = pair.get_key_by_id(id).unwrap();
                assert_eq!(&k.key, &issued[&id]);
                resolved.push(id);
            }
            95..=97 if !resolved.is_empty() => {
                let id = resolved[rng.gen_range(0..resolved.len())];
                assert_eq!(pair.get_key_by_id(id), Err(KmsError::AlreadyConsumed(id)));
            }
            98 => pair.inject_failure(t).unwrap(),
            _ => pair.restore(t).unwrap(),
        }
        if op % 5_000 == 0 {
            let (a, b) = pair.states();
            assert!(a.conserved() && b.conserved());
            assert_eq!(a.available_bits, b.available_bits);
            assert_eq!(a.debited_bits, b.debited_bits);
            assert_eq!(a.served_a as usize, issued.len());
            assert_eq!(b.served_b as usize, resolved.len());
        }
    }
    let (a, b) = pair.states();
    assert!(refusals > 0, "the run never drained the pool");
    assert_eq!(b.retired as usize, resolved.len());
    assert_eq!(a.keys.len(), b.keys.len());
}

#[test]
fn concurrent_requesters_never_share_a_key() {
    let pair = Arc::new(KmsPair::new(22));
    pair.credit(0, 8 * 256 * 4_000).unwrap();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let p = pair.clone();
            std::thread::spawn(move || {
                let mut got = Vec::new();
                loop {
                    match p.get_key(256 * 8) {
                        Ok(k) => got.push(k),
                        Err(KmsError::Exhausted { .. }) => return got,
                        Err(e) => panic!("{e}"),
                    }
                }
            })
        })
        .collect();
    let all: Vec<_> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    assert_eq!(all.len(), 4_000);
    let mut ids: Vec<Uuid> = all.iter().map(|k| k.key_id).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), all.len());
    let mut bytes: Vec<&Vec<u8>> = all.iter().map(|k| &k.key).collect();
    bytes.sort();
    bytes.dedup();
    assert_eq!(bytes.len(), all.len());

    let resolvers: Vec<_> = all
        .chunks(500)
        .map(|chunk| {
            let p = pair.clone();
            let chunk = chunk.to_vec();
            std::thread::spawn(move || {
                for k in chunk {
                    assert_eq!(p.get_key_by_id(k.key_id).unwrap().key, k.key);
                }
            })
        })
        .collect();
    for r in resolvers {
        r.join().unwrap();
    }
    let (a, b) = pair.states();
    assert_eq!(a.available_bits, 0);
    assert_eq!(b.retired, 4_000);
}
