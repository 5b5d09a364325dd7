use std::fs::OpenOptions;
use std::io::Write;

use qkdlink_kms::server::recover;
use qkdlink_kms::{KeyServer, KmsError, PersistConfig, Role, ServerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn drive(server: &mut KeyServer, rng: &mut ChaCha8Rng, ops: usize, t0: u64) -> Vec<uuid::Uuid> {
    let mut ids = Vec::new();
    for i in 0..ops {
        let t = t0 + i as u64;
        match rng.gen_range(0..10) {
            0..=3 => {
                server.credit(t, rng.gen_range(0..2_000)).unwrap();
            }
            4..=8 => match server.issue(t, 8 * rng.gen_range(1..40)) {
                Ok(k) => ids.push(k.key_id),
                Err(KmsError::Exhausted { .. }) => {}
                Err(e) => panic!("{e}"),
            },
            _ => {
                if rng.gen_bool(0.5) {
                    server.inject_failure(t).unwrap()
                } else {
                    server.restore(t).unwrap()
                }
            }
        }
    }
    ids
}

fn config(dir: &std::path::Path, every: u64) -> ServerConfig {
    let mut p = PersistConfig::new(dir.join("a.log"));
    p.snapshot_every = every;
    ServerConfig::new(Role::A, 31).with_log(p)
}

#[test]
fn restart_replays_to_identical_state() {
    for every in [0, 7, 1_000] {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(every);
        let mut s = KeyServer::open(config(dir.path(), every)).unwrap();
        drive(&mut s, &mut rng, 2_000, 0);
        let before = s.state().clone();
        let key_before = s.state().keys.values().next().map(|r| r.key_id);
        drop(s);

        let mut s = KeyServer::open(config(dir.path(), every)).unwrap();
        assert_eq!(s.state(), &before, "snapshot interval {every}");
        // Allocation continues from where it stopped, with fresh IDs.
        drive(&mut s, &mut rng, 500, 10_000);
        let after = s.state().clone();
        drop(s);
        let s = KeyServer::open(config(dir.path(), every)).unwrap();
        assert_eq!(s.state(), &after);
        assert!(after.conserved());
        assert!(key_before.is_none_or(|id| after.keys.contains_key(&id)));
    }
}

#[test]
fn torn_last_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 0);
    let mut s = KeyServer::open(cfg.clone()).unwrap();
    s.credit(1, 1_000).unwrap();
    s.issue(2, 256).unwrap();
    let before = s.state().clone();
    drop(s);
    let log = dir.path().join("a.log");
    OpenOptions::new().append(true).open(&log).unwrap().write_all(b"3|credit|-|5").unwrap();
    let s = KeyServer::open(cfg.clone()).unwrap();
    assert_eq!(s.state(), &before);
    drop(s);
    assert!(std::fs::read_to_string(&log).unwrap().ends_with('\n'));
}

#[test]
fn corrupt_log_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 0);
    std::fs::write(dir.path().join("a.log"), "1|credit|-|100\n2|issue_a|not-a-uuid|8\n").unwrap();
    assert!(matches!(KeyServer::open(cfg.clone()), Err(KmsError::Io(_))));
    // An issue beyond the credited pool cannot replay either.
    std::fs::write(
        dir.path().join("a.log"),
        "1|credit|-|8\n2|issue_a|00000000-0000-4000-8000-000000000001|16\n",
    )
    .unwrap();
    assert!(matches!(recover(cfg.persist.as_ref().unwrap()), Err(KmsError::Io(_))));
}
