use std::collections::HashSet;
use std::sync::Arc;

use qkdlink_core::pool::post_failure_uptime;
use qkdlink_core::{Algorithm, KeyGenTrace, UseCaseConfig, Uptime};
use qkdlink_harness::{run_loop, CycleOutcome, ExhaustPolicy, FeedPlan, HarnessError, KmsEndpoints, RunConfig};
use qkdlink_kms::http::{spawn, HttpConfig};
use qkdlink_kms::{KeyBlock, KeyResolver, KmsPair, PoolFeed, Role, ServerConfig};
use uuid::Uuid;

fn funded_pair(bits: u64) -> Arc<KmsPair> {
    let pair = Arc::new(KmsPair::new(1));
    pair.credit(0, bits).unwrap();
    pair
}

#[test]
fn otp_2000_signals_hundred_cycles() {
    let pair = funded_pair(100 * 64_000);
    let cfg = RunConfig::new(UseCaseConfig::new(2000, 1.0, Algorithm::Otp), 100, 5);
    let report = run_loop(&cfg, &KmsEndpoints::in_process(pair.clone())).unwrap();
    assert_eq!(report.delivered_count(), 100);
    let ids: HashSet<Uuid> = report.records.iter().filter_map(|r| r.key_id).collect();
    assert_eq!(ids.len(), 100);
    assert_eq!(report.debited_bits(), 100 * 64_000);
    let (a, b) = pair.states();
    assert_eq!(a.debited_bits, 100 * 64_000);
    assert_eq!(a.available_bits, 0);
    assert_eq!(b.retired, 100);
    for r in &report.records {
        let l = &r.latency;
        assert_eq!(l.total_ns(), l.stages().iter().sum::<u64>());
        assert!(l.total_ns() <= r.wall_ns);
        assert!(r.within_budget);
    }
}

#[test]
fn fixed_key_ciphers_debit_their_material() {
    for (alg, bits) in [
        (Algorithm::Aes256, 384),
        (Algorithm::Ascon128, 256),
        (Algorithm::Ascon128a, 256),
        (Algorithm::Ascon80pq, 288),
    ] {
        for n in [68, 2000] {
            let pair = funded_pair(1_000_000);
            let cfg = RunConfig::new(UseCaseConfig::new(n, 1.0, alg), 20, 6);
            let report = run_loop(&cfg, &KmsEndpoints::in_process(pair.clone())).unwrap();
            assert_eq!(report.delivered_count(), 20);
            assert!(report.records.iter().all(|r| r.key_bits == bits), "{alg:?}");
            assert_eq!(pair.states().0.debited_bits, 20 * bits);
        }
    }
}

#[test]
fn reporting_batches_concatenate_frames() {
    let pair = funded_pair(10_000_000);
    let uc = UseCaseConfig {
        reporting_rate_hz: 2.0,
        ..UseCaseConfig::new(68, 20.0, Algorithm::Otp)
    };
    let report = run_loop(&RunConfig::new(uc, 10, 2), &KmsEndpoints::in_process(pair)).unwrap();
    assert!(report.records.iter().all(|r| r.key_bits == 68 * 32 * 10));
}

fn failing_plan(cfg: &UseCaseConfig) -> FeedPlan {
    // Generation exactly matches demand, so the reserve is whatever the 10-step lead built.
    let n = cfg.key_demand_per_period();
    FeedPlan::new(KeyGenTrace::constant(1.0, n, 1_000), cfg, 10.0).fail_before_cycle(50)
}

#[test]
fn induced_failure_exhausts_where_the_pool_model_says() {
    let uc = UseCaseConfig::new(68, 1.0, Algorithm::Otp);
    let plan = failing_plan(&uc);
    let Uptime::Finite { steps, .. } = post_failure_uptime(&plan.trace, &plan.schedule).unwrap() else {
        panic!()
    };
    assert_eq!(steps, 10);
    let mut cfg = RunConfig::new(uc, 200, 3);
    cfg.feed = Some(plan);
    let report = run_loop(&cfg, &KmsEndpoints::in_process(Arc::new(KmsPair::new(2)))).unwrap();
    assert_eq!(report.first_exhausted(), Some(60));
    assert_eq!(report.halted_at, Some(60));
    assert_eq!(report.delivered_count(), 60);

    cfg.policy = ExhaustPolicy::Skip;
    cfg.cycles = 80;
    let report = run_loop(&cfg, &KmsEndpoints::in_process(Arc::new(KmsPair::new(2)))).unwrap();
    assert_eq!(report.availability_violations(), (60..80).collect::<Vec<_>>());
    assert_eq!(report.halted_at, None);
    assert!(report.summary().contains("exhausted 20"));
}

#[test]
fn switching_to_aes_stretches_the_reserve() {
    let uc = UseCaseConfig::new(68, 1.0, Algorithm::Otp);
    let mut cfg = RunConfig::new(uc.clone(), 200, 3);
    cfg.feed = Some(failing_plan(&uc));
    cfg.switch_on_failure = Some(Algorithm::Aes256);
    let report = run_loop(&cfg, &KmsEndpoints::in_process(Arc::new(KmsPair::new(2)))).unwrap();
    // 10 x 2176 reserve bits cover floor(21760 / 384) = 56 AES cycles.
    assert_eq!(report.first_exhausted(), Some(50 + 56));
    assert!(report.records[50..106].iter().all(|r| r.algorithm == Algorithm::Aes256 && r.key_bits == 384));
}

#[test]
fn loop_over_http_servers() {
    let b = spawn(HttpConfig::new(ServerConfig::new(Role::B, 4))).unwrap();
    let a = spawn(HttpConfig::new(ServerConfig::new(Role::A, 4)).peer(b.url())).unwrap();
    let kms = KmsEndpoints::http(&a.url(), &b.url()).unwrap();
    kms.feed.as_ref().unwrap().credit(1, 30 * 2_176).unwrap();
    let cfg = RunConfig::new(UseCaseConfig::new(68, 1.0, Algorithm::Ascon128), 30, 8);
    let report = run_loop(&cfg, &kms).unwrap();
    assert_eq!(report.delivered_count(), 30);

    let mut cfg = RunConfig::new(UseCaseConfig::new(68, 1.0, Algorithm::Otp), 30, 8);
    cfg.policy = ExhaustPolicy::Halt;
    let report = run_loop(&cfg, &kms).unwrap();
    // 30 x 2176 credited, 30 x 256 already spent on ASCON.
    assert_eq!(report.first_exhausted(), Some(26));
    assert!(report.records.iter().take(26).all(|r| r.outcome == CycleOutcome::Delivered));
}

struct WrongKeys(Arc<KmsPair>);

impl KeyResolver for WrongKeys {
    fn get_key_by_id(&self, key_id: Uuid) -> qkdlink_kms::Result<KeyBlock> {
        let mut k = self.0.get_key_by_id(key_id)?;
        k.key[0] ^= 1;
        Ok(k)
    }
}

#[test]
fn corrupted_keys_are_fatal() {
    for alg in [Algorithm::Otp, Algorithm::Aes256, Algorithm::Ascon128a] {
        let pair = funded_pair(100_000);
        let kms = KmsEndpoints {
            resolver: Arc::new(WrongKeys(pair.clone())),
            ..KmsEndpoints::in_process(pair)
        };
        let cfg = RunConfig::new(UseCaseConfig::new(68, 1.0, alg), 5, 1);
        assert_eq!(run_loop(&cfg, &kms), Err(HarnessError::Integrity { cycle: 0 }), "{alg:?}");
    }
}

#[test]
fn csv_and_summary_shape() {
    let pair = funded_pair(1_000_000);
    let report = run_loop(
        &RunConfig::new(UseCaseConfig::new(68, 1.0, Algorithm::Aes256), 5, 1),
        &KmsEndpoints::in_process(pair),
    )
    .unwrap();
    let mut out = Vec::new();
    report.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "cycle,fetch_ms,key_a_ms,enc_ms,tx_ms,key_b_ms,dec_ms,total_ms");
    assert_eq!(lines.len(), 6);
    let summary = report.summary();
    assert!(summary.contains("total_ms") && summary.contains("qkd_ms") && summary.contains("crypto_ms"));
    assert!(summary.contains("aes256"), "{summary}");
    let mean = report.total().mean_ms;
    let direct = report.records.iter().map(|r| r.latency.total_ns() as f64).sum::<f64>() / 5.0 * 1e-6;
    assert!((mean - direct).abs() < 1e-9);
}
