use std::io::Write;
use std::path::PathBuf;

use incentive_core::analysis::{
    alpha_replay, check_prop1_bound, gaussian_alpha_process, ingest_hashrate, reward_rate, simulate_epochs,
    EpochAccounts, HashRateSeries,
};
use incentive_core::bitcoin::{honest_policy, sm1_policy, BtcEnvConfig};
use incentive_core::rng::stream;
use incentive_core::Error;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn accounts(m: f64, share: f64, stale: f64, split: f64) -> EpochAccounts {
    let ba = (m * share).round();
    EpochAccounts::with_epoch(ba, m - ba, stale * split, stale * (1.0 - split), m, 1.0).unwrap()
}

proptest! {
    #[test]
    fn bound_holds_on_valid_accounts(k in 2u32..5, n in 1u32..=50, share in 0.0f64..=1.0, fill in 0.0f64..=1.0, split in 0.0f64..=1.0) {
        let m = 2016.0;
        let a = accounts(m, share, fill * (k - 1) as f64 * m, split);
        prop_assert!(a.feasible_for(k));
        let c = check_prop1_bound(&a, n, k).unwrap();
        prop_assert!(c.holds, "{:?}", c);
    }

    #[test]
    fn rate_grows_with_epochs(share in 0.01f64..=1.0, stale in 1.0f64..4000.0, n in 1u32..200) {
        let a = accounts(2016.0, share, stale, 0.5);
        prop_assume!(a.attacker_main > 0.0);
        prop_assert!(reward_rate(&a, n + 1).unwrap() > reward_rate(&a, n).unwrap());
    }

    #[test]
    fn replay_stays_in_range(rates in proptest::collection::vec(1e-3f64..1e6, 1..200), alpha in 0.01f64..=0.5) {
        let ts = (0..rates.len()).map(|i| chrono::DateTime::from_timestamp(1_569_283_200 + 3600 * i as i64, 0).unwrap()).collect();
        let s = HashRateSeries::new(ts, rates, "fuzz").unwrap();
        let a = alpha_replay(&s, alpha).unwrap();
        prop_assert!(a.iter().all(|x| (0.0..=0.5).contains(x)));
        prop_assert!((a[0] - alpha).abs() < 1e-12);
    }
}

#[test]
fn extremal_account_gap() {
    // all main-chain blocks to the attacker, (k - 1) M stale: the gap is (k - 1) / (n + k - 1)
    for k in 2..5u32 {
        for n in 1..=50u32 {
            let m = 2016.0;
            let a = EpochAccounts::with_epoch(m, 0.0, 0.0, (k - 1) as f64 * m, m, 10.0).unwrap();
            let c = check_prop1_bound(&a, n, k).unwrap();
            let want = (k - 1) as f64 / (n + k - 1) as f64;
            assert!((c.gap - want).abs() < 1e-12 && c.holds);
            assert!(c.bound >= c.gap);
        }
    }
}

#[test]
fn infinite_horizon_limit_is_relative() {
    let a = EpochAccounts::new(900.0, 1116.0, 300.0, 400.0).unwrap();
    let far = 10.0 * reward_rate(&a, 1_000_000).unwrap();
    assert!((far - a.relative()).abs() < 1e-6);
}

#[test]
fn simulated_epochs() {
    let cfg = BtcEnvConfig::new(0.4, 0.5, 20).unwrap();
    let honest = simulate_epochs(&cfg, honest_policy, 2016, 10, &mut stream(1, 0)).unwrap();
    assert!((honest.relative - 0.4).abs() < 0.01);
    assert_eq!(honest.scaled_rate, honest.relative);
    let sm1 = simulate_epochs(&cfg, sm1_policy, 2016, 1, &mut stream(2, 0)).unwrap();
    assert!(sm1.scaled_rate < 0.4, "{}", sm1.scaled_rate);
    assert!(sm1.relative > 0.4);
    for n in [1, 5, 20] {
        let s = simulate_epochs(&cfg, sm1_policy, 2016, n, &mut stream(3, n as u64)).unwrap();
        assert!(check_prop1_bound(&s.accounts, n, 2).unwrap().holds);
        assert!(s.per_epoch.iter().all(|e| e.feasible_for(2)));
    }
}

#[test]
fn clamp_frequency_matches_normal_tail() {
    let n = 200_000;
    let xs = gaussian_alpha_process(0.4, 0.1, n, &mut stream(4, 0)).unwrap();
    let tail = 1.0 - Normal::new(0.4, 0.1).unwrap().cdf(0.5);
    let freq = xs.iter().filter(|&&x| x == 0.5).count() as f64 / n as f64;
    let sigma = (tail * (1.0 - tail) / n as f64).sqrt();
    assert!((freq - tail).abs() < 3.0 * sigma, "{freq} vs {tail}");
    assert!((tail - 0.1587).abs() < 1e-4);
}

fn write_csv(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
    p
}

#[test]
fn ingestion_examples() {
    let dir = tempfile::tempdir().unwrap();
    let flat = write_csv(&dir, "flat.csv", "timestamp,total_hashrate\n2019-09-24T00:00:00Z,5.0\n2019-09-24T01:00:00Z,5.0\n");
    let s = ingest_hashrate(&flat).unwrap();
    assert_eq!(s.provenance, "flat");
    assert!(alpha_replay(&s, 0.4).unwrap().iter().all(|a| (a - 0.4).abs() < 1e-15));

    let double = write_csv(&dir, "d.csv", "timestamp,total_hashrate\n2019-09-24T00:00:00Z,1e6\n2019-09-24T01:00:00+00:00,2e6\n");
    let a = alpha_replay(&ingest_hashrate(&double).unwrap(), 0.4).unwrap();
    assert!((a[1] - 0.25).abs() < 1e-12);

    let bad = write_csv(&dir, "bad.csv", "timestamp,total_hashrate\n2019-09-24T00:00:00Z,1\n2019-09-24T01:00:00Z,abc\n");
    assert!(matches!(ingest_hashrate(&bad), Err(Error::Data { line: 3, .. })));
    let back = write_csv(&dir, "back.csv", "timestamp,total_hashrate\n2019-09-24T02:00:00Z,1\n2019-09-24T01:00:00Z,1\n");
    assert!(matches!(ingest_hashrate(&back), Err(Error::Data { line: 3, .. })));
    let neg = write_csv(&dir, "neg.csv", "timestamp,total_hashrate\n2019-09-24T00:00:00Z,-1\n");
    assert!(matches!(ingest_hashrate(&neg), Err(Error::Data { line: 2, .. })));
    let hdr = write_csv(&dir, "hdr.csv", "time,rate\n2019-09-24T00:00:00Z,1\n");
    assert!(matches!(ingest_hashrate(&hdr), Err(Error::Data { line: 1, .. })));
}

#[test]
fn shipped_fixtures_load() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/hashrate");
    for coin in ["bitcoin", "litecoin", "monacoin", "vertcoin"] {
        let s = ingest_hashrate(&root.join(format!("synthetic_{coin}.csv"))).unwrap();
        assert_eq!(s.len(), 34 * 24 + 1);
        assert!(s.provenance.starts_with("synthetic_"));
    }
}
