use std::collections::HashMap;

use incentive_core::bitcoin::{build_mdp, capped_mask, honest_policy, rollout, step, BtcEnvConfig, BtcState};
use incentive_core::chain::{Action, ForkLabel};
use incentive_core::rng::stream;
use proptest::prelude::*;
use rand::Rng;

fn any_state(cap: u32) -> impl Strategy<Value = BtcState> {
    (0..cap, 0..cap, 0usize..3).prop_map(|(a, h, f)| BtcState::new(a, h, ForkLabel::ALL[f]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rollouts_conserve_blocks(seed in any::<u64>(), alpha in 0.05f64..0.5, gamma in 0.0f64..=1.0) {
        let cfg = BtcEnvConfig::new(alpha, gamma, 12).unwrap();
        let mut rng = stream(seed, 0);
        let mut picker = stream(seed, 1);
        let mut s = BtcState::START;
        let (mut acc, mut stale) = (0u64, 0u64);
        let steps = 2000u64;
        for _ in 0..steps {
            let legal: Vec<Action> = cfg.mask(s).iter().collect();
            let a = legal[picker.gen_range(0..legal.len())];
            let o = step(&cfg, s, a, &mut rng).unwrap();
            acc += (o.attacker + o.others) as u64;
            stale += o.stale as u64;
            s = o.next;
        }
        // one block is mined per step; the rest are still pending
        prop_assert_eq!(acc + stale + (s.a + s.h) as u64, steps);
    }
}

#[test]
fn masked_actions_never_step() {
    let cfg = BtcEnvConfig::new(0.3, 0.5, 20).unwrap();
    let mut rng = stream(5, 0);
    let mut rejected = 0u64;
    for _ in 0..1_000_000 {
        let s = BtcState::new(rng.gen_range(0..20), rng.gen_range(0..20), ForkLabel::ALL[rng.gen_range(0..3)]);
        let a = Action::ALL[rng.gen_range(0..4)];
        let allowed = capped_mask(s, cfg.cap).allows(a);
        let r = step(&cfg, s, a, &mut rng);
        if !s.is_consistent() {
            assert!(matches!(r, Err(incentive_core::Error::Contract(_))));
            continue;
        }
        assert_eq!(r.is_ok(), allowed, "{s} {a}");
        rejected += (!allowed) as u64;
    }
    assert!(rejected > 0);
}

#[test]
fn simulator_matches_model_at_cap_three() {
    let cfg = BtcEnvConfig::new(0.35, 0.5, 3).unwrap();
    let mdp = build_mdp(&cfg, None).unwrap();
    let n = 1_000_000u64;
    let mut rng = stream(9, 0);
    for (si, s) in mdp.states.iter().enumerate() {
        for (a, rows) in mdp.actions(si) {
            let mut hits: HashMap<usize, u64> = HashMap::new();
            for _ in 0..n {
                let o = step(&cfg, *s, a, &mut rng).unwrap();
                *hits.entry(mdp.state_index(&o.next).unwrap()).or_default() += 1;
            }
            // several model rows can share a successor state
            let mut expect: HashMap<usize, f64> = HashMap::new();
            for t in rows {
                *expect.entry(t.next).or_default() += t.prob;
            }
            for (next, p) in &expect {
                let freq = *hits.get(next).unwrap_or(&0) as f64 / n as f64;
                let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
                assert!((freq - p).abs() <= 3.0 * sigma, "{s} {a} -> {next}: {freq} vs {p}");
            }
            assert_eq!(hits.keys().filter(|k| !expect.contains_key(k)).count(), 0);
        }
    }
}

#[test]
fn honest_share_is_hash_power() {
    for alpha in [0.1, 0.2, 0.3, 0.4, 0.45] {
        let cfg = BtcEnvConfig::new(alpha, 0.5, 20).unwrap();
        let r = rollout(&cfg, honest_policy, 1_000_000, &mut stream(2, 0)).unwrap();
        assert!((r.relative() - alpha).abs() < 0.005, "{alpha}: {}", r.relative());
        assert_eq!(r.stale, 0);
    }
}

proptest! {
    #[test]
    fn forced_resolution_is_always_legal(s in any_state(20)) {
        let cfg = BtcEnvConfig::new(0.3, 0.5, 20).unwrap();
        for a in Action::ALL {
            prop_assert!(cfg.mask(s).allows(cfg.sanitize(s, a)));
        }
    }
}
