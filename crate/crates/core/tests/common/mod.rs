#![allow(dead_code)]

use std::collections::HashSet;

use incentive_core::bitcoin::{step, BtcEnvConfig, BtcState};
use incentive_core::chain::Action;
use incentive_core::ethereum::{eth_step, EthEnvConfig, EthState, Units};
use incentive_core::rng::stream;
use rand::Rng;

/// Random legal-action Ethereum rollouts; returns the number of violations of reward-unit
/// conservation or of uncle uniqueness.
pub fn eth_conservation_fuzz(rollouts: u64, len: usize, seed: u64) -> u64 {
    let mut bad = 0;
    for r in 0..rollouts {
        let mut rng = stream(seed, r);
        let alpha = rng.gen_range(0.05..0.45);
        let gamma = rng.gen_range(0.0..=1.0);
        let cfg = EthEnvConfig::new(alpha, gamma, 20).unwrap();
        let mut s = EthState::default();
        let mut used: HashSet<(u64, bool)> = HashSet::new();
        for _ in 0..len {
            let legal: Vec<Action> = cfg.mask(&s.key()).iter().collect();
            let a = legal[rng.gen_range(0..legal.len())];
            let o = eth_step(&cfg, &s, a, &mut rng).unwrap();
            let paid: i64 = o.events.iter().map(|e| e.nephew_bonus.0 + e.uncle_payout.0).sum();
            let blocks = Units::blocks(o.chain.attacker + o.chain.others).0;
            if o.attacker.0 + o.others.0 != blocks + paid {
                bad += 1;
            }
            // at most two references per publication, at most two publications per step
            if o.events.len() > 4 || o.events.iter().any(|e| e.nephew_bonus.0 != 1) {
                bad += 1;
            }
            for e in &o.events {
                let key = (e.hang_height, matches!(e.uncle_owner, incentive_core::ethereum::Publisher::Attacker));
                if !used.insert(key) {
                    bad += 1;
                }
            }
            s = o.next;
        }
    }
    bad
}

/// Steps Bitcoin and Ethereum (uncles off) side by side with the same seed; counts divergences.
pub fn eth_bitcoin_parity(rollouts: u64, len: usize, seed: u64) -> u64 {
    let mut bad = 0;
    for r in 0..rollouts {
        let mut pick = stream(seed ^ 0x5eed, r);
        let alpha = pick.gen_range(0.05..0.45);
        let gamma = pick.gen_range(0.0..=1.0);
        let btc = BtcEnvConfig::new(alpha, gamma, 20).unwrap();
        let eth = EthEnvConfig { chain: btc, uncle_rewards: false };
        let (mut r1, mut r2) = (stream(seed, r), stream(seed, r));
        let mut b = BtcState::START;
        let mut e = EthState::default();
        for _ in 0..len {
            let legal: Vec<Action> = btc.mask(b).iter().collect();
            let a = legal[pick.gen_range(0..legal.len())];
            let ob = step(&btc, b, a, &mut r1).unwrap();
            let oe = eth_step(&eth, &e, a, &mut r2).unwrap();
            if oe.next.chain() != ob.next
                || oe.attacker != Units::blocks(ob.attacker)
                || oe.others != Units::blocks(ob.others)
                || !oe.events.is_empty()
            {
                bad += 1;
            }
            b = ob.next;
            e = oe.next;
        }
    }
    bad
}
