use incentive_core::bitcoin::{rollout, sm1_policy, BtcEnvConfig};
use incentive_core::chain::Action;
use incentive_core::multiagent::{run_tournament, MultiAgentConfig, MultiAgentEnv, Ordering, Sm1Strategy};
use incentive_core::rng::stream;
use proptest::prelude::*;
use rand::Rng;

fn random_joint(env: &MultiAgentEnv, rng: &mut impl Rng) -> Vec<Action> {
    env.observe_all()
        .iter()
        .map(|o| {
            let legal: Vec<Action> = o.mask.iter().collect();
            legal[rng.gen_range(0..legal.len())]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn settlement_is_monotone_and_exhaustive(seed in any::<u64>(), k in 1usize..4, segmented in any::<bool>()) {
        let ordering = if segmented { Ordering::TimeSegmented(4) } else { Ordering::Rushing };
        let cfg = MultiAgentConfig::new(vec![0.12; k], vec![0.2; k], ordering).unwrap();
        let mut env = MultiAgentEnv::new(cfg).unwrap();
        let mut rng = stream(seed, 0);
        let mut last = vec![0u64; k + 1];
        while !env.done() {
            let pre_len = env.tree().len();
            let joint = random_joint(&env, &mut rng);
            let before: Vec<_> = (0..k).map(|i| env.tip(i)).collect();
            let d = env.joint_step(&joint, &mut rng).unwrap();
            let now = env.ledger().accepted.clone();
            for i in 0..=k {
                prop_assert!(now[i] >= last[i]);
                prop_assert_eq!(now[i] - last[i], d.settled[i]);
            }
            // settled blocks lie on one chain, so they never outnumber its height
            prop_assert!(now.iter().sum::<u64>() <= env.tree().height(env.honest_tip()));
            last = now;

            let strip = |mut b: usize| {
                if b >= pre_len {
                    b = env.tree().parent(b).unwrap();
                }
                b
            };
            let overriders: Vec<usize> = (0..k).filter(|&i| joint[i] == Action::Override).collect();
            for j in (0..k).filter(|&j| joint[j] == Action::Adopt) {
                let p = strip(env.tip(j));
                prop_assert!(env.tree().block(p).published);
                for i in 0..k {
                    let q = env.tree().deepest_published(strip(env.tip(i)));
                    prop_assert!(env.tree().height(p) >= env.tree().height(q), "adopter {j} below agent {i}'s public chain");
                }
                // without a same-turn honest publication the single override is strictly longest
                if !segmented && overriders.len() == 1 && !joint.contains(&Action::Match) {
                    prop_assert!(env.tree().is_ancestor(p, before[overriders[0]]), "adopter {j} not on the override chain");
                }
            }
        }
        let rel = env.ledger().relative();
        if env.ledger().total_accepted() > 0 {
            prop_assert!((rel.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn single_agent_tournament_matches_bitcoin_rollout() {
    // one block event per turn, so an episode is 100 Bitcoin steps from the same stream
    let cfg = MultiAgentConfig::new(vec![0.3], vec![0.5], Ordering::Rushing).unwrap();
    let t = run_tournament(&cfg, &[&Sm1Strategy], 200, 17).unwrap();
    let btc = BtcEnvConfig::new(0.3, 0.5, cfg.cap).unwrap();
    for e in 0..200u64 {
        let r = rollout(&btc, |s| btc.sanitize(s, sm1_policy(s)), 100, &mut stream(17, e)).unwrap();
        let ep = &t.per_episode[e as usize];
        assert!((ep[0] - r.relative()).abs() < 1e-12, "episode {e}: {} vs {}", ep[0], r.relative());
    }
}
