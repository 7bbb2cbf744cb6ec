use std::collections::HashSet;

use incentive_core::casper::{
    scripted_attack_policy, simulate_casper, voting_reward, CasperAction, CasperConfig, EventKind, VoteOutcome,
};
use incentive_core::chain::Action;
use incentive_core::rng::stream;
use num::traits::{One, ToPrimitive};
use num::BigRational;
use rand::Rng;

/// New deposit for each outcome under the multiplicative rule, in exact rational arithmetic;
/// the additive reward is its change.
fn exact_reward(outcome: VoteOutcome, m: f64, deposit: f64, rho: f64) -> f64 {
    let q = |x: f64| BigRational::from_float(x).unwrap();
    let one = BigRational::one();
    let two = q(2.0);
    let (m, d, rho) = (q(m), q(deposit), q(rho));
    let grown = &one + &m * &rho / &two;
    let new = match outcome {
        VoteOutcome::JustifiedCorrect => grown * &d,
        VoteOutcome::JustifiedWrong => grown / (&one + &rho) * &d,
        VoteOutcome::UnjustifiedCorrect => d.clone(),
        VoteOutcome::UnjustifiedWrong => &d / (&one + &rho),
    };
    (new - d).to_f64().unwrap()
}

#[test]
fn additive_table_is_the_deposit_change() {
    let outcomes = [
        VoteOutcome::JustifiedCorrect,
        VoteOutcome::JustifiedWrong,
        VoteOutcome::UnjustifiedCorrect,
        VoteOutcome::UnjustifiedWrong,
    ];
    for i in 0..=20 {
        let m = i as f64 / 20.0;
        for deposit in [1.0, 3.3e4, 1e7, 2.5e8] {
            for rho in [2.21e-6, 1e-3, 0.05] {
                for o in outcomes {
                    let got = voting_reward(o, m, deposit, rho);
                    let want = exact_reward(o, m, deposit, rho);
                    let err = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
                    assert!(err <= 1e-12, "{o:?} m={m} D={deposit} rho={rho}: {got} vs {want}");
                }
            }
        }
    }
}

fn random_policy(seed: u64) -> impl FnMut(&incentive_core::casper::CasperState) -> CasperAction {
    let mut rng = stream(seed, 99);
    move |st| {
        if st.vote_permitted() && rng.gen_bool(0.5) {
            return CasperAction::Vote;
        }
        let legal: Vec<Action> = Action::ALL.into_iter().filter(|a| st.chain_permitted(*a)).collect();
        CasperAction::Chain(legal[rng.gen_range(0..legal.len())])
    }
}

#[test]
fn rounds_always_close_and_justify_once() {
    let rounds = 100_000;
    let cfg = CasperConfig::new(0.3, 0.3).unwrap();
    let mut open: Option<u64> = None;
    let mut bad = 0u64;
    let run = simulate_casper(&cfg, random_policy(1), rounds, &mut stream(1, 0), |e| match e.kind {
        EventKind::RoundStart => {
            bad += open.is_some() as u64;
            open = Some(e.height);
        }
        EventKind::RoundClose => {
            bad += (open != Some(e.height)) as u64;
            open = None;
        }
        _ => {}
    })
    .unwrap();
    assert_eq!(bad, 0);
    assert_eq!(run.rounds.len(), rounds);
    let mut justified = HashSet::new();
    for r in run.rounds.iter().filter(|r| r.justified) {
        assert!(justified.insert(r.height), "height {} justified twice", r.height);
        assert!(r.m > 2.0 / 3.0);
    }
    assert!(run.rounds.windows(2).all(|w| w[0].height < w[1].height));
}

#[test]
fn attack_runs_justify_each_height_once() {
    let cfg = CasperConfig::new(1.0 / 3.0, 1.0 / 3.0).unwrap();
    let run = simulate_casper(&cfg, |s| scripted_attack_policy(s, 0.3), 20_000, &mut stream(2, 0), |_| {}).unwrap();
    let mut seen = HashSet::new();
    assert!(run.rounds.iter().filter(|r| r.justified).all(|r| seen.insert(r.height)));
}
