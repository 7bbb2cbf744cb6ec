use incentive_core::bitcoin::{build_mdp, rollout, BitcoinEnv, BtcEnvConfig, BtcState};
use incentive_core::chain::Action;
use incentive_core::mdp::{MdpModel, Outcome};
use incentive_core::rng::stream;
use incentive_core::solvers::pg::{episodic_policy_gradient, GaussianPolicy, PgSchedule};
use incentive_core::solvers::{
    policy_iteration, q_learning, solve_relative, value_iteration, Criterion, QConfig, StatePolicy, TieBreak,
};
use proptest::prelude::*;
use rand::Rng;

/// Random MDP over `n` states; every state permits Adopt, the others with some probability.
fn random_mdp(n: usize, seed: u64) -> MdpModel<usize> {
    let mut rng = stream(seed, 0);
    let rows: Vec<Vec<Option<Vec<(f64, usize, f64, f64)>>>> = (0..n)
        .map(|_| {
            Action::ALL
                .iter()
                .enumerate()
                .map(|(i, _)| {
                    (i == 0 || rng.gen_bool(0.6)).then(|| {
                        let fan = rng.gen_range(1..4);
                        let w: Vec<f64> = (0..fan).map(|_| rng.gen_range(0.1..1.0)).collect();
                        let tot: f64 = w.iter().sum();
                        w.iter()
                            .map(|p| (p / tot, rng.gen_range(0..n), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)))
                            .collect()
                    })
                })
                .collect()
        })
        .collect();
    MdpModel::explore(0usize, |s, a| {
        rows[*s][a.index()]
            .as_ref()
            .map(|l| l.iter().map(|&(prob, next, attacker, others)| Outcome { prob, next, attacker, others }).collect())
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn value_and_policy_iteration_agree(seed in any::<u64>(), n in 2usize..30, discount in 0.5f64..0.98) {
        let mdp = random_mdp(n, seed);
        let tol = 1e-9;
        let vi = value_iteration(&mdp, discount, tol).unwrap();
        let pi = policy_iteration(&mdp, Criterion::Discounted(discount), 1000).unwrap();
        for (a, b) in vi.values.iter().zip(&pi.values) {
            prop_assert!((a - b).abs() <= 10.0 * tol, "{a} vs {b}");
        }
    }
}

#[test]
fn bitcoin_value_and_policy_iteration_agree() {
    let cfg = BtcEnvConfig::new(0.35, 0.5, 8).unwrap();
    let mdp = build_mdp(&cfg, Some(0.4)).unwrap();
    let vi = value_iteration(&mdp, 0.95, 1e-10).unwrap();
    let pi = policy_iteration(&mdp, Criterion::Discounted(0.95), 1000).unwrap();
    assert!(vi.values.iter().zip(&pi.values).all(|(a, b)| (a - b).abs() <= 1e-9));
}

#[test]
fn optimal_share_is_monotone() {
    let cap = 10;
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 * 0.05).collect();
    let mut by_gamma = Vec::new();
    for gamma in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let row: Vec<f64> = grid
            .iter()
            .map(|&alpha| {
                let mdp = build_mdp(&BtcEnvConfig::new(alpha, gamma, cap).unwrap(), None).unwrap();
                solve_relative(&mdp, alpha, 1e-6, TieBreak::LowestIndex).unwrap().rho_star
            })
            .collect();
        assert!(row.windows(2).all(|w| w[1] >= w[0] - 1e-6), "gamma {gamma}: {row:?}");
        by_gamma.push(row);
    }
    for w in by_gamma.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| *b >= a - 1e-6));
    }
}

#[test]
fn transformed_return_sign_tracks_share() {
    for (alpha, gamma) in [(0.35, 0.5), (0.4, 0.0)] {
        let cfg = BtcEnvConfig::new(alpha, gamma, 20).unwrap();
        let mdp = build_mdp(&cfg, None).unwrap();
        let sol = solve_relative(&mdp, alpha, 1e-7, TieBreak::LowestIndex).unwrap();
        let table = StatePolicy::from_model(&mdp, &sol.policy);
        let policy = |s: BtcState| table.get(&s).unwrap_or(Action::Adopt);
        let r = rollout(&cfg, policy, 2_000_000, &mut stream(8, 0)).unwrap();
        for (rho, sign) in [(sol.rho_star - 0.02, 1.0), (sol.rho_star + 0.02, -1.0)] {
            let transformed = (1.0 - rho) * r.attacker as f64 - rho * r.others as f64;
            assert!(transformed * sign > 0.0, "alpha {alpha} rho {rho}: {transformed}");
        }
    }
}

#[test]
fn learners_stay_inside_their_action_sets() {
    // a masked step is an error, so a completed run never chose one
    for seed in 0..20 {
        let cfg = BtcEnvConfig::new(0.3 + 0.005 * seed as f64, 0.5, 4).unwrap();
        let q = QConfig {
            learn_steps: 20_000,
            eval_steps: 2_000,
            phases: 2,
            discount: 0.99,
            eps_start: 1.0,
            eps_end: 0.5,
            lr_power: 0.6,
            lr_floor: 0.01,
            initial_rho: 0.3,
        };
        let mut env = BitcoinEnv::new(cfg).unwrap();
        let learned = q_learning(&mut env, &q, &mut stream(seed, 0)).unwrap();
        for s in learned.states() {
            let a = learned.greedy(s).unwrap();
            assert!(cfg.mask(*s).allows(a));
        }
    }
    let pol = GaussianPolicy::new(0.4, 0.3, 0.5);
    let sched = PgSchedule { iterations: 50, batch: 32, ..PgSchedule::default() };
    let mut outside = 0;
    episodic_policy_gradient(pol, &sched, &mut stream(1, 0), |x, _| {
        outside += !(0.0..=0.5).contains(&x) as u32;
        -(x - 0.2).powi(2)
    })
    .unwrap();
    assert_eq!(outside, 0);
}
