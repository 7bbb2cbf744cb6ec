use std::sync::Arc;

use serde_json::{json, Value};

use incentive_core::analysis::{
    alpha_replay, check_prop1_bound, evaluate_alpha_path, ingest_hashrate, simulate_epochs, AlphaPath,
    EpochAccounts, PolicyBank, StrategyScore,
};
use incentive_core::bitcoin::{build_mdp, honest_policy, sm1_policy, BitcoinEnv, BtcEnvConfig, BtcState};
use incentive_core::casper::{honest_casper_policy, scripted_attack_policy, simulate_casper, CasperConfig};
use incentive_core::chain::Action;
use incentive_core::multiagent::{osm_strategy, run_tournament, HonestMimic, MultiAgentConfig, Ordering, Sm1Strategy, Strategy};
use incentive_core::rng::stream;
use incentive_core::solvers::{
    evaluate_relative, monte_carlo_eval, q_learning, solve_relative, QConfig, StatePolicy, TieBreak,
};
use incentive_core::withholding::{find_nash, learn_withholding, max_deviation_gain, LearnerConfig, PoolSetup};

use crate::config::{ExperimentConfig, Kind};
use crate::error::CliError;
use crate::output::ResultWriter;

type Run = Result<Value, CliError>;

const SOLVE_TOL: f64 = 1e-7;
const PROFIT_EPS: f64 = 1e-6;

/// Mean, sample std, min, median and max.
struct Agg([f64; 5]);

impl Agg {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let mid = s.len() / 2;
        let median = if s.len() % 2 == 1 { s[mid] } else { 0.5 * (s[mid - 1] + s[mid]) };
        Agg([mean, std, s[0], median, s[s.len() - 1]])
    }

    fn mean(&self) -> f64 {
        self.0[0]
    }

    fn fields(&self) -> impl Iterator<Item = String> + '_ {
        self.0.iter().map(f)
    }
}

fn f(x: &f64) -> String {
    x.to_string()
}

pub fn header(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::SolveOsm => &[
            "alpha", "gamma", "cap", "rho_star", "honest", "sm1", "osm_mc_mean", "osm_mc_std", "osm_mc_min",
            "osm_mc_median", "osm_mc_max", "learned",
        ],
        Kind::ThresholdScan => &["alpha", "gamma", "cap", "rho_star", "gain", "profitable", "policy_honest"],
        Kind::StochasticAlpha => {
            &["gamma", "alpha_mean", "sigma", "strategy", "mean", "std", "min", "median", "max", "trial_std"]
        }
        Kind::Replay => &[
            "input", "gamma", "initial_alpha", "mean_alpha", "strategy", "mean", "std", "min", "median", "max",
            "trial_std",
        ],
        Kind::MultiagentTournament => &[
            "ordering", "alpha", "gamma", "matchup", "agent", "strategy", "rel_reward_mean", "excess_mean",
            "excess_std", "excess_min", "excess_median", "excess_max", "match_fraction",
        ],
        Kind::Casper => &[
            "alpha", "beta", "tau", "honest_vote_reward", "attack_vote_reward", "gain_pct", "gain_pct_std",
            "excess_per_round", "excess_se", "mining_to_voting",
        ],
        Kind::WithholdingNash => &[
            "m1", "m2", "x1", "x2", "r1", "r2", "dilemma", "deviation_gain", "learned_x1", "learned_x2",
            "learned_r1", "learned_r2",
        ],
        Kind::Prop1 => &["source", "alpha", "seed", "k", "n", "gap", "bound", "holds"],
    }
}

pub fn run(cfg: &ExperimentConfig, w: &mut ResultWriter) -> Run {
    match cfg.kind {
        Kind::SolveOsm => solve_osm(cfg, w),
        Kind::ThresholdScan => threshold_scan(cfg, w),
        Kind::StochasticAlpha => stochastic_alpha(cfg, w),
        Kind::Replay => replay(cfg, w),
        Kind::MultiagentTournament => tournament(cfg, w),
        Kind::Casper => casper(cfg, w),
        Kind::WithholdingNash => withholding(cfg, w),
        Kind::Prop1 => prop1(cfg, w),
    }
}

fn sanitized(mdp_cfg: &BtcEnvConfig, states: &[BtcState], p: impl Fn(BtcState) -> Action) -> Vec<Action> {
    states.iter().map(|s| mdp_cfg.sanitize(*s, p(*s))).collect()
}

fn solve_osm(cfg: &ExperimentConfig, w: &mut ResultWriter) -> Run {
    let policies = w.dir().join("policies");
    std::fs::create_dir_all(&policies)?;
    let mut best = Vec::new();
    for gamma in cfg.grid.gamma.values() {
        for alpha in cfg.grid.alpha.values() {
            let env_cfg = BtcEnvConfig::new(alpha, gamma, cfg.cap)?;
            let mdp = build_mdp(&env_cfg, None)?;
            let sol = solve_relative(&mdp, alpha, SOLVE_TOL, TieBreak::LowestIndex)?;
            let honest = evaluate_relative(&mdp, &sanitized(&env_cfg, &mdp.states, honest_policy))?;
            let sm1 = evaluate_relative(&mdp, &sanitized(&env_cfg, &mdp.states, sm1_policy))?;
            let table = StatePolicy::from_model(&mdp, &sol.policy);
            table.save(&policies.join(format!("osm_alpha{alpha}_gamma{gamma}.json")))?;
            let mc: Vec<f64> = cfg
                .seeds
                .iter()
                .map(|&seed| {
                    monte_carlo_eval(
                        || BitcoinEnv::new(env_cfg).expect("validated"),
                        |s: &BtcState| table.get(s).unwrap_or(Action::Adopt),
                        cfg.trials,
                        cfg.steps,
                        seed,
                    )
                    .map(|s| s.mean)
                })
                .collect::<Result<_, _>>()?;
            let learned = match &cfg.learner {
                None => String::new(),
                Some(l) => {
                    let q = QConfig {
                        learn_steps: l.learn_steps,
                        eval_steps: l.eval_steps,
                        phases: l.phases,
                        discount: l.discount,
                        eps_start: l.eps_start,
                        eps_end: l.eps_end,
                        lr_power: l.lr_power,
                        lr_floor: l.lr_floor,
                        initial_rho: alpha,
                    };
                    let mut scores = Vec::new();
                    for &seed in &cfg.seeds {
                        let mut env = BitcoinEnv::new(env_cfg)?;
                        let learned = q_learning(&mut env, &q, &mut stream(seed, 1))?;
                        let p = sanitized(&env_cfg, &mdp.states, |s| learned.greedy(&s).unwrap_or_else(|| honest_policy(s)));
                        scores.push(evaluate_relative(&mdp, &p)?);
                    }
                    f(&Agg::of(&scores).mean())
                }
            };
            let agg = Agg::of(&mc);
            w.row(
                [f(&alpha), f(&gamma), cfg.cap.to_string(), f(&sol.rho_star), f(&honest), f(&sm1)]
                    .into_iter()
                    .chain(agg.fields())
                    .chain([learned]),
            )?;
            best.push(json!({"alpha": alpha, "gamma": gamma, "rho_star": sol.rho_star}));
        }
    }
    Ok(json!({ "rho_star": best }))
}

fn threshold_scan(cfg: &ExperimentConfig, w: &mut ResultWriter) -> Run {
    let mut first = Vec::new();
    for gamma in cfg.grid.gamma.values() {
        let mut alphas = cfg.grid.alpha.values();
        alphas.sort_by(f64::total_cmp);
        let mut found = None;
        for alpha in alphas {
            let env_cfg = BtcEnvConfig::new(alpha, gamma, cfg.cap)?;
            let mdp = build_mdp(&env_cfg, None)?;
            let sol = solve_relative(&mdp, alpha, 1e-9, TieBreak::LowestIndex)?;
            let profitable = sol.rho_star > alpha + PROFIT_EPS;
            let honest_like = (evaluate_relative(&mdp, &sol.policy)? - alpha).abs() < PROFIT_EPS;
            if profitable && found.is_none() {
                found = Some(alpha);
            }
            w.row([
                f(&alpha),
                f(&gamma),
                cfg.cap.to_string(),
                f(&sol.rho_star),
                f(&(sol.rho_star - alpha)),
                profitable.to_string(),
                honest_like.to_string(),
            ])?;
        }
        first.push(json!({"gamma": gamma, "first_profitable_alpha": found}));
    }
    Ok(json!({ "thresholds": first }))
}

fn score_rows(
    w: &mut ResultWriter,
    lead: &[String],
    per_seed: &[Vec<StrategyScore>],
    out: &mut Vec<Value>,
) -> Result<(), CliError> {
    for (i, name) in per_seed[0].iter().map(|s| s.strategy.clone()).enumerate() {
        let means: Vec<f64> = per_seed.iter().map(|r| r[i].summary.mean).collect();
        let trial_std = per_seed.iter().map(|r| r[i].summary.std).sum::<f64>() / per_seed.len() as f64;
        let agg = Agg::of(&means);
        out.push(json!({"key": lead, "strategy": name, "mean": agg.mean()}));
        w.row(lead.iter().cloned().chain([name]).chain(agg.fields()).chain([f(&trial_std)]))?;
    }
    Ok(())
}

fn stochastic_alpha(cfg: &ExperimentConfig, w: &mut ResultWriter) -> Run {
    let mut out = Vec::new();
    for gamma in cfg.grid.gamma.values() {
        let bank = PolicyBank::solve(gamma, cfg.cap, cfg.bank_step)?;
        for mean in cfg.grid.alpha.values() {
            for sigma in cfg.grid.sigma.values() {
                let path = AlphaPath::Gaussian { mean, std: sigma };
                let per_seed: Vec<Vec<StrategyScore>> = cfg
                    .seeds
                    .iter()
                    .map(|&seed| evaluate_alpha_path(path.clone(), gamma, &bank, cfg.trials, cfg.steps, seed))
                    .collect::<Result<_, _>>()?;
                score_rows(w, &[f(&gamma), f(&mean), f(&sigma)], &per_seed, &mut out)?;
            }
        }
    }
    Ok(json!({ "scores": out }))
}

fn replay(cfg: &ExperimentConfig, w: &mut ResultWriter) -> Run {
    let series = cfg.inputs.iter().map(|p| ingest_hashrate(p)).collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for gamma in cfg.grid.gamma.values() {
        let bank = PolicyBank::solve(gamma, cfg.cap, cfg.bank_step)?;
        for s in &series {
            for a0 in cfg.grid.alpha.values() {
                let alphas: Arc<[f64]> = alpha_replay(s, a0)?.into();
                let mean_alpha = alphas.iter().sum::<f64>() / alphas.len() as f64;
                let path = AlphaPath::Replay(alphas);
                let per_seed: Vec<Vec<StrategyScore>> = cfg
                    .seeds
                    .iter()
                    .map(|&seed| evaluate_alpha_path(path.clone(), gamma, &bank, cfg.trials, cfg.steps, seed))
                    .collect::<Result<_, _>>()?;
                let lead = [s.provenance.clone(), f(&gamma), f(&a0), f(&mean_alpha)];
                score_rows(w, &lead, &per_seed, &mut out)?;
            }
        }
    }
    Ok(json!({ "scores": out }))
}

fn orderings(cfg: &ExperimentConfig) -> Vec<Ordering> {
    if cfg.ordering == "rushing" {
        vec![Ordering::Rushing]
    } else {
        cfg.grid.m.iter().map(|&m| Ordering::TimeSegmented(m)).collect()
    }
}

fn strategy(name: &str, alpha: f64, gamma: f64, cap: u32) -> Result<Box<dyn Strategy>, CliError> {
    Ok(match name {
        "honest" => Box::new(HonestMimic),
        "sm1" => Box::new(Sm1Strategy),
        "osm" => Box::new(osm_strategy(alpha, gamma, cap, TieBreak::LowestIndex)?),
        "osm-wait" => Box::new(osm_strategy(alpha, gamma, cap, TieBreak::WaitAtOrigin)?),
        other => return Err(CliError::Usage(format!("unknown strategy '{other}'"))),
    })
}

fn tournament(cfg: &ExperimentConfig, w: &mut ResultWriter) -> Run {
    let mut worst = Vec::new();
    for ordering in orderings(cfg) {
        for gamma in cfg.grid.gamma.values() {
            for alpha in cfg.grid.alpha.values() {
                for mu in &cfg.matchups {
                    let k = mu.len();
                    let mut game = MultiAgentConfig::new(vec![alpha; k], vec![gamma; k], ordering)?;
                    game.cap = cfg.cap;
                    game.validate()?;
                    let boxed = mu.iter().map(|s| strategy(s, alpha, gamma, cfg.cap)).collect::<Result<Vec<_>, _>>()?;
                    let refs: Vec<&dyn Strategy> = boxed.iter().map(|b| b.as_ref()).collect();
                    let runs = cfg
                        .seeds
                        .iter()
                        .map(|&seed| run_tournament(&game, &refs, cfg.episodes, seed))
                        .collect::<Result<Vec<_>, _>>()?;
                    let label = mu.join("+");
                    let honest_alpha = 1.0 - alpha * k as f64;
                    let mut max_abs: f64 = 0.0;
                    for party in 0..=k {
                        let (name, share, means, matchf) = if party < k {
                            let m: Vec<f64> = runs.iter().map(|r| r.agents[party].rel_reward_mean).collect();
                            let mf = runs.iter().map(|r| r.agents[party].match_fraction).sum::<f64>() / runs.len() as f64;
                            (mu[party].clone(), alpha, m, f(&mf))
                        } else {
                            ("honest-party".to_string(), honest_alpha, runs.iter().map(|r| r.honest_mean).collect(), String::new())
                        };
                        let excess: Vec<f64> = means.iter().map(|m| m - share).collect();
                        let agg = Agg::of(&excess);
                        if party < k {
                            max_abs = max_abs.max(agg.mean().abs());
                        }
                        let agent = if party < k { party.to_string() } else { "honest".into() };
                        w.row(
                            [ordering.label(), f(&alpha), f(&gamma), label.clone(), agent, name, f(&Agg::of(&means).mean())]
                                .into_iter()
                                .chain(agg.fields())
                                .chain([matchf]),
                        )?;
                    }
                    worst.push(json!({"ordering": ordering.label(), "alpha": alpha, "gamma": gamma, "matchup": label, "max_abs_excess": max_abs}));
                }
            }
        }
    }
    Ok(json!({ "matchups": worst }))
}

fn casper(cfg: &ExperimentConfig, w: &mut ResultWriter) -> Run {
    let mut out = Vec::new();
    for alpha in cfg.grid.alpha.values() {
        for beta in cfg.grid.beta.values() {
            for tau in cfg.grid.tau.values() {
                let c = CasperConfig::new(alpha, beta)?;
                let (mut hv, mut av, mut gain, mut ex, mut se, mut ratio) = (vec![], vec![], vec![], vec![], vec![], vec![]);
                for &seed in &cfg.seeds {
                    let base = simulate_casper(&c, honest_casper_policy, cfg.rounds, &mut stream(seed, 0), |_| {})?;
                    let attack =
                        simulate_casper(&c, |s| scripted_attack_policy(s, tau), cfg.rounds, &mut stream(seed, 0), |_| {})?;
                    let (h, a) = (base.relative_voting(), attack.relative_voting());
                    let excess = attack.excess_voting(beta);
                    let n = excess.len() as f64;
                    let m = excess.iter().sum::<f64>() / n;
                    let v = excess.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                    hv.push(h);
                    av.push(a);
                    gain.push(100.0 * (a / h - 1.0));
                    ex.push(m);
                    se.push((v / n).sqrt());
                    ratio.push(base.mining_to_voting(&c));
                }
                let mean = |v: &[f64]| Agg::of(v).mean();
                let g = Agg::of(&gain);
                out.push(json!({"alpha": alpha, "beta": beta, "tau": tau, "gain_pct": g.mean()}));
                w.row([
                    f(&alpha),
                    f(&beta),
                    f(&tau),
                    f(&mean(&hv)),
                    f(&mean(&av)),
                    f(&g.0[0]),
                    f(&g.0[1]),
                    f(&mean(&ex)),
                    f(&mean(&se)),
                    f(&mean(&ratio)),
                ])?;
            }
        }
    }
    Ok(json!({ "points": out }))
}

fn withholding(cfg: &ExperimentConfig, w: &mut ResultWriter) -> Run {
    let second = cfg.grid.pool2.values();
    let mut out = Vec::new();
    for m1 in cfg.grid.pool.values() {
        let partners = if second.is_empty() { vec![m1] } else { second.clone() };
        for m2 in partners {
            let setup = PoolSetup::new(m1, m2)?;
            let ne = find_nash(setup, 1e-6)?;
            let gain = max_deviation_gain(setup, ne.x1, ne.x2, 1e-3)?;
            let learned = cfg
                .seeds
                .iter()
                .map(|&seed| learn_withholding(setup, &LearnerConfig::default(), &mut stream(seed, 0)))
                .collect::<Result<Vec<_>, _>>()?;
            let avg = |g: fn(&incentive_core::withholding::LearnedPoint) -> f64| {
                learned.iter().map(g).sum::<f64>() / learned.len() as f64
            };
            let dilemma = ne.r1 < 1.0 && ne.r2 < 1.0;
            out.push(json!({"m1": m1, "m2": m2, "x1": ne.x1, "x2": ne.x2, "r1": ne.r1, "r2": ne.r2, "dilemma": dilemma}));
            w.row([
                f(&m1),
                f(&m2),
                f(&ne.x1),
                f(&ne.x2),
                f(&ne.r1),
                f(&ne.r2),
                dilemma.to_string(),
                f(&gain),
                f(&avg(|p| p.x1)),
                f(&avg(|p| p.x2)),
                f(&avg(|p| p.r1)),
                f(&avg(|p| p.r2)),
            ])?;
        }
    }
    Ok(json!({ "equilibria": out }))
}

fn prop1(cfg: &ExperimentConfig, w: &mut ResultWriter) -> Run {
    let m = cfg.blocks_per_epoch as f64;
    let mut violations = 0usize;
    let mut emit = |w: &mut ResultWriter, lead: [String; 3], acct: &EpochAccounts, k: u32, n: u32| {
        let c = check_prop1_bound(acct, n, k)?;
        violations += !c.holds as usize;
        w.row(lead.into_iter().chain([k.to_string(), n.to_string(), f(&c.gap), f(&c.bound), c.holds.to_string()]))
    };
    for &k in &cfg.grid.k {
        let extremal = EpochAccounts::with_epoch(m, 0.0, 0.0, (k - 1) as f64 * m, m, 1.0)?;
        for &n in &cfg.grid.n {
            emit(w, ["extremal".into(), String::new(), String::new()], &extremal, k, n)?;
        }
    }
    let gamma = cfg.grid.gamma.values().first().copied().unwrap_or(0.5);
    let epochs = cfg.grid.n.iter().copied().max().unwrap_or(1);
    for alpha in cfg.grid.alpha.values() {
        let env_cfg = BtcEnvConfig::new(alpha, gamma, cfg.cap)?;
        let mdp = build_mdp(&env_cfg, None)?;
        let osm = StatePolicy::from_model(&mdp, &solve_relative(&mdp, alpha, SOLVE_TOL, TieBreak::LowestIndex)?.policy);
        let policies: [(&str, Box<dyn Fn(BtcState) -> Action>); 3] = [
            ("honest", Box::new(honest_policy)),
            ("sm1", Box::new(sm1_policy)),
            ("osm", Box::new(|s| osm.get(&s).unwrap_or(Action::Adopt))),
        ];
        for (i, (name, p)) in policies.iter().enumerate() {
            for &seed in &cfg.seeds {
                let sim = simulate_epochs(&env_cfg, p, cfg.blocks_per_epoch, epochs, &mut stream(seed, i as u64))?;
                for &k in &cfg.grid.k {
                    for &n in &cfg.grid.n {
                        emit(w, [name.to_string(), f(&alpha), seed.to_string()], &sim.accounts, k, n)?;
                    }
                }
            }
        }
    }
    Ok(json!({ "violations": violations }))
}
