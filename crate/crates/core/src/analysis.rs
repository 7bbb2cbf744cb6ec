//! Difficulty-adjusted reward accounting, time-varying hash power and hash-rate replay.

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bitcoin::{build_mdp, honest_policy, sm1_policy, step, BtcEnvConfig, BtcState};
use crate::chain::{Action, ActionMask};
use crate::error::{config, Error, Result};
use crate::rng::SimRng;
use crate::solvers::{monte_carlo_eval, solve_relative, EnvReward, Environment, McSummary, StatePolicy, TieBreak};

/// Per-epoch block accounts under the deterministic analysis, where every epoch repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochAccounts {
    pub attacker_main: f64,
    pub others_main: f64,
    pub attacker_stale: f64,
    pub others_stale: f64,
    pub blocks_per_epoch: f64,
    /// Target inter-block time.
    pub target_interval: f64,
}

impl EpochAccounts {
    /// Accounts with the Bitcoin defaults of 2016 blocks per epoch and a 10 minute target.
    pub fn new(attacker_main: f64, others_main: f64, attacker_stale: f64, others_stale: f64) -> Result<Self> {
        Self::with_epoch(attacker_main, others_main, attacker_stale, others_stale, 2016.0, 10.0)
    }

    pub fn with_epoch(
        attacker_main: f64,
        others_main: f64,
        attacker_stale: f64,
        others_stale: f64,
        blocks_per_epoch: f64,
        target_interval: f64,
    ) -> Result<Self> {
        let a = Self { attacker_main, others_main, attacker_stale, others_stale, blocks_per_epoch, target_interval };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [self.attacker_main, self.others_main, self.attacker_stale, self.others_stale];
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return config(format!("block counts must be finite and non-negative: {counts:?}"));
        }
        if !(self.blocks_per_epoch > 0.0 && self.target_interval > 0.0) {
            return config("epoch length and target interval must be positive");
        }
        let main = self.attacker_main + self.others_main;
        if (main - self.blocks_per_epoch).abs() > 1e-9 * self.blocks_per_epoch {
            return config(format!("main-chain blocks {main} != blocks per epoch {}", self.blocks_per_epoch));
        }
        Ok(())
    }

    pub fn stale(&self) -> f64 {
        self.attacker_stale + self.others_stale
    }

    /// Attacker share of main-chain blocks.
    pub fn relative(&self) -> f64 {
        self.attacker_main / (self.attacker_main + self.others_main)
    }

    /// Whether the stale count is feasible with `actors` concurrent branches.
    pub fn feasible_for(&self, actors: u32) -> bool {
        self.stale() <= (actors.saturating_sub(1)) as f64 * self.blocks_per_epoch * (1.0 + 1e-12)
    }
}

/// Absolute reward rate over `epochs` epochs of difficulty adjustment.
pub fn reward_rate(acct: &EpochAccounts, epochs: u32) -> Result<f64> {
    if epochs == 0 {
        return Err(Error::Contract("reward rate needs at least one epoch".into()));
    }
    let main = acct.attacker_main + acct.others_main;
    Ok(acct.attacker_main / (acct.target_interval * (main + acct.stale() / epochs as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop1Check {
    /// `|T0 * R_n - relative|`.
    pub gap: f64,
    /// `(k - 1) / n`.
    pub bound: f64,
    pub holds: bool,
}

pub fn check_prop1_bound(acct: &EpochAccounts, epochs: u32, actors: u32) -> Result<Prop1Check> {
    if actors < 2 {
        return Err(Error::Contract(format!("the bound needs at least two actors, got {actors}")));
    }
    let scaled = acct.target_interval * reward_rate(acct, epochs)?;
    let gap = (scaled - acct.relative()).abs();
    let bound = (actors - 1) as f64 / epochs as f64;
    Ok(Prop1Check { gap, bound, holds: gap <= bound })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSimulation {
    /// Epoch-averaged accounts, the input of the deterministic analysis.
    pub accounts: EpochAccounts,
    pub epochs: u32,
    /// `T0 * R_n` from the averaged accounts.
    pub scaled_rate: f64,
    pub relative: f64,
    /// Raw tallies of each simulated epoch.
    pub per_epoch: Vec<EpochAccounts>,
    /// Attacker main-chain blocks over total duration, with each epoch's difficulty set by the previous one.
    pub raw_scaled_rate: f64,
}

/// Runs the Bitcoin environment until `epochs * blocks_per_epoch` blocks are on the main chain.
/// Stale blocks are charged to the epoch in which they are discarded.
pub fn simulate_epochs<P>(
    cfg: &BtcEnvConfig,
    policy: P,
    blocks_per_epoch: u64,
    epochs: u32,
    rng: &mut SimRng,
) -> Result<EpochSimulation>
where
    P: Fn(BtcState) -> Action,
{
    cfg.validate()?;
    if epochs == 0 || blocks_per_epoch == 0 {
        return Err(Error::Contract("need at least one epoch of at least one block".into()));
    }
    let m = blocks_per_epoch;
    let mut tallies = vec![[0u64; 4]; epochs as usize];
    let mut s = BtcState::START;
    let mut main = 0u64;
    let target = m * epochs as u64;
    while main < target {
        let epoch = (main / m) as usize;
        let action = cfg.sanitize(s, policy(s));
        let o = step(cfg, s, action, rng)?;
        let attacker_stale = if action == Action::Adopt { s.a } else { 0 };
        tallies[epoch][2] += attacker_stale as u64;
        tallies[epoch][3] += (o.stale - attacker_stale) as u64;
        let mut credit = |count: u32, slot: usize, main: &mut u64| {
            for _ in 0..count {
                if *main >= target {
                    break;
                }
                tallies[(*main / m) as usize][slot] += 1;
                *main += 1;
            }
        };
        credit(o.attacker, 0, &mut main);
        credit(o.others, 1, &mut main);
        s = o.next;
    }
    let per_epoch: Vec<EpochAccounts> = tallies
        .iter()
        .map(|t| EpochAccounts::with_epoch(t[0] as f64, t[1] as f64, t[2] as f64, t[3] as f64, m as f64, 1.0))
        .collect::<Result<_>>()?;
    let n = epochs as f64;
    let mean = |f: fn(&EpochAccounts) -> f64| per_epoch.iter().map(f).sum::<f64>() / n;
    let accounts = EpochAccounts::with_epoch(
        mean(|a| a.attacker_main),
        m as f64 - mean(|a| a.attacker_main),
        mean(|a| a.attacker_stale),
        mean(|a| a.others_stale),
        m as f64,
        1.0,
    )?;
    let mut duration = 0.0;
    let mut difficulty = 1.0;
    for a in &per_epoch {
        let mined = m as f64 + a.stale();
        duration += mined * difficulty;
        difficulty *= m as f64 / mined;
    }
    let raw = per_epoch.iter().map(|a| a.attacker_main).sum::<f64>() / duration;
    Ok(EpochSimulation {
        accounts,
        epochs,
        scaled_rate: reward_rate(&accounts, epochs)?,
        relative: accounts.relative(),
        per_epoch,
        raw_scaled_rate: raw,
    })
}

/// Independent per-step draws from a normal law, clamped to `[0, 0.5]`.
pub fn gaussian_alpha_process(mean: f64, std: f64, horizon: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    let draw = GaussianAlpha::new(mean, std)?;
    Ok((0..horizon).map(|_| draw.sample(rng)).collect())
}

#[derive(Debug, Clone, Copy)]
struct GaussianAlpha {
    mean: f64,
    normal: Option<Normal<f64>>,
}

impl GaussianAlpha {
    fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean > 0.0 && mean < 0.5) {
            return config(format!("mean hash power {mean} outside (0, 0.5)"));
        }
        if !(std.is_finite() && std >= 0.0) {
            return config(format!("noise std {std} must be finite and non-negative"));
        }
        let normal = if std > 0.0 { Some(Normal::new(mean, std).map_err(|e| Error::Config(e.to_string()))?) } else { None };
        Ok(Self { mean, normal })
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        match &self.normal {
            Some(n) => n.sample(rng).clamp(0.0, 0.5),
            None => self.mean,
        }
    }
}

/// Where the attacker's hash power comes from at each step.
#[derive(Debug, Clone)]
pub enum AlphaPath {
    /// Fresh Gaussian draw every step.
    Gaussian { mean: f64, std: f64 },
    /// A fixed series spread evenly over the horizon, constant between samples.
    Replay(Arc<[f64]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaObs {
    pub state: BtcState,
    /// Hash power governing the coming mining event.
    pub alpha: f64,
}

/// Bitcoin environment whose hash power changes from step to step.
#[derive(Debug, Clone)]
pub struct VaryingAlphaEnv {
    cfg: BtcEnvConfig,
    path: AlphaPath,
    gaussian: Option<GaussianAlpha>,
    horizon: u64,
    t: u64,
    state: BtcState,
}

impl VaryingAlphaEnv {
    pub fn new(gamma: f64, cap: u32, path: AlphaPath, horizon: u64) -> Result<Self> {
        let cfg = BtcEnvConfig::new(0.0, gamma, cap)?;
        let gaussian = match &path {
            AlphaPath::Gaussian { mean, std } => Some(GaussianAlpha::new(*mean, *std)?),
            AlphaPath::Replay(series) => {
                if series.is_empty() {
                    return config("replay series is empty");
                }
                if series.iter().any(|a| !(0.0..=0.5).contains(a)) {
                    return config("replay hash power outside [0, 0.5]");
                }
                None
            }
        };
        if horizon == 0 {
            return config("horizon must be positive");
        }
        Ok(Self { cfg, path, gaussian, horizon, t: 0, state: BtcState::START })
    }

    fn refresh(&mut self, rng: &mut SimRng) {
        self.cfg.alpha = match (&self.path, &self.gaussian) {
            (_, Some(g)) => g.sample(rng),
            (AlphaPath::Replay(series), None) => {
                let idx = (self.t.min(self.horizon - 1) as u128 * series.len() as u128 / self.horizon as u128) as usize;
                series[idx]
            }
            (AlphaPath::Gaussian { .. }, None) => unreachable!("validated in new"),
        };
    }
}

impl Environment for VaryingAlphaEnv {
    type Obs = AlphaObs;

    fn reset(&mut self, rng: &mut SimRng) {
        self.t = 0;
        self.state = BtcState::START;
        self.refresh(rng);
    }

    fn observe(&self) -> AlphaObs {
        AlphaObs { state: self.state, alpha: self.cfg.alpha }
    }

    fn mask(&self) -> ActionMask {
        self.cfg.mask(self.state)
    }

    fn step(&mut self, action: Action, rng: &mut SimRng) -> Result<EnvReward> {
        let o = step(&self.cfg, self.state, action, rng)?;
        self.state = o.next;
        self.t += 1;
        self.refresh(rng);
        Ok(EnvReward { attacker: o.attacker as f64, others: o.others as f64 })
    }
}

/// Optimal relative-reward policies on a hash-power grid; queries use the nearest grid point.
#[derive(Debug, Clone)]
pub struct PolicyBank {
    pub grid: Vec<f64>,
    pub rho_star: Vec<f64>,
    policies: Vec<StatePolicy<BtcState>>,
    cap: u32,
}

impl PolicyBank {
    /// Solves every grid point `0, step, 2 step, ..` up to 0.5; zero hash power maps to honest play.
    pub fn solve(gamma: f64, cap: u32, step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 0.5) {
            return config(format!("grid step {step} outside (0, 0.5]"));
        }
        let points = (0.5 / step + 1e-9).floor() as usize;
        let grid: Vec<f64> = (0..=points).map(|i| (i as f64 * step).min(0.5)).collect();
        let solved: Vec<(f64, StatePolicy<BtcState>)> = grid
            .par_iter()
            .map(|&alpha| {
                let cfg = BtcEnvConfig::new(alpha, gamma, cap)?;
                let mdp = build_mdp(&cfg, None)?;
                if alpha == 0.0 {
                    return Ok((0.0, StatePolicy::from_fn(mdp.states.iter().copied(), |s| cfg.sanitize(*s, honest_policy(*s)))));
                }
                let sol = solve_relative(&mdp, alpha, 1e-7, TieBreak::LowestIndex)?;
                Ok((sol.rho_star, StatePolicy::from_model(&mdp, &sol.policy)))
            })
            .collect::<Result<_>>()?;
        let (rho_star, policies) = solved.into_iter().unzip();
        Ok(Self { grid, rho_star, policies, cap })
    }

    fn nearest(&self, alpha: f64) -> usize {
        let step = self.grid.get(1).copied().unwrap_or(0.5);
        ((alpha / step).round() as usize).min(self.grid.len() - 1)
    }

    pub fn act(&self, state: BtcState, alpha: f64) -> Action {
        let mask = crate::bitcoin::capped_mask(state, self.cap);
        let a = self.policies[self.nearest(alpha)].get(&state).unwrap_or_else(|| honest_policy(state));
        crate::bitcoin::legalize(mask, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyScore {
    pub strategy: String,
    pub summary: McSummary,
}

/// Honest, SM1 and the per-hash-power optimal policy under a time-varying hash power.
pub fn evaluate_alpha_path(
    path: AlphaPath,
    gamma: f64,
    bank: &PolicyBank,
    trials: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<StrategyScore>> {
    let mk = || VaryingAlphaEnv::new(gamma, bank.cap, path.clone(), steps as u64).expect("validated below");
    VaryingAlphaEnv::new(gamma, bank.cap, path.clone(), steps as u64)?;
    let honest = monte_carlo_eval(mk, |o: &AlphaObs| honest_policy(o.state), trials, steps, seed)?;
    let sm1 = monte_carlo_eval(mk, |o: &AlphaObs| sm1_policy(o.state), trials, steps, seed)?;
    let osm = monte_carlo_eval(mk, |o: &AlphaObs| bank.act(o.state, o.alpha), trials, steps, seed)?;
    Ok(vec![
        StrategyScore { strategy: "honest".into(), summary: honest },
        StrategyScore { strategy: "sm1".into(), summary: sm1 },
        StrategyScore { strategy: "osm".into(), summary: osm },
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HashRateSeries {
    pub timestamps: Vec<DateTime<Utc>>,
    pub rates: Vec<f64>,
    pub provenance: String,
}

impl HashRateSeries {
    pub fn new(timestamps: Vec<DateTime<Utc>>, rates: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if timestamps.len() != rates.len() || rates.is_empty() {
            return Err(Error::Data { line: 0, msg: "need equally many timestamps and rates, at least one".into() });
        }
        for (i, r) in rates.iter().enumerate() {
            if !(r.is_finite() && *r > 0.0) {
                return Err(Error::Data { line: i + 2, msg: format!("hash rate {r} is not positive") });
            }
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::Data { line: i + 3, msg: format!("timestamp {} does not follow {}", w[1], w[0]) });
            }
        }
        Ok(Self { timestamps, rates, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// Reads a `timestamp,total_hashrate` CSV with RFC 3339 timestamps. The provenance is the file stem.
pub fn ingest_hashrate(path: &Path) -> Result<HashRateSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["timestamp", "total_hashrate"] {
        return Err(Error::Data { line: 1, msg: format!("expected header timestamp,total_hashrate, got {:?}", header) });
    }
    let mut timestamps = Vec::new();
    let mut rates = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::Data { line, msg: format!("expected 2 fields, got {}", rec.len()) });
        }
        let ts = DateTime::parse_from_rfc3339(&rec[0])
            .map_err(|e| Error::Data { line, msg: format!("bad timestamp {:?}: {e}", &rec[0]) })?
            .with_timezone(&Utc);
        let rate: f64 =
            rec[1].parse().map_err(|e| Error::Data { line, msg: format!("bad hash rate {:?}: {e}", &rec[1]) })?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Data { line, msg: format!("hash rate {rate} is not positive") });
        }
        if let Some(prev) = timestamps.last() {
            if ts <= *prev {
                return Err(Error::Data { line, msg: format!("timestamp {ts} does not follow {prev}") });
            }
        }
        timestamps.push(ts);
        rates.push(rate);
    }
    let provenance = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    HashRateSeries::new(timestamps, rates, provenance)
}

/// Relative hash power of an attacker whose raw power is fixed by `initial_alpha` at the first
/// sample; the series is taken as the power of everyone else.
pub fn alpha_replay(series: &HashRateSeries, initial_alpha: f64) -> Result<Vec<f64>> {
    if !(initial_alpha > 0.0 && initial_alpha <= 0.5) {
        return config(format!("initial hash power {initial_alpha} outside (0, 0.5]"));
    }
    let first = *series.rates.first().ok_or_else(|| Error::Data { line: 0, msg: "empty series".into() })?;
    let own = initial_alpha / (1.0 - initial_alpha) * first;
    Ok(series.rates.iter().map(|h| (own / (own + h)).clamp(0.0, 0.5)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn substitution_example() {
        let a = EpochAccounts::with_epoch(40.0, 60.0, 10.0, 5.0, 100.0, 1.0).unwrap();
        assert!((reward_rate(&a, 2).unwrap() - 40.0 / 107.5).abs() < 1e-15);
    }

    #[test]
    fn no_stale_means_no_gap() {
        let a = EpochAccounts::new(806.0, 1210.0, 0.0, 0.0).unwrap();
        for n in [1, 5, 50] {
            let c = check_prop1_bound(&a, n, 2).unwrap();
            assert!(c.gap < 1e-15 && c.holds);
            assert!((10.0 * reward_rate(&a, n).unwrap() - 806.0 / 2016.0).abs() < 1e-15);
        }
    }

    #[test]
    fn accounts_must_fill_the_epoch() {
        assert!(EpochAccounts::new(1.0, 2.0, 0.0, 0.0).is_err());
        assert!(EpochAccounts::new(2017.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn honest_epochs_have_no_stale_blocks() {
        let cfg = BtcEnvConfig::new(0.3, 0.5, 20).unwrap();
        let sim = simulate_epochs(&cfg, honest_policy, 200, 3, &mut stream(1, 0)).unwrap();
        assert_eq!(sim.accounts.stale(), 0.0);
        assert_eq!(sim.scaled_rate, sim.relative);
        assert!((sim.raw_scaled_rate - sim.relative).abs() < 1e-12);
        assert!(sim.per_epoch.iter().all(|e| e.attacker_main + e.others_main == 200.0));
    }

    #[test]
    fn constant_noise_free_process() {
        let xs = gaussian_alpha_process(0.4, 0.0, 50, &mut stream(0, 0)).unwrap();
        assert!(xs.iter().all(|&a| a == 0.4));
        assert!(gaussian_alpha_process(0.5, 0.1, 5, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn replay_holds_samples_piecewise() {
        let series: Arc<[f64]> = vec![0.1, 0.2].into();
        let mut env = VaryingAlphaEnv::new(0.0, 10, AlphaPath::Replay(series), 4).unwrap();
        let mut rng = stream(0, 0);
        env.reset(&mut rng);
        let mut seen = vec![env.observe().alpha];
        for _ in 0..3 {
            let a = env.mask().iter().next().unwrap();
            env.step(a, &mut rng).unwrap();
            seen.push(env.observe().alpha);
        }
        assert_eq!(seen, vec![0.1, 0.1, 0.2, 0.2]);
    }
}
