use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::Action;
use crate::error::Result;
use crate::rng::{stream, SimRng};

use super::env::{MultiAgentConfig, MultiAgentEnv, Ordering};
use super::strategy::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeStats {
    /// Own settled blocks over all settled blocks, agents first, honest last.
    pub relative: Vec<f64>,
    pub settled: Vec<u64>,
    /// Per agent, counts indexed by `Action::index`.
    pub actions: Vec<[u64; 4]>,
}

/// Plays one episode from a fresh environment.
pub fn run_episode<S: Strategy + ?Sized>(
    cfg: &MultiAgentConfig,
    strategies: &[&S],
    rng: &mut SimRng,
) -> Result<EpisodeStats> {
    let mut env = MultiAgentEnv::new(cfg.clone())?;
    let k = cfg.k();
    let mut actions = vec![[0u64; 4]; k];
    let mut joint = vec![Action::Wait; k];
    while !env.done() {
        for (i, s) in strategies.iter().enumerate() {
            joint[i] = s.act(&env.observe(i));
            actions[i][joint[i].index()] += 1;
        }
        env.joint_step(&joint, rng)?;
    }
    let ledger = env.ledger();
    Ok(EpisodeStats { relative: ledger.relative(), settled: ledger.accepted.clone(), actions })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSummary {
    pub agent: usize,
    pub strategy: String,
    pub alpha: f64,
    pub gamma: f64,
    pub rel_reward_mean: f64,
    pub rel_reward_std: f64,
    /// Share of Match among this agent's publications (Override or Match).
    pub match_fraction: f64,
    /// Fraction of turns per action, indexed by `Action::index`.
    pub action_freq: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TournamentResult {
    pub ordering: Ordering,
    pub episodes: usize,
    pub agents: Vec<AgentSummary>,
    pub honest_mean: f64,
    pub honest_std: f64,
    /// Per-episode relative rewards (agents then honest), in episode order.
    #[serde(skip)]
    pub per_episode: Vec<Vec<f64>>,
}

impl TournamentResult {
    /// Per-episode rewards of one party, for paired comparisons across tournaments with matched seeds.
    pub fn series(&self, party: usize) -> Vec<f64> {
        self.per_episode.iter().map(|r| r[party]).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["agent", "alpha", "gamma", "ordering", "episodes", "rel_reward_mean", "rel_reward_std", "match_fraction"])?;
        for a in &self.agents {
            w.write_record([
                a.agent.to_string(),
                a.alpha.to_string(),
                a.gamma.to_string(),
                self.ordering.label(),
                self.episodes.to_string(),
                a.rel_reward_mean.to_string(),
                a.rel_reward_std.to_string(),
                a.match_fraction.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let m = xs.clone().sum::<f64>() / n;
    let v = if n > 1.0 { xs.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v.sqrt())
}

/// Independent episodes in parallel; episode `e` draws from stream `e` of `seed`.
pub fn run_tournament<S: Strategy + ?Sized>(
    cfg: &MultiAgentConfig,
    strategies: &[&S],
    episodes: usize,
    seed: u64,
) -> Result<TournamentResult> {
    cfg.validate()?;
    if strategies.len() != cfg.k() {
        return Err(crate::Error::Config(format!("{} strategies for {} agents", strategies.len(), cfg.k())));
    }
    let runs: Vec<EpisodeStats> = (0..episodes)
        .into_par_iter()
        .map(|e| run_episode(cfg, strategies, &mut stream(seed, e as u64)))
        .collect::<Result<_>>()?;
    let k = cfg.k();
    let agents = (0..k)
        .map(|i| {
            let (m, s) = mean_std(runs.iter().map(|r| r.relative[i]));
            let mut counts = [0u64; 4];
            for r in &runs {
                for (c, x) in counts.iter_mut().zip(r.actions[i]) {
                    *c += x;
                }
            }
            let total: u64 = counts.iter().sum();
            let publ = counts[Action::Override.index()] + counts[Action::Match.index()];
            AgentSummary {
                agent: i,
                strategy: strategies[i].name(),
                alpha: cfg.alphas[i],
                gamma: cfg.gammas[i],
                rel_reward_mean: m,
                rel_reward_std: s,
                match_fraction: if publ == 0 { 0.0 } else { counts[Action::Match.index()] as f64 / publ as f64 },
                action_freq: counts.map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 }),
            }
        })
        .collect();
    let (honest_mean, honest_std) = mean_std(runs.iter().map(|r| r.relative[k]));
    Ok(TournamentResult {
        ordering: cfg.ordering,
        episodes,
        agents,
        honest_mean,
        honest_std,
        per_episode: runs.into_iter().map(|r| r.relative).collect(),
    })
}
