use std::sync::Arc;

use crate::bitcoin::{build_mdp, legalize, sm1_policy, BtcEnvConfig, BtcState};
use crate::chain::{Action, ForkLabel};
use crate::error::Result;
use crate::solvers::{solve_relative, StatePolicy, TieBreak};

use super::env::AgentObs;

/// A policy over a single agent's observation.
pub trait Strategy: Send + Sync {
    fn act(&self, obs: &AgentObs) -> Action;
    fn name(&self) -> String;
}

impl<T: Strategy + ?Sized> Strategy for Arc<T> {
    fn act(&self, obs: &AgentObs) -> Action {
        (**self).act(obs)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

/// Follows the longest public chain and publishes every block as soon as it has one.
#[derive(Debug, Clone, Copy, Default)]
pub struct HonestMimic;

impl Strategy for HonestMimic {
    fn act(&self, obs: &AgentObs) -> Action {
        let s = obs.state;
        let a = if s.h > s.a || (s.a == 0 && s.h == 0) {
            Action::Adopt
        } else if s.a > s.h {
            Action::Override
        } else if s.fork == ForkLabel::Relevant {
            Action::Match
        } else {
            Action::Wait
        };
        legalize(obs.mask, a)
    }

    fn name(&self) -> String {
        "honest".into()
    }
}

/// The classic selfish-mining automaton.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sm1Strategy;

impl Strategy for Sm1Strategy {
    fn act(&self, obs: &AgentObs) -> Action {
        legalize(obs.mask, sm1_policy(obs.state))
    }

    fn name(&self) -> String {
        "sm1".into()
    }
}

/// A fixed lookup table. Unknown states try the same fork lengths under other labels, then `fallback`.
#[derive(Debug, Clone)]
pub struct TableStrategy {
    pub label: String,
    pub table: StatePolicy<BtcState>,
    pub fallback: fn(BtcState) -> Action,
}

impl Strategy for TableStrategy {
    fn act(&self, obs: &AgentObs) -> Action {
        let s = obs.state;
        let a = self
            .table
            .get(&s)
            .or_else(|| ForkLabel::ALL.iter().find_map(|&f| self.table.get(&BtcState::new(s.a, s.h, f))))
            .unwrap_or_else(|| (self.fallback)(s));
        legalize(obs.mask, a)
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

fn behind_adopts(s: BtcState) -> Action {
    if s.h > s.a {
        Action::Adopt
    } else {
        Action::Wait
    }
}

/// Single-agent optimal table at `alpha`, treating everyone else as one honest party.
pub fn osm_strategy(alpha: f64, gamma: f64, cap: u32, tie: TieBreak) -> Result<TableStrategy> {
    let cfg = BtcEnvConfig::new(alpha, gamma, cap)?;
    let mdp = build_mdp(&cfg, None)?;
    let solved = solve_relative(&mdp, alpha, 1e-7, tie)?;
    let label = match tie {
        TieBreak::LowestIndex => "osm",
        TieBreak::WaitAtOrigin => "osm_wait",
    };
    Ok(TableStrategy { label: label.into(), table: StatePolicy::from_model(&mdp, &solved.policy), fallback: behind_adopts })
}
