//! Block generation, tie resolution, the action vocabulary and feature extraction.

mod features;
mod tree;

pub use features::{extract_features, ChainView, FeatureVector, Protocol};
pub use tree::{Block, BlockId, BlockTree, UNCLE_DEPTH};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// Who mined a block or who backs a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    Agent(usize),
    Honest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningWeights {
    alphas: Vec<f64>,
    honest_alpha: f64,
}

impl MiningWeights {
    pub fn new(alphas: Vec<f64>, honest_alpha: f64) -> Result<Self> {
        if alphas.iter().chain(Some(&honest_alpha)).any(|w| !w.is_finite() || *w < 0.0) {
            return config("mining weights must be finite and non-negative");
        }
        let total: f64 = alphas.iter().sum::<f64>() + honest_alpha;
        if (total - 1.0).abs() > WEIGHT_TOL {
            return config(format!("mining weights sum to {total}, expected 1"));
        }
        Ok(Self { alphas, honest_alpha })
    }

    /// Strategic weights with the honest party taking the remainder.
    pub fn with_residual(alphas: Vec<f64>) -> Result<Self> {
        let total: f64 = alphas.iter().sum();
        if total > 1.0 + WEIGHT_TOL {
            return config(format!("strategic hash power {total} exceeds 1"));
        }
        let honest = (1.0 - total).max(0.0);
        Self::new(alphas, honest)
    }

    pub fn single(alpha: f64) -> Result<Self> {
        Self::with_residual(vec![alpha])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn honest_alpha(&self) -> f64 {
        self.honest_alpha
    }

    pub fn weight(&self, party: Party) -> f64 {
        match party {
            Party::Agent(i) => self.alphas[i],
            Party::Honest => self.honest_alpha,
        }
    }
}

/// Cumulative-sum partition of `[0, 1)`: agents in index order, honest last.
pub fn sample_miner(weights: &MiningWeights, draw: f64) -> Party {
    let mut acc = 0.0;
    for (i, w) in weights.alphas.iter().enumerate() {
        acc += w;
        if draw < acc {
            return Party::Agent(i);
        }
    }
    Party::Honest
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerFractions {
    gammas: Vec<f64>,
}

impl FollowerFractions {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.iter().any(|g| !g.is_finite() || !(0.0..=1.0).contains(g)) {
            return config("follower fractions must lie in [0, 1]");
        }
        let total: f64 = gammas.iter().sum();
        if total > 1.0 + WEIGHT_TOL {
            return config(format!("follower fractions sum to {total} > 1"));
        }
        Ok(Self { gammas })
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn residual(&self) -> f64 {
        (1.0 - self.gammas.iter().sum::<f64>()).max(0.0)
    }

    pub fn weight(&self, party: Party) -> f64 {
        match party {
            Party::Agent(i) => self.gammas.get(i).copied().unwrap_or(0.0),
            Party::Honest => self.residual(),
        }
    }
}

/// Index into `weights` chosen proportionally; uniform when all mass is zero.
pub fn resolve_weighted(weights: &[f64], draw: f64) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::Contract("tie resolution over an empty set".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        let idx = (draw * weights.len() as f64) as usize;
        return Ok(idx.min(weights.len() - 1));
    }
    let target = draw * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return Ok(i);
        }
    }
    Ok(weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1))
}

/// Which tied chain the honest miners follow. The ordering of `tied` fixes the partition.
pub fn resolve_tie(tied: &[Party], gammas: &FollowerFractions, draw: f64) -> Result<Party> {
    let weights: Vec<f64> = tied.iter().map(|p| gammas.weight(*p)).collect();
    Ok(tied[resolve_weighted(&weights, draw)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Adopt,
    Override,
    Wait,
    Match,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Adopt, Action::Override, Action::Wait, Action::Match];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// Override and Match publish blocks; Adopt and Wait only change what the agent mines on.
    pub fn is_active(self) -> bool {
        matches!(self, Action::Override | Action::Match)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Adopt => "adopt",
            Action::Override => "override",
            Action::Wait => "wait",
            Action::Match => "match",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActionMask(pub [bool; 4]);

impl ActionMask {
    pub fn allows(&self, a: Action) -> bool {
        self.0[a.index()]
    }

    pub fn set(&mut self, a: Action, on: bool) {
        self.0[a.index()] = on;
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        Action::ALL.into_iter().filter(|a| self.allows(*a))
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForkLabel {
    #[default]
    Irrelevant,
    Relevant,
    Active,
}

impl ForkLabel {
    pub const ALL: [ForkLabel; 3] = [ForkLabel::Irrelevant, ForkLabel::Relevant, ForkLabel::Active];

    pub fn code(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for ForkLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ForkLabel::Irrelevant => "irrelevant",
            ForkLabel::Relevant => "relevant",
            ForkLabel::Active => "active",
        };
        f.write_str(s)
    }
}
