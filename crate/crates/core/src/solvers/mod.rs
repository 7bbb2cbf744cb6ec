//! Exact solvers, the relative-reward reduction, Monte Carlo evaluation and desk-scale learners.

mod exact;
mod montecarlo;
pub mod pg;
mod qlearn;
mod relative;

pub use exact::{
    evaluate_average, evaluate_relative, greedy_policy, policy_iteration, relative_value_iteration, value_iteration,
    AverageEval, Criterion, RviOutcome,
};
pub use montecarlo::{monte_carlo_eval, Environment, EnvReward, McSummary};
pub use qlearn::{q_learning, QConfig, QLearned};
pub use relative::{solve_relative, RelativeSolve};

use std::collections::HashMap;
use std::hash::Hash;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::chain::Action;
use crate::error::{Error, Result};
use crate::mdp::MdpModel;

/// Greedy-extraction tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lowest action index among maximizers (Adopt < Override < Wait < Match).
    #[default]
    LowestIndex,
    /// As `LowestIndex`, except Wait wins any tie in the initial state.
    WaitAtOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub values: Vec<f64>,
    pub policy: Vec<Action>,
    pub iterations: usize,
    pub residual: f64,
    /// Long-run reward per step in average-reward mode.
    pub gain: Option<f64>,
    pub rho_star: Option<f64>,
    /// `(lo, hi)` bracket after each bisection step.
    pub bracket: Vec<(f64, f64)>,
}

/// A deterministic policy keyed by state, loadable as a fixed strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePolicy<S: Eq + Hash> {
    table: HashMap<S, Action>,
}

#[derive(Serialize, Deserialize)]
struct PolicyEntry<S> {
    state: S,
    action: Action,
}

impl<S: Clone + Eq + Hash> StatePolicy<S> {
    pub fn from_model(mdp: &MdpModel<S>, actions: &[Action]) -> Self {
        let table = mdp.states.iter().cloned().zip(actions.iter().copied()).collect();
        Self { table }
    }

    pub fn from_fn(states: impl IntoIterator<Item = S>, f: impl Fn(&S) -> Action) -> Self {
        Self { table: states.into_iter().map(|s| { let a = f(&s); (s, a) }).collect() }
    }

    pub fn get(&self, s: &S) -> Option<Action> {
        self.table.get(s).copied()
    }

    pub fn set(&mut self, s: S, a: Action) {
        self.table.insert(s, a);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &Action)> {
        self.table.iter()
    }

    /// Dense action list aligned with `mdp.states`; missing states fall back to `default`.
    pub fn for_model(&self, mdp: &MdpModel<S>, default: impl Fn(&S) -> Action) -> Vec<Action> {
        mdp.states.iter().map(|s| self.get(s).unwrap_or_else(|| default(s))).collect()
    }
}

impl<S: Clone + Eq + Hash + Serialize + DeserializeOwned + Ord> StatePolicy<S> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries: Vec<PolicyEntry<S>> =
            self.table.iter().map(|(s, a)| PolicyEntry { state: s.clone(), action: *a }).collect();
        entries.sort_by(|x, y| x.state.cmp(&y.state));
        std::fs::write(path, serde_json::to_vec_pretty(&entries)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries: Vec<PolicyEntry<S>> = serde_json::from_slice(&std::fs::read(path)?)?;
        if entries.is_empty() {
            return Err(Error::Domain(format!("policy file {} is empty", path.display())));
        }
        Ok(Self { table: entries.into_iter().map(|e| (e.state, e.action)).collect() })
    }
}
