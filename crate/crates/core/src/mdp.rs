//! Explicit finite MDPs over an enumerated state space.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use serde::Serialize;
use serde_json::json;

use crate::chain::{Action, ActionMask};
use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub prob: f64,
    pub next: usize,
    /// Reward credited to the strategic miner, in block units.
    pub attacker: f64,
    /// Reward credited to everyone else.
    pub others: f64,
}

/// One successor as produced by a model's transition function.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<S> {
    pub prob: f64,
    pub next: S,
    pub attacker: f64,
    pub others: f64,
}

#[derive(Debug, Clone)]
pub struct MdpModel<S> {
    pub states: Vec<S>,
    index: HashMap<S, usize>,
    /// `transitions[s][a]` is `None` when action `a` is masked in state `s`.
    pub transitions: Vec<[Option<Vec<Transition>>; 4]>,
    /// When set, the scalar reward is `(1 - rho) * attacker - rho * others`.
    pub rho: Option<f64>,
    pub initial: usize,
}

impl<S: Clone + Eq + Hash> MdpModel<S> {
    /// Breadth-first enumeration of every state reachable from `initial`.
    pub fn explore<F>(initial: S, mut successors: F) -> Result<Self>
    where
        F: FnMut(&S, Action) -> Option<Vec<Outcome<S>>>,
    {
        let mut states = vec![initial.clone()];
        let mut index = HashMap::from([(initial, 0usize)]);
        let mut transitions = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(s) = queue.pop_front() {
            let state = states[s].clone();
            let mut row: [Option<Vec<Transition>>; 4] = Default::default();
            for action in Action::ALL {
                let Some(outs) = successors(&state, action) else { continue };
                let mut list = Vec::with_capacity(outs.len());
                for o in outs {
                    if o.prob <= 0.0 {
                        continue;
                    }
                    let next = match index.get(&o.next) {
                        Some(&i) => i,
                        None => {
                            let i = states.len();
                            states.push(o.next.clone());
                            index.insert(o.next, i);
                            queue.push_back(i);
                            i
                        }
                    };
                    list.push(Transition { prob: o.prob, next, attacker: o.attacker, others: o.others });
                }
                row[action.index()] = Some(list);
            }
            if transitions.len() <= s {
                transitions.resize_with(s + 1, Default::default);
            }
            transitions[s] = row;
        }
        transitions.resize_with(states.len(), Default::default);
        let model = Self { states, index, transitions, rho: None, initial: 0 };
        model.validate()?;
        Ok(model)
    }

    pub fn state_index(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }
}

impl<S> MdpModel<S> {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn mask(&self, s: usize) -> ActionMask {
        let mut m = ActionMask::default();
        for a in Action::ALL {
            m.set(a, self.transitions[s][a.index()].is_some());
        }
        m
    }

    pub fn actions(&self, s: usize) -> impl Iterator<Item = (Action, &[Transition])> + '_ {
        Action::ALL.into_iter().filter_map(move |a| {
            self.transitions[s][a.index()].as_deref().map(|t| (a, t))
        })
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }

    /// Scalar reward of a transition under the model's objective.
    pub fn reward(&self, t: &Transition) -> f64 {
        scalar_reward(t, self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        for (s, row) in self.transitions.iter().enumerate() {
            if row.iter().all(Option::is_none) {
                return Err(Error::Domain(format!("state {s} has no permitted action")));
            }
            for list in row.iter().flatten() {
                let total: f64 = list.iter().map(|t| t.prob).sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(Error::Domain(format!("state {s}: probabilities sum to {total}")));
                }
            }
        }
        Ok(())
    }
}

pub fn scalar_reward(t: &Transition, rho: Option<f64>) -> f64 {
    match rho {
        Some(r) => (1.0 - r) * t.attacker - r * t.others,
        None => t.attacker,
    }
}

impl<S: Serialize> MdpModel<S> {
    /// `{states, actions, initial, rho, transitions: [{state, action, outcomes: [{p, next, attacker, others}]}]}`
    pub fn to_json(&self) -> serde_json::Value {
        let mut rows = Vec::new();
        for (s, row) in self.transitions.iter().enumerate() {
            for a in Action::ALL {
                if let Some(list) = &row[a.index()] {
                    let outs: Vec<_> = list
                        .iter()
                        .map(|t| json!({"p": t.prob, "next": t.next, "attacker": t.attacker, "others": t.others}))
                        .collect();
                    rows.push(json!({"state": s, "action": a, "outcomes": outs}));
                }
            }
        }
        json!({
            "states": self.states,
            "actions": Action::ALL,
            "initial": self.initial,
            "rho": self.rho,
            "transitions": rows,
        })
    }
}
