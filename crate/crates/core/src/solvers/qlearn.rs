use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::montecarlo::Environment;
use crate::chain::{Action, ActionMask};
use crate::error::{config, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QConfig {
    /// Learning steps per phase.
    pub learn_steps: u64,
    /// Greedy evaluation steps per phase, used to re-estimate the attacker share.
    pub eval_steps: u64,
    pub phases: usize,
    pub discount: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Per-visit learning rate `max(lr_floor, visits^-lr_power)`.
    pub lr_power: f64,
    pub lr_floor: f64,
    /// Share used in the first phase (usually the attacker's hash power).
    pub initial_rho: f64,
}

impl QConfig {
    pub fn total_steps(&self) -> u64 {
        (self.learn_steps + self.eval_steps) * self.phases as u64
    }

    fn validate(&self) -> Result<()> {
        if self.phases == 0 || self.learn_steps == 0 {
            return config("q-learning needs at least one phase with learning steps");
        }
        if !(0.0..1.0).contains(&self.discount) {
            return config("q-learning discount must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    q: [f64; 4],
    visits: [u64; 4],
    mask: ActionMask,
}

#[derive(Debug, Clone)]
pub struct QLearned<S: Eq + Hash> {
    table: HashMap<S, Entry>,
    pub rho: f64,
    pub rho_history: Vec<f64>,
    pub steps: u64,
}

impl<S: Clone + Eq + Hash> QLearned<S> {
    /// Greedy permitted action; unseen states return `None`.
    pub fn greedy(&self, s: &S) -> Option<Action> {
        self.table.get(s).map(|e| argmax(e))
    }

    pub fn q_values(&self, s: &S) -> Option<[f64; 4]> {
        self.table.get(s).map(|e| e.q)
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.table.keys()
    }
}

fn argmax(e: &Entry) -> Action {
    let mut best: Option<(Action, f64)> = None;
    for a in e.mask.iter() {
        let q = e.q[a.index()];
        if best.map_or(true, |(_, b)| q > b) {
            best = Some((a, q));
        }
    }
    best.expect("every state permits an action").0
}

fn entry<'a, S: Clone + Eq + Hash>(table: &'a mut HashMap<S, Entry>, s: &S, mask: ActionMask) -> &'a mut Entry {
    table.entry(s.clone()).or_insert(Entry { q: [0.0; 4], visits: [0; 4], mask })
}

/// Tabular epsilon-greedy Q-learning of the attacker share. Each phase learns on
/// `(1 - rho) * attacker - rho * others`, then replaces `rho` by the greedy policy's measured share.
pub fn q_learning<E>(env: &mut E, cfg: &QConfig, rng: &mut SimRng) -> Result<QLearned<E::Obs>>
where
    E: Environment,
    E::Obs: Clone + Eq + Hash,
{
    cfg.validate()?;
    let mut table: HashMap<E::Obs, Entry> = HashMap::new();
    let mut rho = cfg.initial_rho;
    let mut history = Vec::new();
    let total_learn = cfg.learn_steps * cfg.phases as u64;
    let mut t = 0u64;
    env.reset(rng);
    for _ in 0..cfg.phases {
        for _ in 0..cfg.learn_steps {
            let frac = (t as f64 / (0.5 * total_learn as f64)).min(1.0);
            let eps = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
            let s = env.observe();
            let mask = env.mask();
            let e = *entry(&mut table, &s, mask);
            let action = if rng.gen::<f64>() < eps {
                let allowed: Vec<Action> = mask.iter().collect();
                allowed[rng.gen_range(0..allowed.len())]
            } else {
                argmax(&e)
            };
            let r = env.step(action, rng)?;
            let reward = (1.0 - rho) * r.attacker - rho * r.others;
            let s2 = env.observe();
            let m2 = env.mask();
            let next = entry(&mut table, &s2, m2);
            let target = reward + cfg.discount * next.q[argmax(next).index()];
            let e = table.get_mut(&s).expect("inserted above");
            let k = action.index();
            e.visits[k] += 1;
            let lr = (e.visits[k] as f64).powf(-cfg.lr_power).max(cfg.lr_floor);
            e.q[k] += lr * (target - e.q[k]);
            t += 1;
        }
        if cfg.eval_steps > 0 {
            env.reset(rng);
            let (mut own, mut total) = (0.0, 0.0);
            for _ in 0..cfg.eval_steps {
                let s = env.observe();
                let mask = env.mask();
                let a = table.get(&s).map(argmax).unwrap_or_else(|| mask.iter().next().expect("non-empty mask"));
                let r = env.step(a, rng)?;
                own += r.attacker;
                total += r.attacker + r.others;
            }
            if total > 0.0 {
                rho = own / total;
            }
            env.reset(rng);
        }
        history.push(rho);
    }
    Ok(QLearned { table, rho, rho_history: history, steps: cfg.total_steps() })
}
