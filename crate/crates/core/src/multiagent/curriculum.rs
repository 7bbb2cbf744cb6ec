use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitcoin::{legalize, BtcState};
use crate::chain::Action;
use crate::error::{config, Result};
use crate::rng::stream;

use super::env::{AgentObs, MultiAgentConfig, MultiAgentEnv, Ordering};
use super::strategy::{HonestMimic, Strategy};

/// Exploration bonus per Wait: `0.1 * max(horizon - episode, 0) / horizon`, zero outside `window`.
pub fn wait_bonus(episode: u64, horizon: u64, window: Option<(u64, u64)>) -> f64 {
    if let Some((lo, hi)) = window {
        if episode < lo || episode >= hi {
            return 0.0;
        }
    }
    if horizon == 0 {
        return 0.0;
    }
    0.1 * horizon.saturating_sub(episode) as f64 / horizon as f64
}

/// Turns per block event after `step` training steps: one more every `increment`, capped at `target`.
/// Stage zero runs at the m = 1 cadence.
pub fn anneal_m(step: u64, increment: u64, target: u32) -> u32 {
    let stage = if increment == 0 { target as u64 } else { step / increment };
    stage.clamp(1, target.max(1) as u64) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    TabularQ { lr_floor: f64, lr_power: f64, epsilon: f64 },
    /// The scalar episodic learner from `solvers::pg`; it has no per-state policy.
    EpisodicPg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurriculumConfig {
    /// Final game; its ordering must be time-segmented and sets the annealing target.
    pub game: MultiAgentConfig,
    /// Agents that learn; the rest play `HonestMimic` unless overridden.
    pub learners: Vec<usize>,
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub discount: f64,
    pub bonus_horizon: u64,
    pub bonus_window: Option<(u64, u64)>,
    /// Training steps between increments of m.
    pub anneal_increment: u64,
    /// Warm-up block events drawn uniformly from `0..=warmup_max_events`, played by the warm-up strategies.
    pub warmup_max_events: u32,
    pub seed: u64,
}

impl CurriculumConfig {
    pub fn new(game: MultiAgentConfig, learners: Vec<usize>) -> Self {
        Self {
            game,
            learners,
            iterations: 20,
            episodes_per_iteration: 200,
            discount: 0.997,
            bonus_horizon: 2_000_000,
            bonus_window: None,
            anneal_increment: 500_000,
            warmup_max_events: 50,
            seed: 0,
        }
    }
}

type QKey = (BtcState, u32);

/// Greedy read-out of a learned table; unseen observations play honest.
#[derive(Debug, Clone, Default)]
pub struct QTableStrategy {
    pub table: HashMap<QKey, [f64; 4]>,
}

impl QTableStrategy {
    fn greedy(&self, obs: &AgentObs) -> Option<Action> {
        let q = self.table.get(&(obs.state, obs.cycle_turn))?;
        obs.mask.iter().max_by(|a, b| q[a.index()].total_cmp(&q[b.index()]).then(b.index().cmp(&a.index())))
    }
}

impl Strategy for QTableStrategy {
    fn act(&self, obs: &AgentObs) -> Action {
        match self.greedy(obs) {
            Some(a) => legalize(obs.mask, a),
            None => HonestMimic.act(obs),
        }
    }

    fn name(&self) -> String {
        "q_table".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationPoint {
    pub iteration: usize,
    pub steps: u64,
    pub episodes: u64,
    pub m: u32,
    pub bonus: f64,
    /// Per agent, mean per-episode relative reward.
    pub rel_reward: Vec<f64>,
    pub match_fraction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CurriculumResult {
    pub strategies: Vec<QTableStrategy>,
    pub curves: Vec<IterationPoint>,
}

/// Trains the `learners` against fixed strategies under the annealed time-segmented game.
/// `fixed[i]` plays for non-learning agents; `warmup[i]` drives every agent during warm-up.
pub fn curriculum_trainer(
    cfg: &CurriculumConfig,
    learner: LearnerSpec,
    fixed: &[Arc<dyn Strategy>],
    warmup: &[Arc<dyn Strategy>],
) -> Result<CurriculumResult> {
    let (lr_floor, lr_power, epsilon) = match learner {
        LearnerSpec::TabularQ { lr_floor, lr_power, epsilon } => (lr_floor, lr_power, epsilon),
        LearnerSpec::EpisodicPg => {
            return config("episodic policy gradient needs per-episode restarts; the curriculum game is continuing")
        }
    };
    cfg.game.validate()?;
    let k = cfg.game.k();
    let target = match cfg.game.ordering {
        Ordering::TimeSegmented(m) => m,
        Ordering::Rushing => return config("curriculum training targets the time-segmented game"),
    };
    if fixed.len() != k || warmup.len() != k {
        return config("fixed and warm-up strategies need one entry per agent");
    }
    if cfg.learners.iter().any(|&i| i >= k) {
        return config("learner index out of range");
    }
    if !(0.0..1.0).contains(&cfg.discount) {
        return config("discount must lie in [0, 1)");
    }

    let mut tables: Vec<QTableStrategy> = vec![QTableStrategy::default(); k];
    let mut visits: Vec<HashMap<(QKey, usize), u64>> = vec![HashMap::new(); k];
    let is_learner: Vec<bool> = (0..k).map(|i| cfg.learners.contains(&i)).collect();
    let mut rng = stream(cfg.seed, 0);
    let (mut steps, mut episodes) = (0u64, 0u64);
    let mut curves = Vec::with_capacity(cfg.iterations);
    let mut joint = vec![Action::Wait; k];

    for iteration in 0..cfg.iterations {
        let m = anneal_m(steps, cfg.anneal_increment, target);
        let mut game = cfg.game.clone();
        game.ordering = Ordering::TimeSegmented(m);
        let mut rel = vec![0.0; k];
        let mut counts = vec![[0u64; 4]; k];
        let mut bonus_seen = 0.0;
        for _ in 0..cfg.episodes_per_iteration {
            let mut env = MultiAgentEnv::new(game.clone())?;
            let warm = rng.gen_range(0..=cfg.warmup_max_events);
            while env.block_events() < warm {
                for (i, s) in warmup.iter().enumerate() {
                    joint[i] = s.act(&env.observe(i));
                }
                env.joint_step(&joint, &mut rng)?;
                while env.turn() % m as u64 != 0 {
                    for (i, s) in warmup.iter().enumerate() {
                        joint[i] = s.act(&env.observe(i));
                    }
                    env.joint_step(&joint, &mut rng)?;
                }
            }
            env.begin_episode();
            let bonus = wait_bonus(episodes, cfg.bonus_horizon, cfg.bonus_window);
            bonus_seen = bonus;
            let mut obs = env.observe_all();
            while !env.done() {
                for i in 0..k {
                    joint[i] = if is_learner[i] {
                        if rng.gen::<f64>() < epsilon {
                            let legal: Vec<Action> = obs[i].mask.iter().collect();
                            legal[rng.gen_range(0..legal.len())]
                        } else {
                            tables[i].act(&obs[i])
                        }
                    } else {
                        fixed[i].act(&obs[i])
                    };
                    counts[i][joint[i].index()] += 1;
                }
                let delta = env.joint_step(&joint, &mut rng)?;
                let next = env.observe_all();
                let total: u64 = delta.settled.iter().sum();
                for i in (0..k).filter(|&i| is_learner[i]) {
                    let alpha = cfg.game.alphas[i];
                    let own = delta.settled[i] as f64;
                    let mut r = (1.0 - alpha) * own - alpha * (total as f64 - own);
                    if joint[i] == Action::Wait {
                        r += bonus;
                    }
                    let key = (obs[i].state, obs[i].cycle_turn);
                    let a = joint[i].index();
                    let n = visits[i].entry((key, a)).or_insert(0);
                    *n += 1;
                    let lr = (*n as f64).powf(-lr_power).max(lr_floor);
                    let nkey = (next[i].state, next[i].cycle_turn);
                    let future = tables[i]
                        .table
                        .get(&nkey)
                        .map(|q| next[i].mask.iter().map(|b| q[b.index()]).fold(f64::NEG_INFINITY, f64::max))
                        .unwrap_or(0.0);
                    let q = tables[i].table.entry(key).or_insert([0.0; 4]);
                    q[a] += lr * (r + cfg.discount * future - q[a]);
                }
                obs = next;
                steps += 1;
            }
            for (slot, x) in rel.iter_mut().zip(env.ledger().relative()) {
                *slot += x;
            }
            episodes += 1;
        }
        let n = cfg.episodes_per_iteration.max(1) as f64;
        curves.push(IterationPoint {
            iteration,
            steps,
            episodes,
            m,
            bonus: bonus_seen,
            rel_reward: rel.iter().take(k).map(|x| x / n).collect(),
            match_fraction: counts
                .iter()
                .map(|c| {
                    let publ = c[Action::Override.index()] + c[Action::Match.index()];
                    if publ == 0 { 0.0 } else { c[Action::Match.index()] as f64 / publ as f64 }
                })
                .collect(),
        });
    }
    Ok(CurriculumResult { strategies: cfg.learners.iter().map(|&i| tables[i].clone()).collect(), curves })
}
