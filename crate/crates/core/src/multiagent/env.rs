use serde::{Deserialize, Serialize};

use crate::bitcoin::{capped_mask, BtcState};
use crate::chain::{
    resolve_weighted, sample_miner, Action, ActionMask, BlockId, BlockTree, FollowerFractions, ForkLabel,
    MiningWeights, Party,
};
use crate::error::{config, Error, Result};
use crate::rng::{uniform, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// The honest party lives inside the environment and publishes the moment it mines.
    Rushing,
    /// A block event every `m` turns; the honest party publishes on the turn after its block.
    TimeSegmented(u32),
}

impl Ordering {
    pub fn period(self) -> u32 {
        match self {
            Ordering::Rushing => 1,
            Ordering::TimeSegmented(m) => m,
        }
    }

    pub fn label(self) -> String {
        match self {
            Ordering::Rushing => "rushing".into(),
            Ordering::TimeSegmented(m) => format!("time_segmented_{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiAgentConfig {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub ordering: Ordering,
    /// Block events per episode.
    pub episode_len: u32,
    /// Fork-length cap applied to every agent's action mask.
    pub cap: u32,
}

impl MultiAgentConfig {
    pub fn new(alphas: Vec<f64>, gammas: Vec<f64>, ordering: Ordering) -> Result<Self> {
        let c = Self { alphas, gammas, ordering, episode_len: 100, cap: 20 };
        c.validate()?;
        Ok(c)
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return config("at least one strategic agent is required");
        }
        if self.alphas.len() != self.gammas.len() {
            return config("alphas and gammas must have one entry per agent");
        }
        MiningWeights::with_residual(self.alphas.clone())?;
        FollowerFractions::new(self.gammas.clone())?;
        if self.ordering.period() == 0 {
            return config("time segmentation needs m >= 1");
        }
        if self.cap < 2 {
            return config("cap must be at least 2");
        }
        Ok(())
    }

    pub fn turns_per_episode(&self) -> u64 {
        self.episode_len as u64 * self.ordering.period() as u64
    }
}

/// What agent `i` sees before acting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentObs {
    pub agent: usize,
    pub state: BtcState,
    pub mask: ActionMask,
    /// Turn index within the block-event cycle (always 0 in rushing mode).
    pub cycle_turn: u32,
    pub alpha: f64,
}

/// Accepted and stale blocks per party (agents first, honest last).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RewardLedger {
    pub accepted: Vec<u64>,
    pub stale: Vec<u64>,
    pub pending: Vec<u64>,
    /// Per strategic agent: sum of `(1 - alpha_i) x_i - alpha_i y_i` over steps.
    pub transformed: Vec<f64>,
}

impl RewardLedger {
    fn new(k: usize) -> Self {
        Self { accepted: vec![0; k + 1], stale: vec![0; k + 1], pending: vec![0; k + 1], transformed: vec![0.0; k] }
    }

    pub fn total_accepted(&self) -> u64 {
        self.accepted.iter().sum()
    }

    /// Own accepted over all accepted, per party.
    pub fn relative(&self) -> Vec<f64> {
        let t = self.total_accepted();
        self.accepted.iter().map(|&x| if t == 0 { 0.0 } else { x as f64 / t as f64 }).collect()
    }
}

/// Blocks newly accepted during one joint step, per party (honest last).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepDelta {
    pub settled: Vec<u64>,
    pub block_event: bool,
}

#[derive(Debug, Clone)]
pub struct MultiAgentEnv {
    cfg: MultiAgentConfig,
    weights: MiningWeights,
    gammas: FollowerFractions,
    tree: BlockTree,
    tips: Vec<BlockId>,
    honest_tip: BlockId,
    honest_pending: Option<BlockId>,
    labels: Vec<ForkLabel>,
    matched: Vec<bool>,
    settled: BlockId,
    turn: u64,
    events: u32,
    ledger: RewardLedger,
}

impl MultiAgentEnv {
    pub fn new(cfg: MultiAgentConfig) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.k();
        Ok(Self {
            weights: MiningWeights::with_residual(cfg.alphas.clone())?,
            gammas: FollowerFractions::new(cfg.gammas.clone())?,
            tree: BlockTree::new(),
            tips: vec![BlockTree::GENESIS; k],
            honest_tip: BlockTree::GENESIS,
            honest_pending: None,
            labels: vec![ForkLabel::Irrelevant; k],
            matched: vec![false; k],
            settled: BlockTree::GENESIS,
            turn: 0,
            events: 0,
            ledger: RewardLedger::new(k),
            cfg,
        })
    }

    pub fn config(&self) -> &MultiAgentConfig {
        &self.cfg
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn honest_tip(&self) -> BlockId {
        self.honest_tip
    }

    pub fn tip(&self, agent: usize) -> BlockId {
        self.tips[agent]
    }

    pub fn ledger(&self) -> &RewardLedger {
        &self.ledger
    }

    pub fn turn(&self) -> u64 {
        self.turn
    }

    pub fn block_events(&self) -> u32 {
        self.events
    }

    pub fn done(&self) -> bool {
        self.turn >= self.cfg.turns_per_episode()
    }

    fn is_event_turn(&self) -> bool {
        self.turn % self.cfg.ordering.period() as u64 == 0
    }

    fn fork_lengths(&self, agent: usize) -> (u32, u32) {
        let t = &self.tree;
        let base = t.lca(self.tips[agent], self.honest_tip);
        let hb = t.height(base);
        ((t.height(self.tips[agent]) - hb) as u32, (t.height(self.honest_tip) - hb) as u32)
    }

    pub fn observe(&self, agent: usize) -> AgentObs {
        let (a, h) = self.fork_lengths(agent);
        let state = BtcState::new(a, h, self.labels[agent]);
        AgentObs {
            agent,
            state,
            mask: capped_mask(state, self.cfg.cap),
            cycle_turn: (self.turn % self.cfg.ordering.period() as u64) as u32,
            alpha: self.cfg.alphas[agent],
        }
    }

    pub fn observe_all(&self) -> Vec<AgentObs> {
        (0..self.cfg.k()).map(|i| self.observe(i)).collect()
    }

    /// Agent `i`'s matched prefix is still level with the public tip.
    fn tie_live(&self, agent: usize) -> bool {
        let p = self.tree.deepest_published(self.tips[agent]);
        p != self.honest_tip && self.tree.height(p) == self.tree.height(self.honest_tip)
    }

    /// Longest public chains each party backs, with the follower mass behind each, in partition order
    /// (agents by index, honest tip last).
    fn longest_candidates(&self) -> Vec<(BlockId, f64)> {
        let mut cands: Vec<(BlockId, f64)> = Vec::new();
        for i in 0..self.cfg.k() {
            let p = self.tree.deepest_published(self.tips[i]);
            if p == self.honest_tip {
                continue;
            }
            match cands.iter_mut().find(|c| c.0 == p) {
                Some(c) => c.1 += self.gammas.weight(Party::Agent(i)),
                None => cands.push((p, self.gammas.weight(Party::Agent(i)))),
            }
        }
        cands.push((self.honest_tip, self.gammas.residual()));
        let top = cands.iter().map(|c| self.tree.height(c.0)).max().expect("non-empty");
        cands.retain(|c| self.tree.height(c.0) == top);
        cands
    }

    fn pick(&self, cands: &[(BlockId, f64)], rng: &mut SimRng) -> Result<BlockId> {
        if cands.len() == 1 {
            return Ok(cands[0].0);
        }
        let w: Vec<f64> = cands.iter().map(|c| c.1).collect();
        Ok(cands[resolve_weighted(&w, uniform(rng))?].0)
    }

    /// Applies one joint action. Publications happen first, then adoptions, then the block event.
    pub fn joint_step(&mut self, actions: &[Action], rng: &mut SimRng) -> Result<StepDelta> {
        let k = self.cfg.k();
        if actions.len() != k {
            return Err(Error::Contract(format!("expected {k} actions, got {}", actions.len())));
        }
        let obs = self.observe_all();
        for (i, (a, o)) in actions.iter().zip(&obs).enumerate() {
            if !o.mask.allows(*a) {
                return Err(Error::NotPermitted { agent: i, action: a.to_string(), state: o.state.to_string() });
            }
        }

        let mut honest_published = false;
        if let Some(p) = self.honest_pending.take() {
            self.tree.publish(p);
            self.honest_tip = p;
            honest_published = true;
        }
        for (i, a) in actions.iter().enumerate() {
            let (ai, hi) = (obs[i].state.a, obs[i].state.h);
            let tip = self.tips[i];
            let base_h = self.tree.height(tip) - ai as u64;
            match a {
                Action::Override => {
                    let target = self.tree.ancestor_at(tip, base_h + hi as u64 + 1);
                    self.tree.publish(target);
                }
                Action::Match => {
                    let target = self.tree.ancestor_at(tip, base_h + hi as u64);
                    self.tree.publish(target);
                    self.matched[i] = true;
                }
                Action::Adopt | Action::Wait => {}
            }
        }

        let cands = self.longest_candidates();
        if self.tree.height(cands[0].0) > self.tree.height(self.honest_tip) {
            self.honest_tip = self.pick(&cands, rng)?;
        }

        for (i, a) in actions.iter().enumerate() {
            if *a == Action::Adopt {
                self.tips[i] = self.honest_tip;
                self.matched[i] = false;
            }
        }

        let block_event = self.is_event_turn();
        if block_event {
            match sample_miner(&self.weights, uniform(rng)) {
                Party::Agent(j) => {
                    self.tips[j] = self.tree.push(self.tips[j], Party::Agent(j));
                }
                Party::Honest => {
                    let cands = self.longest_candidates();
                    let parent = self.pick(&cands, rng)?;
                    let b = self.tree.push(parent, Party::Honest);
                    match self.cfg.ordering {
                        Ordering::Rushing => {
                            self.tree.publish(b);
                            self.honest_tip = b;
                            honest_published = true;
                        }
                        Ordering::TimeSegmented(_) => self.honest_pending = Some(b),
                    }
                }
            }
            self.events += 1;
        }

        let segmented = matches!(self.cfg.ordering, Ordering::TimeSegmented(_));
        for i in 0..k {
            self.labels[i] = if honest_published {
                self.matched[i] = false;
                ForkLabel::Relevant
            } else if self.matched[i] && self.tie_live(i) {
                ForkLabel::Active
            } else {
                self.matched[i] = false;
                if segmented && !block_event && self.labels[i] == ForkLabel::Relevant {
                    ForkLabel::Relevant
                } else {
                    ForkLabel::Irrelevant
                }
            }
        }

        let delta = self.settle(block_event);
        self.turn += 1;
        Ok(delta)
    }

    fn settle(&mut self, block_event: bool) -> StepDelta {
        let k = self.cfg.k();
        let mut common = self.honest_tip;
        for &t in &self.tips {
            common = self.tree.lca(common, t);
        }
        let mut settled = vec![0u64; k + 1];
        if common != self.settled {
            for b in self.tree.segment(self.settled, common) {
                let idx = match self.tree.block(b).miner {
                    Party::Agent(i) => i,
                    Party::Honest => k,
                };
                settled[idx] += 1;
            }
            self.settled = common;
        }
        let total: u64 = settled.iter().sum();
        for i in 0..k {
            self.ledger.accepted[i] += settled[i];
            let a = self.cfg.alphas[i];
            self.ledger.transformed[i] += (1.0 - a) * settled[i] as f64 - a * (total - settled[i]) as f64;
        }
        self.ledger.accepted[k] += settled[k];
        StepDelta { settled, block_event }
    }

    /// Restarts the event counters and reward ledger from the current chain state.
    pub fn begin_episode(&mut self) {
        self.turn = 0;
        self.events = 0;
        self.ledger = RewardLedger::new(self.cfg.k());
    }

    /// Classifies every unaccepted block as pending (still on some party's chain) or stale.
    pub fn finalize_ledger(&mut self) -> &RewardLedger {
        let k = self.cfg.k();
        let mut heads: Vec<BlockId> = self.tips.clone();
        heads.push(self.honest_tip);
        heads.extend(self.honest_pending);
        let settled_h = self.tree.height(self.settled);
        let mut stale = vec![0u64; k + 1];
        let mut pending = vec![0u64; k + 1];
        for (id, b) in self.tree.blocks().iter().enumerate() {
            if id == BlockTree::GENESIS || self.tree.is_ancestor(id, self.settled) {
                continue;
            }
            let idx = match b.miner {
                Party::Agent(i) => i,
                Party::Honest => k,
            };
            let live = b.height > settled_h && heads.iter().any(|&h| self.tree.is_ancestor(id, h));
            if live {
                pending[idx] += 1;
            } else {
                stale[idx] += 1;
            }
        }
        self.ledger.stale = stale;
        self.ledger.pending = pending;
        &self.ledger
    }

    #[cfg(test)]
    pub(crate) fn inject_hidden_block(&mut self, agent: usize) {
        self.tips[agent] = self.tree.push(self.tips[agent], Party::Agent(agent));
    }
}
