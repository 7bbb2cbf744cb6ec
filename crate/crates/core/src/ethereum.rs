//! Ethereum selfish mining: Bitcoin chain dynamics plus uncle and nephew rewards.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize, Serializer};

use crate::bitcoin::{draw_event, finish, stage, BtcEnvConfig, BtcState, MiningEvent, StepOutcome};
use crate::chain::{Action, ActionMask, ForkLabel, UNCLE_DEPTH};
use crate::error::{Error, Result};
use crate::mdp::{MdpModel, Outcome};
use crate::rng::SimRng;

pub type UncleVec = [u8; UNCLE_DEPTH];

pub const NO_UNCLE: u8 = 0;
pub const ATTACKER_UNCLE: u8 = 1;
pub const HONEST_UNCLE: u8 = 2;

/// Reward in exact units of 1/32 of a block reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Deserialize)]
pub struct Units(pub i64);

impl Units {
    pub const BLOCK: Units = Units(32);
    pub const NEPHEW: Units = Units(1);

    pub fn blocks(n: u32) -> Units {
        Units(32 * n as i64)
    }

    /// `(8 - k) / 8` of a block reward for an uncle `k` heights below its nephew.
    pub fn uncle(k: usize) -> Units {
        Units(4 * (8 - k as i64))
    }

    pub fn as_blocks(self) -> f64 {
        self.0 as f64 / 32.0
    }
}

impl Add for Units {
    type Output = Units;
    fn add(self, o: Units) -> Units {
        Units(self.0 + o.0)
    }
}

impl AddAssign for Units {
    fn add_assign(&mut self, o: Units) {
        self.0 += o.0;
    }
}

impl Serialize for Units {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_blocks())
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_blocks())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct EthState {
    pub a: u32,
    pub h: u32,
    pub fork: ForkLabel,
    pub u: UncleVec,
    /// Height of the last common block; only used to label uncles absolutely.
    pub height: u64,
}

impl EthState {
    pub fn chain(&self) -> BtcState {
        BtcState::new(self.a, self.h, self.fork)
    }

    /// The state without the height marker, as seen by policies and solvers.
    pub fn key(&self) -> EthKey {
        EthKey { a: self.a, h: self.h, fork: self.fork, u: self.u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct EthKey {
    pub a: u32,
    pub h: u32,
    pub fork: ForkLabel,
    pub u: UncleVec,
}

impl EthKey {
    pub fn chain(&self) -> BtcState {
        BtcState::new(self.a, self.h, self.fork)
    }
}

impl fmt::Display for EthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {:?})", self.a, self.h, self.fork, self.u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EthEnvConfig {
    pub chain: BtcEnvConfig,
    /// When false no uncles are referenced and only block rewards are paid.
    pub uncle_rewards: bool,
}

impl EthEnvConfig {
    pub fn new(alpha: f64, gamma: f64, cap: u32) -> Result<Self> {
        Ok(Self { chain: BtcEnvConfig::new(alpha, gamma, cap)?, uncle_rewards: true })
    }

    pub fn mask(&self, s: &EthKey) -> ActionMask {
        self.chain.mask(s.chain())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Publisher {
    Attacker,
    Honest,
}

/// One uncle reference made by a publication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UncleRewardEvent {
    pub publisher: Publisher,
    pub uncle_owner: Publisher,
    /// Height difference between nephew and uncle.
    pub depth: usize,
    /// Absolute height of the block the uncle hangs from.
    pub hang_height: u64,
    pub nephew_bonus: Units,
    pub uncle_payout: Units,
}

/// Reorganisation of the uncle window caused by one publication.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UncleUpdate {
    /// Zero-based positions in `u` that were referenced.
    pub referenced: Vec<usize>,
    /// Main-chain growth.
    pub delta: usize,
    /// Owner of the first block of the fork abandoned by this publication.
    pub abandoned: Option<u8>,
}

pub fn uncle_update(u: &UncleVec, ev: &UncleUpdate) -> Result<UncleVec> {
    let mut v = *u;
    for &i in &ev.referenced {
        if i >= UNCLE_DEPTH || v[i] == NO_UNCLE {
            return Err(Error::Contract(format!("reference to empty uncle slot {i} in {u:?}")));
        }
        v[i] = NO_UNCLE;
    }
    let mut out = [NO_UNCLE; UNCLE_DEPTH];
    for i in 0..UNCLE_DEPTH {
        if i + ev.delta < UNCLE_DEPTH {
            out[i + ev.delta] = v[i];
        }
    }
    if let Some(owner) = ev.abandoned {
        if (1..=UNCLE_DEPTH).contains(&ev.delta) {
            out[ev.delta - 1] = owner;
        }
    }
    Ok(out)
}

/// Up to two references for a publication. The strategic miner takes its own uncles first;
/// within each group deeper uncles come first because they expire soonest.
pub fn select_references(u: &UncleVec, publisher: Publisher) -> Vec<usize> {
    let mut order: Vec<usize> = (0..UNCLE_DEPTH).rev().filter(|&i| u[i] != NO_UNCLE).collect();
    if publisher == Publisher::Attacker {
        order.sort_by_key(|&i| u[i] != ATTACKER_UNCLE);
    }
    order.truncate(2);
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EthStep {
    pub next: EthState,
    pub attacker: Units,
    pub others: Units,
    pub events: Vec<UncleRewardEvent>,
    /// The underlying chain-length transition with block counts.
    pub chain: StepOutcome,
}

struct Publication {
    publisher: Publisher,
    delta: usize,
    abandoned: Option<u8>,
}

fn publish(
    uncle_rewards: bool,
    u: &mut UncleVec,
    height: &mut u64,
    p: &Publication,
    events: &mut Vec<UncleRewardEvent>,
) -> Result<()> {
    if p.delta == 0 {
        return Ok(());
    }
    let refs = if uncle_rewards { select_references(u, p.publisher) } else { Vec::new() };
    for &i in &refs {
        let owner = if u[i] == ATTACKER_UNCLE { Publisher::Attacker } else { Publisher::Honest };
        events.push(UncleRewardEvent {
            publisher: p.publisher,
            uncle_owner: owner,
            depth: i + 1,
            hang_height: *height - (i as u64 + 1),
            nephew_bonus: Units::NEPHEW,
            uncle_payout: Units::uncle(i + 1),
        });
    }
    *u = uncle_update(u, &UncleUpdate { referenced: refs, delta: p.delta, abandoned: p.abandoned })?;
    *height += p.delta as u64;
    Ok(())
}

fn action_publication(s: BtcState, action: Action) -> Option<Publication> {
    match action {
        Action::Adopt => Some(Publication {
            publisher: Publisher::Honest,
            delta: s.h as usize,
            abandoned: (s.a >= 1).then_some(ATTACKER_UNCLE),
        }),
        Action::Override => Some(Publication {
            publisher: Publisher::Attacker,
            delta: s.h as usize + 1,
            abandoned: (s.h >= 1).then_some(HONEST_UNCLE),
        }),
        Action::Wait | Action::Match => None,
    }
}

fn apply(cfg: &EthEnvConfig, s: &EthState, action: Action, ev: MiningEvent) -> Result<EthStep> {
    let cs = s.chain();
    let st = stage(cs, action);
    let mut u = s.u;
    let mut height = s.height;
    let mut events = Vec::new();
    if let Some(p) = action_publication(cs, action) {
        publish(cfg.uncle_rewards, &mut u, &mut height, &p, &mut events)?;
    }
    if ev == MiningEvent::HonestOnAttacker {
        let p = Publication { publisher: Publisher::Attacker, delta: st.h as usize, abandoned: Some(HONEST_UNCLE) };
        publish(cfg.uncle_rewards, &mut u, &mut height, &p, &mut events)?;
    }
    let chain = finish(st, ev);
    let mut attacker = Units::blocks(chain.attacker);
    let mut others = Units::blocks(chain.others);
    for e in &events {
        match e.publisher {
            Publisher::Attacker => attacker += e.nephew_bonus,
            Publisher::Honest => others += e.nephew_bonus,
        }
        match e.uncle_owner {
            Publisher::Attacker => attacker += e.uncle_payout,
            Publisher::Honest => others += e.uncle_payout,
        }
    }
    let next = EthState { a: chain.next.a, h: chain.next.h, fork: chain.next.fork, u, height };
    Ok(EthStep { next, attacker, others, events, chain })
}

/// One slot. Consumes exactly the draws of the Bitcoin step from the same state and action.
pub fn eth_step(cfg: &EthEnvConfig, s: &EthState, action: Action, rng: &mut SimRng) -> Result<EthStep> {
    let cs = s.chain();
    if !cs.is_consistent() {
        return Err(Error::Contract(format!("unreachable state {}", s.key())));
    }
    if !cfg.chain.mask(cs).allows(action) {
        return Err(Error::NotPermitted { agent: 0, action: action.to_string(), state: s.key().to_string() });
    }
    let st = stage(cs, action);
    let ev = draw_event(cfg.chain.alpha, cfg.chain.gamma, st.tie, rng)?;
    apply(cfg, s, action, ev)
}

pub fn eth_outcomes(cfg: &EthEnvConfig, s: &EthKey, action: Action) -> Option<Vec<Outcome<EthKey>>> {
    let cs = s.chain();
    if !cfg.chain.mask(cs).allows(action) {
        return None;
    }
    let (alpha, gamma) = (cfg.chain.alpha, cfg.chain.gamma);
    let full = EthState { a: s.a, h: s.h, fork: s.fork, u: s.u, height: 64 };
    let tie = stage(cs, action).tie;
    let mut events = vec![(alpha, MiningEvent::Attacker)];
    if tie {
        events.push((gamma * (1.0 - alpha), MiningEvent::HonestOnAttacker));
        events.push(((1.0 - gamma) * (1.0 - alpha), MiningEvent::HonestOnHonest));
    } else {
        events.push((1.0 - alpha, MiningEvent::HonestOnHonest));
    }
    events
        .into_iter()
        .map(|(prob, ev)| {
            apply(cfg, &full, action, ev).ok().map(|o| Outcome {
                prob,
                next: o.next.key(),
                attacker: o.attacker.as_blocks(),
                others: o.others.as_blocks(),
            })
        })
        .collect()
}

/// MDP over `(a, h, fork, u)` under the greedy referencing rule, rewards in block units.
pub fn build_eth_mdp(cfg: &EthEnvConfig) -> Result<MdpModel<EthKey>> {
    cfg.chain.validate()?;
    MdpModel::explore(EthKey::default(), |s, a| eth_outcomes(cfg, s, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EthStateCount {
    /// Distinct `(a, h, u)` feature tuples reachable when each publication may reference any
    /// subset of at most two available uncles.
    pub feature_tuples: usize,
    /// The same including the fork label.
    pub with_fork: usize,
    /// Distinct `(a, h, u)` tuples reachable under the greedy referencing rule used by `eth_step`.
    pub greedy_tuples: usize,
}

fn u_code(u: &UncleVec) -> usize {
    u.iter().fold(0, |acc, &x| acc * 3 + x as usize)
}

fn u_decode(mut c: usize) -> UncleVec {
    let mut u = [0u8; UNCLE_DEPTH];
    for i in (0..UNCLE_DEPTH).rev() {
        u[i] = (c % 3) as u8;
        c /= 3;
    }
    u
}

fn reference_choices(u: &UncleVec, publisher: Publisher, free: bool) -> Vec<Vec<usize>> {
    if !free {
        return vec![select_references(u, publisher)];
    }
    let avail: Vec<usize> = (0..UNCLE_DEPTH).filter(|&i| u[i] != NO_UNCLE).collect();
    let mut out = vec![Vec::new()];
    for (x, &i) in avail.iter().enumerate() {
        out.push(vec![i]);
        for &j in &avail[x + 1..] {
            out.push(vec![i, j]);
        }
    }
    out
}

fn reachable(cap: u32, free: bool) -> (usize, usize) {
    let cap_u = cap as usize;
    let nu = 3usize.pow(UNCLE_DEPTH as u32);
    let chain_idx = |s: BtcState| (s.a as usize * cap_u + s.h as usize) * 3 + s.fork.code() as usize;
    let mut seen = vec![false; cap_u * cap_u * 3 * nu];
    let mut memo: HashMap<(usize, usize, u8, Publisher), Vec<usize>> = HashMap::new();
    let mut stack = vec![(BtcState::START, 0usize)];
    seen[chain_idx(BtcState::START) * nu] = true;
    // Generic interior probabilities: every structural branch is possible.
    let cfg = BtcEnvConfig::new(0.3, 0.5, cap).expect("valid cap");
    let mut u_step = |uc: usize, p: &Publication| -> Vec<usize> {
        if p.delta == 0 {
            return vec![uc];
        }
        let key = (uc, p.delta, p.abandoned.unwrap_or(0), p.publisher);
        memo.entry(key)
            .or_insert_with(|| {
                let u = u_decode(uc);
                let mut next: Vec<usize> = reference_choices(&u, p.publisher, free)
                    .into_iter()
                    .map(|refs| {
                        let up = UncleUpdate { referenced: refs, delta: p.delta, abandoned: p.abandoned };
                        u_code(&uncle_update(&u, &up).expect("references are available"))
                    })
                    .collect();
                next.sort_unstable();
                next.dedup();
                next
            })
            .clone()
    };
    while let Some((s, uc)) = stack.pop() {
        for action in cfg.mask(s).iter() {
            let st = stage(s, action);
            let after_action: Vec<usize> = match action_publication(s, action) {
                Some(p) => u_step(uc, &p),
                None => vec![uc],
            };
            let mut evs = vec![MiningEvent::Attacker, MiningEvent::HonestOnHonest];
            if st.tie {
                evs.push(MiningEvent::HonestOnAttacker);
            }
            for ev in evs {
                let next = finish(st, ev).next;
                for &u1 in &after_action {
                    let finals = if ev == MiningEvent::HonestOnAttacker {
                        let p = Publication { publisher: Publisher::Attacker, delta: st.h as usize, abandoned: Some(HONEST_UNCLE) };
                        u_step(u1, &p)
                    } else {
                        vec![u1]
                    };
                    for u2 in finals {
                        let idx = chain_idx(next) * nu + u2;
                        if !seen[idx] {
                            seen[idx] = true;
                            stack.push((next, u2));
                        }
                    }
                }
            }
        }
    }
    let with_fork = seen.iter().filter(|b| **b).count();
    let mut tuples = vec![false; cap_u * cap_u * nu];
    for (i, _) in seen.iter().enumerate().filter(|(_, b)| **b) {
        let uc = i % nu;
        let ah = i / nu / 3;
        tuples[ah * nu + uc] = true;
    }
    (tuples.iter().filter(|b| **b).count(), with_fork)
}

/// Reachable state-space size with forks shorter than `cap`. Caps below 2 admit no mining,
/// leaving only the genesis state.
pub fn enumerate_eth_states(cap: u32) -> EthStateCount {
    if cap < 2 {
        return EthStateCount { feature_tuples: 1, with_fork: 1, greedy_tuples: 1 };
    }
    let (feature_tuples, with_fork) = reachable(cap, true);
    let (greedy_tuples, _) = reachable(cap, false);
    EthStateCount { feature_tuples, with_fork, greedy_tuples }
}
