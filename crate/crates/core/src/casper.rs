//! Checkpoint voting composed with selfish mining, with additive deposit rewards.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chain::{Action, ForkLabel};
use crate::error::{config, Error, Result};
use crate::rng::{uniform, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasperConfig {
    /// Blocks per epoch; checkpoints sit at multiples of this height.
    pub epoch_len: u64,
    pub p_vote: f64,
    pub vote_mean: f64,
    pub vote_std: f64,
    /// Attacker share of the voting deposit.
    pub beta: f64,
    /// Attacker share of hash power.
    pub alpha: f64,
    /// Probability an honest miner extends the attacker's branch during a public tie.
    pub gamma: f64,
    pub deposit: f64,
    pub rho: f64,
    /// Reward per canonical block.
    pub block_reward: f64,
    /// Multiplier applied to voting rewards (epoch-length rescaling).
    pub vote_scale: f64,
}

impl Default for CasperConfig {
    fn default() -> Self {
        Self {
            epoch_len: 10,
            p_vote: 0.9,
            vote_mean: 0.1,
            vote_std: 0.05,
            beta: 0.0,
            alpha: 0.0,
            gamma: 0.5,
            deposit: 1e7,
            rho: 2.21e-6,
            block_reward: 2.0,
            vote_scale: 0.2,
        }
    }
}

impl CasperConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let c = Self { alpha, beta, ..Self::default() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0 / 3.0 + 1e-12).contains(&self.beta) {
            return config(format!("beta {} outside [0, 1/3]", self.beta));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return config(format!("alpha {} outside [0, 1)", self.alpha));
        }
        if self.epoch_len < 2 {
            return config("epoch length must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.p_vote) || !(0.0..=1.0).contains(&self.gamma) {
            return config("p_vote and gamma must lie in [0, 1]");
        }
        if !(self.vote_std >= 0.0) || !(self.deposit >= 0.0) || !(self.rho >= 0.0) {
            return config("vote_std, deposit and rho must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteOutcome {
    JustifiedCorrect,
    JustifiedWrong,
    UnjustifiedCorrect,
    UnjustifiedWrong,
}

/// Additive reward for a voter with deposit `deposit`; `m` is the fraction of correct votes.
pub fn voting_reward(outcome: VoteOutcome, m: f64, deposit: f64, rho: f64) -> f64 {
    match outcome {
        VoteOutcome::JustifiedCorrect => m * rho / 2.0 * deposit,
        // (1 + m rho / 2) / (1 + rho) - 1, without the cancellation
        VoteOutcome::JustifiedWrong => (m * rho / 2.0 - rho) / (1.0 + rho) * deposit,
        VoteOutcome::UnjustifiedCorrect => 0.0,
        VoteOutcome::UnjustifiedWrong => -rho / (1.0 + rho) * deposit,
    }
}

/// Fork between the attacker's private branch and the public honest branch, both above `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CasperChain {
    pub base: u64,
    pub a: u32,
    pub h: u32,
    /// Published prefix of the attacker branch.
    pub published: u32,
    pub fork: ForkLabel,
}

impl CasperChain {
    pub fn public_height(&self) -> u64 {
        self.base + self.h.max(self.published) as u64
    }

    pub fn tied(&self) -> bool {
        self.published == self.h && self.h >= 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Honest,
    Attacker,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VotingState {
    pub active: bool,
    pub height: u64,
    /// Honest votes cast for the checkpoint on the honest branch.
    pub honest_on_honest: f64,
    /// Honest votes cast for the checkpoint on the attacker branch.
    pub honest_on_attacker: f64,
    pub attacker_vote: Option<Side>,
    pub beta: f64,
}

impl VotingState {
    fn idle(beta: f64) -> Self {
        Self { active: false, height: 0, honest_on_honest: 0.0, honest_on_attacker: 0.0, attacker_vote: None, beta }
    }

    pub fn honest_cast(&self) -> f64 {
        self.honest_on_honest + self.honest_on_attacker
    }

    pub fn tally(&self, side: Side) -> f64 {
        let honest = match side {
            Side::Honest => self.honest_on_honest,
            Side::Attacker => self.honest_on_attacker,
        };
        honest + if self.attacker_vote == Some(side) { self.beta } else { 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CasperState {
    pub chain: CasperChain,
    pub voting: VotingState,
    pub next_checkpoint: u64,
    pub slot: u64,
}

impl CasperState {
    pub fn new(cfg: &CasperConfig) -> Self {
        Self {
            chain: CasperChain { base: 0, a: 0, h: 0, published: 0, fork: ForkLabel::Irrelevant },
            voting: VotingState::idle(cfg.beta),
            next_checkpoint: cfg.epoch_len,
            slot: 0,
        }
    }

    /// Side whose checkpoint at the voting height lies on the attacker's own chain, and whether it is public.
    fn attacker_target(&self) -> (Side, bool) {
        let c = &self.chain;
        let rel = self.voting.height.saturating_sub(c.base);
        if c.a as u64 >= rel && rel >= 1 {
            (Side::Attacker, c.published as u64 >= rel)
        } else {
            (Side::Honest, true)
        }
    }

    pub fn vote_permitted(&self) -> bool {
        self.voting.active && self.voting.attacker_vote.is_none() && self.attacker_target().1
    }

    pub fn chain_permitted(&self, action: Action) -> bool {
        let c = &self.chain;
        match action {
            Action::Adopt | Action::Wait => true,
            Action::Override => c.a > c.h,
            Action::Match => c.a >= c.h && c.h >= 1 && c.published < c.h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CasperAction {
    Chain(Action),
    Vote,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundRecord {
    pub height: u64,
    pub justified: bool,
    /// Fraction of the deposit counted as voting for the surviving checkpoint.
    pub m: f64,
    pub survivor: Side,
    pub attacker_outcome: VoteOutcome,
    pub attacker_reward: f64,
    pub honest_reward: f64,
    pub wrong_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Vote,
    Mine,
    RoundStart,
    RoundClose,
}

/// One line of the per-slot event log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CasperEvent {
    pub slot: u64,
    pub kind: EventKind,
    pub height: u64,
    pub tally_honest: f64,
    pub tally_attacker: f64,
    pub attacker_reward: f64,
    pub honest_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CasperStep {
    pub attacker_blocks: u64,
    pub honest_blocks: u64,
    pub closed: Vec<RoundRecord>,
    pub events: Vec<CasperEvent>,
}

/// Honest allocation for one vote event: `min(max(draw, 0), 1 - beta - v_h)`.
pub fn honest_allocation(draw: f64, beta: f64, honest_cast: f64) -> f64 {
    draw.max(0.0).min((1.0 - beta - honest_cast).max(0.0))
}

/// Pays out and closes the active round. Every uncast deposit is counted for `survivor`.
fn close_round(cfg: &CasperConfig, st: &mut CasperState, survivor: Side, step: &mut CasperStep) {
    let v = st.voting;
    let loser = match survivor {
        Side::Honest => Side::Attacker,
        Side::Attacker => Side::Honest,
    };
    let wrong_honest = match loser {
        Side::Honest => v.honest_on_honest,
        Side::Attacker => v.honest_on_attacker,
    };
    let attacker_wrong = v.attacker_vote == Some(loser);
    let wrong = wrong_honest + if attacker_wrong { v.beta } else { 0.0 };
    let m = 1.0 - wrong;
    let justified = m > 2.0 / 3.0;
    let (good, bad) = if justified {
        (VoteOutcome::JustifiedCorrect, VoteOutcome::JustifiedWrong)
    } else {
        (VoteOutcome::UnjustifiedCorrect, VoteOutcome::UnjustifiedWrong)
    };
    let pay = |o: VoteOutcome, share: f64| cfg.vote_scale * voting_reward(o, m, share * cfg.deposit, cfg.rho);
    let attacker_outcome = if attacker_wrong { bad } else { good };
    let attacker_reward = pay(attacker_outcome, v.beta);
    let honest_total = 1.0 - v.beta;
    let honest_reward = pay(good, honest_total - wrong_honest) + pay(bad, wrong_honest);
    step.closed.push(RoundRecord {
        height: v.height,
        justified,
        m,
        survivor,
        attacker_outcome,
        attacker_reward,
        honest_reward,
        wrong_share: wrong,
    });
    step.events.push(CasperEvent {
        slot: st.slot,
        kind: EventKind::RoundClose,
        height: v.height,
        tally_honest: v.tally(Side::Honest),
        tally_attacker: v.tally(Side::Attacker),
        attacker_reward,
        honest_reward,
    });
    st.voting = VotingState::idle(cfg.beta);
}

/// Closes a round whose checkpoint height has become common to both chains.
fn settle_if_resolved(cfg: &CasperConfig, st: &mut CasperState, winner: Side, step: &mut CasperStep) {
    if st.voting.active && st.voting.height <= st.chain.base {
        close_round(cfg, st, winner, step);
    }
}

/// Opens rounds for every checkpoint height the public chain has reached.
fn activate_rounds(cfg: &CasperConfig, st: &mut CasperState, step: &mut CasperStep) {
    while st.chain.public_height() >= st.next_checkpoint {
        if st.voting.active {
            close_round(cfg, st, public_side(&st.chain), step);
        }
        st.voting = VotingState { active: true, height: st.next_checkpoint, ..VotingState::idle(cfg.beta) };
        st.next_checkpoint += cfg.epoch_len;
        step.events.push(CasperEvent {
            slot: st.slot,
            kind: EventKind::RoundStart,
            height: st.voting.height,
            tally_honest: 0.0,
            tally_attacker: 0.0,
            attacker_reward: 0.0,
            honest_reward: 0.0,
        });
        if st.voting.height <= st.chain.base {
            close_round(cfg, st, Side::Honest, step);
        }
    }
}

fn public_side(c: &CasperChain) -> Side {
    if c.published > c.h {
        Side::Attacker
    } else {
        Side::Honest
    }
}

fn check_justified(cfg: &CasperConfig, st: &mut CasperState, step: &mut CasperStep) {
    if !st.voting.active {
        return;
    }
    for side in [Side::Honest, Side::Attacker] {
        if st.voting.tally(side) > 2.0 / 3.0 {
            close_round(cfg, st, side, step);
            return;
        }
    }
}

fn apply_chain(cfg: &CasperConfig, st: &mut CasperState, action: Action, step: &mut CasperStep) {
    let c = st.chain;
    match action {
        Action::Adopt => {
            step.honest_blocks += c.h as u64;
            st.chain = CasperChain { base: c.base + c.h as u64, a: 0, h: 0, published: 0, fork: c.fork };
            settle_if_resolved(cfg, st, Side::Honest, step);
        }
        Action::Override => {
            step.attacker_blocks += c.h as u64 + 1;
            st.chain =
                CasperChain { base: c.base + c.h as u64 + 1, a: c.a - c.h - 1, h: 0, published: 0, fork: c.fork };
            settle_if_resolved(cfg, st, Side::Attacker, step);
            activate_rounds(cfg, st, step);
        }
        Action::Match => st.chain.published = c.h,
        Action::Wait => {}
    }
}

fn mine(cfg: &CasperConfig, st: &mut CasperState, rng: &mut SimRng, step: &mut CasperStep) {
    let c = st.chain;
    if uniform(rng) < cfg.alpha {
        st.chain.a += 1;
        st.chain.fork = if c.tied() { ForkLabel::Active } else { ForkLabel::Irrelevant };
    } else if c.tied() && uniform(rng) < cfg.gamma {
        step.attacker_blocks += c.published as u64;
        st.chain = CasperChain {
            base: c.base + c.published as u64,
            a: c.a - c.published,
            h: 1,
            published: 0,
            fork: ForkLabel::Relevant,
        };
        settle_if_resolved(cfg, st, Side::Attacker, step);
    } else {
        st.chain.h += 1;
        st.chain.fork = ForkLabel::Relevant;
    }
    step.events.push(CasperEvent {
        slot: st.slot,
        kind: EventKind::Mine,
        height: st.chain.public_height(),
        tally_honest: st.voting.tally(Side::Honest),
        tally_attacker: st.voting.tally(Side::Attacker),
        attacker_reward: 0.0,
        honest_reward: 0.0,
    });
    activate_rounds(cfg, st, step);
}

/// Staggered honest voting: a random share of the remaining honest deposit for a longest chain's checkpoint.
pub fn allocate_honest_votes(cfg: &CasperConfig, st: &mut CasperState, rng: &mut SimRng) -> f64 {
    let normal = Normal::new(cfg.vote_mean, cfg.vote_std).expect("validated std");
    let x = normal.sample(rng);
    let amount = honest_allocation(x, cfg.beta, st.voting.honest_cast());
    let side = if st.chain.tied() && rng.gen::<bool>() { Side::Attacker } else { public_side(&st.chain) };
    match side {
        Side::Honest => st.voting.honest_on_honest += amount,
        Side::Attacker => st.voting.honest_on_attacker += amount,
    }
    amount
}

/// One slot: the attacker acts, then either a vote event (probability `p_vote`) or a mining event.
pub fn casper_step(cfg: &CasperConfig, st: &mut CasperState, action: CasperAction, rng: &mut SimRng) -> Result<CasperStep> {
    let mut step = CasperStep::default();
    match action {
        CasperAction::Vote => {
            if !st.vote_permitted() {
                return Err(Error::Contract(format!("vote not permitted at slot {} (active: {})", st.slot, st.voting.active)));
            }
            st.voting.attacker_vote = Some(st.attacker_target().0);
            check_justified(cfg, st, &mut step);
        }
        CasperAction::Chain(a) => {
            if !st.chain_permitted(a) {
                return Err(Error::NotPermitted { agent: 0, action: a.to_string(), state: format!("{:?}", st.chain) });
            }
            apply_chain(cfg, st, a, &mut step);
        }
    }
    if uniform(rng) < cfg.p_vote {
        if st.voting.active {
            allocate_honest_votes(cfg, st, rng);
            step.events.push(CasperEvent {
                slot: st.slot,
                kind: EventKind::Vote,
                height: st.voting.height,
                tally_honest: st.voting.tally(Side::Honest),
                tally_attacker: st.voting.tally(Side::Attacker),
                attacker_reward: 0.0,
                honest_reward: 0.0,
            });
            check_justified(cfg, st, &mut step);
        }
    } else {
        mine(cfg, st, rng, &mut step);
    }
    st.slot += 1;
    Ok(step)
}

/// Protocol-following play: publish at once, follow the longest chain, vote as soon as a round opens.
pub fn honest_casper_policy(st: &CasperState) -> CasperAction {
    let c = st.chain;
    if c.h > c.a {
        CasperAction::Chain(Action::Adopt)
    } else if c.a > c.h {
        CasperAction::Chain(Action::Override)
    } else if st.vote_permitted() {
        CasperAction::Vote
    } else {
        CasperAction::Chain(Action::Wait)
    }
}

/// Two-checkpoint attack: race the honest checkpoint with a hidden one, vote for it,
/// and release the rest of the private chain once the honest checkpoint holds `tau` of the votes.
pub fn scripted_attack_policy(st: &CasperState, tau: f64) -> CasperAction {
    let c = st.chain;
    if c.h > c.a {
        return CasperAction::Chain(Action::Adopt);
    }
    let v = &st.voting;
    let rel = v.height.saturating_sub(c.base);
    let contested = v.active && rel >= 1 && rel <= c.h as u64 && c.a as u64 >= rel;
    if contested {
        if c.published < c.h {
            return if c.a > c.h && v.tally(Side::Honest) >= tau {
                CasperAction::Chain(Action::Override)
            } else {
                CasperAction::Chain(Action::Match)
            };
        }
        if v.attacker_vote.is_none() && st.vote_permitted() {
            return CasperAction::Vote;
        }
        if v.tally(Side::Honest) >= tau && c.a > c.h {
            return CasperAction::Chain(Action::Override);
        }
        return CasperAction::Chain(Action::Wait);
    }
    if st.vote_permitted() {
        return CasperAction::Vote;
    }
    let a = if c.a == c.h && c.h >= 1 && c.fork == ForkLabel::Relevant && c.published < c.h {
        Action::Match
    } else if c.a == c.h + 1 && c.h >= 1 {
        Action::Override
    } else {
        Action::Wait
    };
    CasperAction::Chain(a)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CasperRun {
    pub rounds: Vec<RoundRecord>,
    pub attacker_blocks: u64,
    pub honest_blocks: u64,
    pub slots: u64,
    pub vote_events: u64,
}

impl CasperRun {
    pub fn attacker_voting(&self) -> f64 {
        self.rounds.iter().map(|r| r.attacker_reward).sum()
    }

    pub fn total_voting(&self) -> f64 {
        self.rounds.iter().map(|r| r.attacker_reward + r.honest_reward).sum()
    }

    pub fn mining_reward(&self, cfg: &CasperConfig) -> f64 {
        cfg.block_reward * (self.attacker_blocks + self.honest_blocks) as f64
    }

    /// Total mining reward over total voting reward.
    pub fn mining_to_voting(&self, cfg: &CasperConfig) -> f64 {
        self.mining_reward(cfg) / self.total_voting()
    }

    /// Attacker share of all voting reward paid out.
    pub fn relative_voting(&self) -> f64 {
        self.attacker_voting() / self.total_voting()
    }

    /// Per round: attacker voting reward minus its deposit share of the round total.
    pub fn excess_voting(&self, beta: f64) -> Vec<f64> {
        self.rounds.iter().map(|r| r.attacker_reward - beta * (r.attacker_reward + r.honest_reward)).collect()
    }
}

/// Plays until `rounds` voting rounds have closed. `sink` sees every event in order.
pub fn simulate_casper(
    cfg: &CasperConfig,
    mut policy: impl FnMut(&CasperState) -> CasperAction,
    rounds: usize,
    rng: &mut SimRng,
    mut sink: impl FnMut(&CasperEvent),
) -> Result<CasperRun> {
    cfg.validate()?;
    let mut st = CasperState::new(cfg);
    let mut run = CasperRun::default();
    let limit = (rounds as u64 + 1) * cfg.epoch_len * 10_000;
    while run.rounds.len() < rounds {
        if st.slot > limit {
            return Err(Error::Domain(format!("voting stalled after {} slots", st.slot)));
        }
        let action = policy(&st);
        let step = casper_step(cfg, &mut st, action, rng)?;
        run.attacker_blocks += step.attacker_blocks;
        run.honest_blocks += step.honest_blocks;
        for e in &step.events {
            if e.kind == EventKind::Vote {
                run.vote_events += 1;
            }
            sink(e);
        }
        run.rounds.extend(step.closed);
    }
    run.rounds.truncate(rounds);
    run.slots = st.slot;
    Ok(run)
}

/// Writes events as JSON lines.
pub fn write_event_log(path: &std::path::Path, events: &[CasperEvent]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
