//! Single-agent Bitcoin selfish mining over the compact `(a, h, fork)` state.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain::{resolve_tie, sample_miner, Action, ActionMask, FollowerFractions, ForkLabel, MiningWeights, Party};
use crate::error::{config, Error, Result};
use crate::mdp::{MdpModel, Outcome};
use crate::rng::{uniform, SimRng};
use crate::solvers::{EnvReward, Environment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct BtcState {
    /// Private chain length since the last common block.
    pub a: u32,
    /// Public chain length since the last common block.
    pub h: u32,
    pub fork: ForkLabel,
}

impl BtcState {
    pub const START: BtcState = BtcState { a: 0, h: 0, fork: ForkLabel::Irrelevant };

    pub fn new(a: u32, h: u32, fork: ForkLabel) -> Self {
        Self { a, h, fork }
    }

    /// Whether some history produces this state: a live tie needs a longer private chain
    /// over a non-empty public one, and an honest block must be the latest for `Relevant`.
    pub fn is_consistent(&self) -> bool {
        match self.fork {
            ForkLabel::Active => self.a > self.h && self.h >= 1,
            ForkLabel::Relevant => self.h >= 1,
            ForkLabel::Irrelevant => self.a >= 1 || self.h == 0,
        }
    }
}

impl fmt::Display for BtcState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.a, self.h, self.fork)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtcEnvConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Forks are resolved before either branch reaches this many blocks.
    pub cap: u32,
    pub discount: f64,
}

impl BtcEnvConfig {
    pub fn new(alpha: f64, gamma: f64, cap: u32) -> Result<Self> {
        let c = Self { alpha, gamma, cap, discount: 0.99 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.alpha) {
            return config(format!("alpha {} outside [0, 0.5]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return config(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.cap < 2 {
            return config(format!("cap {} cannot express a match (need >= 2)", self.cap));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return config(format!("discount {} outside [0, 1)", self.discount));
        }
        Ok(())
    }

    pub fn mask(&self, s: BtcState) -> ActionMask {
        capped_mask(s, self.cap)
    }

    pub fn sanitize(&self, s: BtcState, action: Action) -> Action {
        legalize(self.mask(s), action)
    }
}

/// `permitted` plus the cap rule: at the boundary only Adopt or Override remain.
pub fn capped_mask(s: BtcState, cap: u32) -> ActionMask {
    let mut m = permitted(s);
    if s.a + 1 >= cap || s.h + 1 >= cap {
        m.set(Action::Wait, false);
        m.set(Action::Match, false);
    }
    m
}

/// Replace a masked choice by the forced resolution (Override when ahead, else Adopt).
pub fn legalize(mask: ActionMask, action: Action) -> Action {
    if mask.allows(action) {
        action
    } else if mask.allows(Action::Override) {
        Action::Override
    } else {
        Action::Adopt
    }
}

pub fn permitted(s: BtcState) -> ActionMask {
    ActionMask([
        true,
        s.a > s.h,
        true,
        s.a >= s.h && s.h >= 1 && s.fork == ForkLabel::Relevant,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepOutcome {
    pub next: BtcState,
    pub attacker: u32,
    pub others: u32,
    /// Blocks discarded for good during this step.
    pub stale: u32,
}

/// Who mined the slot's block and, during a live tie, which branch the honest block extends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MiningEvent {
    Attacker,
    HonestOnAttacker,
    HonestOnHonest,
}

/// Chains right after the action, before the slot's mining event.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Staged {
    pub a: u32,
    pub h: u32,
    pub tie: bool,
    pub attacker: u32,
    pub others: u32,
    pub stale: u32,
}

pub(crate) fn stage(s: BtcState, action: Action) -> Staged {
    match action {
        Action::Adopt => Staged { a: 0, h: 0, tie: false, attacker: 0, others: s.h, stale: s.a },
        Action::Override => Staged { a: s.a - s.h - 1, h: 0, tie: false, attacker: s.h + 1, others: 0, stale: s.h },
        Action::Wait => Staged { a: s.a, h: s.h, tie: s.fork == ForkLabel::Active, attacker: 0, others: 0, stale: 0 },
        Action::Match => Staged { a: s.a, h: s.h, tie: true, attacker: 0, others: 0, stale: 0 },
    }
}

pub(crate) fn finish(st: Staged, ev: MiningEvent) -> StepOutcome {
    let (next, attacker, stale) = match ev {
        MiningEvent::Attacker => {
            let fork = if st.tie { ForkLabel::Active } else { ForkLabel::Irrelevant };
            (BtcState::new(st.a + 1, st.h, fork), st.attacker, st.stale)
        }
        MiningEvent::HonestOnAttacker => {
            (BtcState::new(st.a - st.h, 1, ForkLabel::Relevant), st.attacker + st.h, st.stale + st.h)
        }
        MiningEvent::HonestOnHonest => (BtcState::new(st.a, st.h + 1, ForkLabel::Relevant), st.attacker, st.stale),
    };
    StepOutcome { next, attacker, others: st.others, stale }
}

/// Mining event for one slot, consuming one draw plus a tie draw only during a live tie.
pub(crate) fn draw_event(alpha: f64, gamma: f64, tie: bool, rng: &mut SimRng) -> Result<MiningEvent> {
    let weights = MiningWeights::single(alpha)?;
    match sample_miner(&weights, uniform(rng)) {
        Party::Agent(_) => Ok(MiningEvent::Attacker),
        Party::Honest if !tie => Ok(MiningEvent::HonestOnHonest),
        Party::Honest => {
            let g = FollowerFractions::new(vec![gamma])?;
            match resolve_tie(&[Party::Agent(0), Party::Honest], &g, uniform(rng))? {
                Party::Agent(_) => Ok(MiningEvent::HonestOnAttacker),
                Party::Honest => Ok(MiningEvent::HonestOnHonest),
            }
        }
    }
}

pub fn step(cfg: &BtcEnvConfig, s: BtcState, action: Action, rng: &mut SimRng) -> Result<StepOutcome> {
    if !s.is_consistent() {
        return Err(Error::Contract(format!("unreachable state {s}")));
    }
    if !cfg.mask(s).allows(action) {
        return Err(Error::NotPermitted { agent: 0, action: action.to_string(), state: s.to_string() });
    }
    let st = stage(s, action);
    let ev = draw_event(cfg.alpha, cfg.gamma, st.tie, rng)?;
    Ok(finish(st, ev))
}

/// Exact successor distribution of a permitted action; `None` when masked.
pub fn outcomes(cfg: &BtcEnvConfig, s: BtcState, action: Action) -> Option<Vec<Outcome<BtcState>>> {
    if !cfg.mask(s).allows(action) {
        return None;
    }
    let st = stage(s, action);
    let mut events = vec![(cfg.alpha, MiningEvent::Attacker)];
    if st.tie {
        events.push((cfg.gamma * (1.0 - cfg.alpha), MiningEvent::HonestOnAttacker));
        events.push(((1.0 - cfg.gamma) * (1.0 - cfg.alpha), MiningEvent::HonestOnHonest));
    } else {
        events.push((1.0 - cfg.alpha, MiningEvent::HonestOnHonest));
    }
    Some(
        events
            .into_iter()
            .map(|(prob, ev)| {
                let o = finish(st, ev);
                Outcome { prob, next: o.next, attacker: o.attacker as f64, others: o.others as f64 }
            })
            .collect(),
    )
}

pub fn build_mdp(cfg: &BtcEnvConfig, rho: Option<f64>) -> Result<MdpModel<BtcState>> {
    cfg.validate()?;
    if let Some(r) = rho {
        if !(0.0..=1.0).contains(&r) {
            return config(format!("rho {r} outside [0, 1]"));
        }
    }
    let mut m = MdpModel::explore(BtcState::START, |s, a| outcomes(cfg, *s, a))?;
    m.rho = rho;
    Ok(m)
}

/// The classic two-branch selfish-mining automaton written over `(a, h, fork)`.
pub fn sm1_policy(s: BtcState) -> Action {
    let BtcState { a, h, fork } = s;
    if h > a {
        Action::Adopt
    } else if a == h {
        if h >= 1 && fork == ForkLabel::Relevant {
            Action::Match
        } else {
            Action::Wait
        }
    } else if a == h + 1 && h >= 1 {
        Action::Override
    } else {
        Action::Wait
    }
}

/// Publishes every block at once and always mines on the longest public chain.
pub fn honest_policy(s: BtcState) -> Action {
    if s.a > s.h {
        Action::Override
    } else if s.h > s.a {
        Action::Adopt
    } else if s.h >= 1 && s.fork == ForkLabel::Relevant {
        Action::Match
    } else {
        Action::Wait
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RolloutStats {
    pub steps: u64,
    pub attacker: u64,
    pub others: u64,
    pub stale: u64,
    pub pending: u64,
}

impl RolloutStats {
    pub fn relative(&self) -> f64 {
        let total = self.attacker + self.others;
        if total == 0 {
            0.0
        } else {
            self.attacker as f64 / total as f64
        }
    }
}

/// Runs `steps` slots from the start state; masked choices fall back to the forced resolution.
pub fn rollout<P>(cfg: &BtcEnvConfig, policy: P, steps: u64, rng: &mut SimRng) -> Result<RolloutStats>
where
    P: Fn(BtcState) -> Action,
{
    let mut s = BtcState::START;
    let mut stats = RolloutStats { steps, ..Default::default() };
    for _ in 0..steps {
        let action = cfg.sanitize(s, policy(s));
        let o = step(cfg, s, action, rng)?;
        stats.attacker += o.attacker as u64;
        stats.others += o.others as u64;
        stats.stale += o.stale as u64;
        s = o.next;
    }
    stats.pending = (s.a + s.h) as u64;
    Ok(stats)
}

/// Stateful wrapper over `step` for drivers written against `solvers::Environment`.
#[derive(Debug, Clone)]
pub struct BitcoinEnv {
    pub cfg: BtcEnvConfig,
    state: BtcState,
}

impl BitcoinEnv {
    pub fn new(cfg: BtcEnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: BtcState::START })
    }

    pub fn state(&self) -> BtcState {
        self.state
    }
}

impl Environment for BitcoinEnv {
    type Obs = BtcState;

    fn reset(&mut self, _rng: &mut SimRng) {
        self.state = BtcState::START;
    }

    fn observe(&self) -> BtcState {
        self.state
    }

    fn mask(&self) -> ActionMask {
        self.cfg.mask(self.state)
    }

    fn step(&mut self, action: Action, rng: &mut SimRng) -> Result<EnvReward> {
        let o = step(&self.cfg, self.state, action, rng)?;
        self.state = o.next;
        Ok(EnvReward { attacker: o.attacker as f64, others: o.others as f64 })
    }
}
