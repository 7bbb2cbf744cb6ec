//! Three-voter coordination game contrasting rushing and simultaneous observation.

/// Probability of voting 1 given what the voter sees of A's vote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteRule {
    pub if_a_zero: f64,
    pub if_a_one: f64,
    pub blind: f64,
}

impl VoteRule {
    pub const fn constant(v: u8) -> Self {
        let p = v as f64;
        Self { if_a_zero: p, if_a_one: p, blind: p }
    }

    pub const fn uniform() -> Self {
        Self { if_a_zero: 0.5, if_a_one: 0.5, blind: 0.5 }
    }

    /// Votes against A when A is visible; uniform otherwise.
    pub const fn contrarian() -> Self {
        Self { if_a_zero: 1.0, if_a_one: 0.0, blind: 0.5 }
    }

    /// Votes with A when A is visible; uniform otherwise.
    pub const fn follower() -> Self {
        Self { if_a_zero: 0.0, if_a_one: 1.0, blind: 0.5 }
    }

    fn p_one(&self, a: u8, rushing: bool) -> f64 {
        match (rushing, a) {
            (false, _) => self.blind,
            (true, 0) => self.if_a_zero,
            (true, _) => self.if_a_one,
        }
    }

    /// Pure rules: every response table over A-visible cells, plus both blind votes.
    pub fn deterministic() -> Vec<Self> {
        let mut out = Vec::new();
        for z in 0..2u8 {
            for o in 0..2u8 {
                for b in 0..2u8 {
                    out.push(Self { if_a_zero: z as f64, if_a_one: o as f64, blind: b as f64 });
                }
            }
        }
        out
    }
}

fn winning_count(votes: [u8; 3]) -> f64 {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    ones.max(3 - ones) as f64
}

/// C's expected payoff: the vote count of the winning option, with A voting uniformly at random.
pub fn toy_vote_game(b: VoteRule, c: VoteRule, rushing: bool) -> f64 {
    let mut total = 0.0;
    for a in 0..2u8 {
        let pb = b.p_one(a, rushing);
        let pc = c.p_one(a, rushing);
        for vb in 0..2u8 {
            for vc in 0..2u8 {
                let w = 0.5 * if vb == 1 { pb } else { 1.0 - pb } * if vc == 1 { pc } else { 1.0 - pc };
                if w > 0.0 {
                    total += w * winning_count([a, vb, vc]);
                }
            }
        }
    }
    total
}

/// C's best pure response to `b` and its payoff.
pub fn best_vote_response(b: VoteRule, rushing: bool) -> (VoteRule, f64) {
    VoteRule::deterministic()
        .into_iter()
        .map(|c| (c, toy_vote_game(b, c, rushing)))
        .fold((VoteRule::constant(0), f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contrarian_pins_reward_at_two() {
        for c in VoteRule::deterministic().into_iter().chain([VoteRule::uniform(), VoteRule::follower()]) {
            assert_eq!(toy_vote_game(VoteRule::contrarian(), c, true), 2.0);
        }
    }

    #[test]
    fn simultaneous_uniform_play() {
        // all agree w.p. 1/4 (reward 3), otherwise 2
        assert!((toy_vote_game(VoteRule::uniform(), VoteRule::uniform(), false) - 2.25).abs() < 1e-15);
    }

    #[test]
    fn blind_best_response_beats_two() {
        for b in [VoteRule::contrarian(), VoteRule::uniform(), VoteRule::constant(1)] {
            assert!(best_vote_response(b, false).1 > 2.0);
        }
        assert_eq!(best_vote_response(VoteRule::constant(1), false).1, 2.5);
    }
}
