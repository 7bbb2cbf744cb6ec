//! The k-agent mining game under rushing and time-segmented orderings.

mod curriculum;
mod env;
mod strategy;
mod tournament;
mod vote;

pub use env::{AgentObs, MultiAgentConfig, MultiAgentEnv, Ordering, RewardLedger, StepDelta};
pub use strategy::{osm_strategy, HonestMimic, Sm1Strategy, Strategy, TableStrategy};
pub use tournament::{run_episode, run_tournament, AgentSummary, EpisodeStats, TournamentResult};
pub use curriculum::{
    anneal_m, curriculum_trainer, wait_bonus, CurriculumConfig, CurriculumResult, IterationPoint, LearnerSpec,
    QTableStrategy,
};
pub use vote::{best_vote_response, toy_vote_game, VoteRule};
