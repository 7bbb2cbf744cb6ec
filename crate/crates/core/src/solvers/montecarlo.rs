use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{Action, ActionMask};
use crate::error::Result;
use crate::rng::{stream, SimRng};

/// Rewards credited during one environment step, in block units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnvReward {
    pub attacker: f64,
    pub others: f64,
}

/// A stateful single-agent environment driven by a policy over its observation.
pub trait Environment {
    type Obs;
    fn reset(&mut self, rng: &mut SimRng);
    fn observe(&self) -> Self::Obs;
    fn mask(&self) -> ActionMask;
    fn step(&mut self, action: Action, rng: &mut SimRng) -> Result<EnvReward>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSummary {
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

impl McSummary {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, std: var.sqrt(), trials: xs.len() }
    }

    pub fn stderr(&self) -> f64 {
        self.std / (self.trials as f64).sqrt()
    }
}

/// Independent trials of `steps` steps each; relative reward = own accepted / total accepted.
/// Trial `i` draws from stream `(seed, i)`, so results do not depend on the thread count.
pub fn monte_carlo_eval<E, MkEnv, P>(
    make_env: MkEnv,
    policy: P,
    trials: usize,
    steps: usize,
    seed: u64,
) -> Result<McSummary>
where
    E: Environment,
    MkEnv: Fn() -> E + Sync,
    P: Fn(&E::Obs) -> Action + Sync,
{
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut env = make_env();
            env.reset(&mut rng);
            let (mut own, mut total) = (0.0, 0.0);
            for _ in 0..steps {
                let mask = env.mask();
                let mut a = policy(&env.observe());
                if !mask.allows(a) {
                    a = if mask.allows(Action::Override) { Action::Override } else { Action::Adopt };
                }
                let r = env.step(a, &mut rng)?;
                own += r.attacker;
                total += r.attacker + r.others;
            }
            Ok(if total > 0.0 { own / total } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(McSummary::from_samples(&samples))
}
