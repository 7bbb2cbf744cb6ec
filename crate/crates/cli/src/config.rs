use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Diagnostic};

pub const OUTPUT_ROOT_VAR: &str = "INCENTIVE_LAB_OUTPUT_ROOT";
pub const SEEDS_VAR: &str = "INCENTIVE_LAB_SEEDS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SolveOsm,
    ThresholdScan,
    StochasticAlpha,
    Replay,
    MultiagentTournament,
    Casper,
    WithholdingNash,
    Prop1,
}

impl Kind {
    pub fn label(self) -> &'static str {
        match self {
            Kind::SolveOsm => "solve-osm",
            Kind::ThresholdScan => "threshold-scan",
            Kind::StochasticAlpha => "stochastic-alpha",
            Kind::Replay => "replay",
            Kind::MultiagentTournament => "multiagent-tournament",
            Kind::Casper => "casper",
            Kind::WithholdingNash => "withholding-nash",
            Kind::Prop1 => "prop1",
        }
    }

    fn protocol(self) -> &'static str {
        match self {
            Kind::Casper => "casper",
            Kind::WithholdingNash => "pool",
            _ => "bitcoin",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Either an explicit list or an inclusive `start..=stop` range walked in `step` increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Default for Axis {
    fn default() -> Self {
        Axis::List(Vec::new())
    }
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Axis::List(ref v) => v.clone(),
            Axis::Range { start, stop, step } => {
                if !(step > 0.0) || stop < start {
                    return Vec::new();
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub alpha: Axis,
    #[serde(default)]
    pub gamma: Axis,
    #[serde(default)]
    pub k: Vec<u32>,
    #[serde(default)]
    pub m: Vec<u32>,
    #[serde(default)]
    pub sigma: Axis,
    #[serde(default)]
    pub beta: Axis,
    #[serde(default)]
    pub tau: Axis,
    /// Epoch counts for `prop1`.
    #[serde(default)]
    pub n: Vec<u32>,
    /// Pool sizes for `withholding-nash`; symmetric unless `pool2` is given.
    #[serde(default)]
    pub pool: Axis,
    #[serde(default)]
    pub pool2: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerOpts {
    #[serde(default = "d_phases")]
    pub phases: usize,
    #[serde(default = "d_learn_steps")]
    pub learn_steps: u64,
    #[serde(default = "d_eval_steps")]
    pub eval_steps: u64,
    #[serde(default = "d_discount")]
    pub discount: f64,
    #[serde(default = "d_eps_start")]
    pub eps_start: f64,
    #[serde(default = "d_eps_end")]
    pub eps_end: f64,
    #[serde(default = "d_lr_power")]
    pub lr_power: f64,
    #[serde(default = "d_lr_floor")]
    pub lr_floor: f64,
}

fn d_phases() -> usize {
    5
}
fn d_learn_steps() -> u64 {
    900_000
}
fn d_eval_steps() -> u64 {
    100_000
}
fn d_discount() -> f64 {
    0.99
}
fn d_eps_start() -> f64 {
    0.3
}
fn d_eps_end() -> f64 {
    0.01
}
fn d_lr_power() -> f64 {
    0.6
}
fn d_lr_floor() -> f64 {
    0.001
}
fn d_seeds() -> Vec<u64> {
    vec![1]
}
fn d_trials() -> usize {
    100
}
fn d_steps() -> usize {
    10_000
}
fn d_episodes() -> usize {
    1_000
}
fn d_rounds() -> usize {
    10_000
}
fn d_cap() -> u32 {
    20
}
fn d_ordering() -> String {
    "time-segmented".into()
}
fn d_blocks_per_epoch() -> u64 {
    2016
}
fn d_bank_step() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub protocol: Option<String>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_episodes")]
    pub episodes: usize,
    /// Closed voting rounds per Casper run.
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    #[serde(default = "d_cap")]
    pub cap: u32,
    /// `rushing` or `time-segmented` (one run per `grid.m`).
    #[serde(default = "d_ordering")]
    pub ordering: String,
    /// Strategy line-ups for tournaments, agent 0 first: `honest`, `sm1`, `osm`, `osm-wait`.
    #[serde(default)]
    pub matchups: Vec<Vec<String>>,
    /// Hash-rate files for `replay`, resolved against the config file's directory.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default = "d_blocks_per_epoch")]
    pub blocks_per_epoch: u64,
    /// Alpha spacing of the solved policy bank for `stochastic-alpha` and `replay`.
    #[serde(default = "d_bank_step")]
    pub bank_step: f64,
    /// Adds a tabular Q-learning column to `solve-osm`.
    #[serde(default)]
    pub learner: Option<LearnerOpts>,
    pub output: PathBuf,
}

pub const STRATEGIES: [&str; 4] = ["honest", "sm1", "osm", "osm-wait"];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| {
            CliError::Validation(vec![Diagnostic::new("config", e.message().to_string())])
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut cfg.inputs {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.apply_env()?;
        Ok(cfg)
    }

    fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(seeds) = std::env::var(SEEDS_VAR) {
            self.seeds = seeds
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<u64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Validation(vec![Diagnostic::new(SEEDS_VAR, format!("not a seed list: {e}"))]))?;
        }
        if let Ok(root) = std::env::var(OUTPUT_ROOT_VAR) {
            if self.output.is_relative() {
                self.output = PathBuf::from(root).join(&self.output);
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything but the output location.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        format!("{:x}", Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let mut need = |name: &str, vals: Vec<f64>, lo: f64, hi: f64| {
            if vals.is_empty() {
                d.push(Diagnostic::new(format!("grid.{name}"), "must not be empty"));
            } else if let Some(x) = vals.iter().find(|x| !(lo..=hi).contains(*x)) {
                d.push(Diagnostic::new(format!("grid.{name}"), format!("value {x} outside [{lo}, {hi}]")));
            }
        };
        let g = &self.grid;
        match self.kind {
            Kind::SolveOsm | Kind::ThresholdScan => {
                need("alpha", g.alpha.values(), 0.0, 0.5);
                need("gamma", g.gamma.values(), 0.0, 1.0);
            }
            Kind::StochasticAlpha => {
                need("alpha", g.alpha.values(), 1e-9, 0.5 - 1e-9);
                need("gamma", g.gamma.values(), 0.0, 1.0);
                need("sigma", g.sigma.values(), 0.0, 1.0);
            }
            Kind::Replay => {
                need("alpha", g.alpha.values(), 1e-9, 0.5);
                need("gamma", g.gamma.values(), 0.0, 1.0);
            }
            Kind::MultiagentTournament => {
                need("alpha", g.alpha.values(), 1e-9, 0.5);
                need("gamma", g.gamma.values(), 0.0, 1.0);
            }
            Kind::Casper => {
                need("alpha", g.alpha.values(), 0.0, 0.5);
                need("beta", g.beta.values(), 0.0, 1.0 / 3.0 + 1e-12);
                need("tau", g.tau.values(), 0.0, 1.0);
            }
            Kind::WithholdingNash => need("pool", g.pool.values(), 1e-9, 1.0),
            Kind::Prop1 => {
                need("alpha", g.alpha.values(), 0.0, 0.5);
                if g.n.is_empty() || g.n.contains(&0) {
                    d.push(Diagnostic::new("grid.n", "must be a non-empty list of positive epoch counts"));
                }
                if g.k.is_empty() || g.k.iter().any(|&k| k < 2) {
                    d.push(Diagnostic::new("grid.k", "must be a non-empty list of actor counts >= 2"));
                }
            }
        }
        if let Some(p) = &self.protocol {
            if p != self.kind.protocol() {
                d.push(Diagnostic::new("protocol", format!("{} runs on '{}', not '{p}'", self.kind, self.kind.protocol())));
            }
        }
        if self.seeds.is_empty() {
            d.push(Diagnostic::new("seeds", "must not be empty"));
        }
        if self.trials == 0 || self.steps == 0 || self.episodes == 0 || self.rounds == 0 {
            d.push(Diagnostic::new("trials/steps/episodes/rounds", "must be positive"));
        }
        if self.cap < 2 {
            d.push(Diagnostic::new("cap", "must be at least 2"));
        }
        if !(self.bank_step > 0.0 && self.bank_step <= 0.5) {
            d.push(Diagnostic::new("bank_step", "must lie in (0, 0.5]"));
        }
        if self.kind == Kind::MultiagentTournament {
            match self.ordering.as_str() {
                "rushing" => {}
                "time-segmented" => {
                    if g.m.is_empty() || g.m.contains(&0) {
                        d.push(Diagnostic::new("grid.m", "time-segmented ordering needs positive turn counts"));
                    }
                }
                o => d.push(Diagnostic::new("ordering", format!("unknown ordering '{o}' (rushing, time-segmented)"))),
            }
            if self.matchups.is_empty() {
                d.push(Diagnostic::new("matchups", "must list at least one strategy line-up"));
            }
            for (i, mu) in self.matchups.iter().enumerate() {
                if mu.is_empty() {
                    d.push(Diagnostic::new(format!("matchups[{i}]"), "empty line-up"));
                }
                if let Some(s) = mu.iter().find(|s| !STRATEGIES.contains(&s.as_str())) {
                    d.push(Diagnostic::new(format!("matchups[{i}]"), format!("unknown strategy '{s}'")));
                }
                if !g.k.is_empty() && !g.k.contains(&(mu.len() as u32)) {
                    d.push(Diagnostic::new(format!("matchups[{i}]"), format!("{} agents not in grid.k", mu.len())));
                }
            }
        }
        if self.kind == Kind::Replay {
            if self.inputs.is_empty() {
                d.push(Diagnostic::new("inputs", "replay needs at least one hash-rate file"));
            }
            for p in self.inputs.iter().filter(|p| !p.is_file()) {
                d.push(Diagnostic::new("inputs", format!("{} does not exist", p.display())));
            }
        }
        if self.kind == Kind::WithholdingNash {
            let p2 = g.pool2.values();
            for m1 in g.pool.values() {
                let partners = if p2.is_empty() { vec![m1] } else { p2.clone() };
                if let Some(m2) = partners.iter().find(|m2| m1 + **m2 > 1.0 + 1e-12 || **m2 <= 0.0) {
                    d.push(Diagnostic::new("grid.pool2", format!("pools ({m1}, {m2}) must be positive with sum <= 1")));
                }
            }
        }
        if let Some(l) = &self.learner {
            if self.kind != Kind::SolveOsm {
                d.push(Diagnostic::new("learner", "only solve-osm has a learned column"));
            }
            if l.phases == 0 || l.learn_steps == 0 || !(0.0..1.0).contains(&l.discount) {
                d.push(Diagnostic::new("learner", "needs phases and learn_steps > 0 and discount in [0, 1)"));
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_axis_is_inclusive() {
        let a = Axis::Range { start: 0.05, stop: 0.5, step: 0.01 };
        let v = a.values();
        assert_eq!(v.len(), 46);
        assert_eq!(v[0], 0.05);
        assert_eq!(v[20], 0.25);
        assert_eq!(*v.last().unwrap(), 0.5);
    }

    #[test]
    fn hash_ignores_output() {
        let text = "kind = \"prop1\"\noutput = \"a\"\n[grid]\nalpha = [0.4]\nk = [2]\nn = [1, 2]\n";
        let mut a: ExperimentConfig = toml::from_str(text).unwrap();
        let h = a.hash();
        a.output = "b".into();
        assert_eq!(a.hash(), h);
        a.seeds = vec![9];
        assert_ne!(a.hash(), h);
    }
}
