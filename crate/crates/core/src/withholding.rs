//! Two-pool block-withholding game: each pool sends part of its loyal power to mine in the other
//! pool and withhold full solutions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::rng::SimRng;
use crate::solvers::pg::{episodic_policy_gradient, GaussianPolicy, PgSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSetup {
    pub m1: f64,
    pub m2: f64,
}

impl PoolSetup {
    pub fn new(m1: f64, m2: f64) -> Result<Self> {
        if !(m1 > 0.0 && m2 > 0.0) || m1 + m2 > 1.0 + 1e-12 {
            return config(format!("pool sizes ({m1}, {m2}) must be positive with sum <= 1"));
        }
        Ok(Self { m1, m2 })
    }

    pub fn swapped(self) -> Self {
        Self { m1: self.m2, m2: self.m1 }
    }

    fn loyal(&self, pool: usize) -> f64 {
        if pool == 0 {
            self.m1
        } else {
            self.m2
        }
    }
}

/// Revenue density of each pool's loyal miners, normalized so that no attack gives 1.
pub fn revenue(setup: PoolSetup, x1: f64, x2: f64) -> Result<(f64, f64)> {
    let PoolSetup { m1, m2 } = setup;
    if !(0.0..=m1).contains(&x1) || !(0.0..=m2).contains(&x2) {
        return Err(Error::Domain(format!("infiltration ({x1}, {x2}) outside [0, m_i]")));
    }
    let work = 1.0 - x1 - x2;
    let den1 = work * (m1 * m2 + m1 * x1 + m2 * x2);
    let den2 = work * (m1 * m2 + m2 * x2 + m1 * x1);
    if work <= 0.0 || den1 == 0.0 || den2 == 0.0 {
        return Err(Error::Domain(format!("degenerate infiltration ({x1}, {x2})")));
    }
    let r1 = (m1 * m2 + m1 * x1 - x1 * x1 - x1 * x2) / den1;
    let r2 = (m1 * m2 + m2 * x2 - x2 * x2 - x1 * x2) / den2;
    Ok((r1, r2))
}

fn own_revenue(setup: PoolSetup, pool: usize, own: f64, other: f64) -> f64 {
    let r = if pool == 0 { revenue(setup, own, other) } else { revenue(setup, other, own) };
    match r {
        Ok((r1, r2)) => {
            if pool == 0 {
                r1
            } else {
                r2
            }
        }
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Pool `pool`'s revenue-maximizing infiltration against `other`: coarse grid, then golden section.
pub fn best_response(setup: PoolSetup, pool: usize, other: f64, tol: f64) -> f64 {
    let hi = setup.loyal(pool);
    let f = |x: f64| own_revenue(setup, pool, x, other);
    const GRID: usize = 256;
    let step = hi / GRID as f64;
    let (mut best_i, mut best_v) = (0usize, f(0.0));
    for i in 1..=GRID {
        let v = f(i as f64 * step);
        if v > best_v {
            best_i = i;
            best_v = v;
        }
    }
    let mut a = (best_i.saturating_sub(1)) as f64 * step;
    let mut b = ((best_i + 1).min(GRID)) as f64 * step;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol.max(1e-15) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [0.0, hi, mid].into_iter().fold(mid, |x, y| if f(y) > f(x) { y } else { x })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashPoint {
    pub x1: f64,
    pub x2: f64,
    pub r1: f64,
    pub r2: f64,
    pub iterations: usize,
}

/// Alternating best responses from no attack until the largest move is below `tol / 10`.
pub fn find_nash(setup: PoolSetup, tol: f64) -> Result<NashPoint> {
    let (mut x1, mut x2) = (0.0, 0.0);
    let inner = (tol / 1000.0).max(1e-12);
    let mut trace = Vec::new();
    for it in 1..=10_000 {
        let n1 = best_response(setup, 0, x2, inner);
        let n2 = best_response(setup, 1, n1, inner);
        let moved = (n1 - x1).abs().max((n2 - x2).abs());
        x1 = n1;
        x2 = n2;
        trace.push(moved);
        if moved < tol / 10.0 {
            let (r1, r2) = revenue(setup, x1, x2)?;
            return Ok(NashPoint { x1, x2, r1, r2, iterations: it });
        }
    }
    Err(Error::NonConvergence { iterations: trace.len(), residual: *trace.last().unwrap_or(&f64::NAN) })
}

/// Largest revenue gain either pool can get by a unilateral move on a grid of spacing `step`.
pub fn max_deviation_gain(setup: PoolSetup, x1: f64, x2: f64, step: f64) -> Result<f64> {
    let (r1, r2) = revenue(setup, x1, x2)?;
    let mut gain = f64::NEG_INFINITY;
    for (pool, base, other) in [(0, r1, x2), (1, r2, x1)] {
        let hi = setup.loyal(pool);
        let n = (hi / step).floor() as usize;
        for i in 0..=n {
            gain = gain.max(own_revenue(setup, pool, i as f64 * step, other) - base);
        }
    }
    Ok(gain)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Alternation rounds; in each, pool 1 adapts then pool 2 adapts.
    pub rounds: usize,
    pub schedule: PgSchedule,
    pub initial_fraction: f64,
    pub std_fraction: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            schedule: PgSchedule { iterations: 200, batch: 64, lr: 5.0, lr_decay: 1.0, min_std: 1e-6, learn_std: false },
            initial_fraction: 0.5,
            std_fraction: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LearnedPoint {
    pub x1: f64,
    pub x2: f64,
    pub r1: f64,
    pub r2: f64,
}

/// Two episodic policy-gradient agents taking turns; each episode is a single stateless play.
pub fn learn_withholding(setup: PoolSetup, cfg: &LearnerConfig, rng: &mut SimRng) -> Result<LearnedPoint> {
    let mk = |m: f64| GaussianPolicy::new(cfg.initial_fraction * m, cfg.std_fraction * m, m);
    let mut pols = [mk(setup.m1), mk(setup.m2)];
    for _ in 0..cfg.rounds {
        for pool in 0..2 {
            let other = pols[1 - pool].mean();
            pols[pool] = episodic_policy_gradient(pols[pool], &cfg.schedule, rng, |x, _| {
                own_revenue(setup, pool, x, other)
            })?;
        }
    }
    let (x1, x2) = (pols[0].mean(), pols[1].mean());
    let (r1, r2) = revenue(setup, x1, x2)?;
    Ok(LearnedPoint { x1, x2, r1, r2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashRow {
    pub m1: f64,
    pub m2: f64,
    pub x1: f64,
    pub x2: f64,
    pub r1: f64,
    pub r2: f64,
}

pub fn write_nash_csv(path: &Path, rows: &[NashRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_attack_is_unit() {
        for (m1, m2) in [(0.1, 0.1), (0.3, 0.6), (0.5, 0.5), (0.01, 0.9)] {
            let (r1, r2) = revenue(PoolSetup::new(m1, m2).unwrap(), 0.0, 0.0).unwrap();
            assert!((r1 - 1.0).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exchange_symmetry() {
        let s = PoolSetup::new(0.2, 0.35).unwrap();
        let (r1, r2) = revenue(s, 0.05, 0.11).unwrap();
        let (q1, q2) = revenue(s.swapped(), 0.11, 0.05).unwrap();
        assert!((r1 - q2).abs() < 1e-15 && (r2 - q1).abs() < 1e-15);
    }

    #[test]
    fn infeasible_infiltration_is_domain_error() {
        let s = PoolSetup::new(0.5, 0.5).unwrap();
        assert!(matches!(revenue(s, 0.5, 0.5), Err(Error::Domain(_))));
        assert!(matches!(revenue(s, 0.6, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn small_pool_attacks_large_one() {
        let s = PoolSetup::new(0.01, 0.6).unwrap();
        assert!(best_response(s, 0, 0.0, 1e-9) > 0.0);
        let tiny = PoolSetup::new(1e-9, 0.6).unwrap();
        assert!(best_response(tiny, 0, 0.0, 1e-12) < 1e-9 + 1e-15);
    }

    #[test]
    fn symmetric_dilemma() {
        let s = PoolSetup::new(0.2, 0.2).unwrap();
        let ne = find_nash(s, 0.01).unwrap();
        assert!((ne.x1 - ne.x2).abs() < 1e-3);
        assert!(ne.x1 > 0.0 && ne.r1 < 1.0 && ne.r2 < 1.0);
    }
}
