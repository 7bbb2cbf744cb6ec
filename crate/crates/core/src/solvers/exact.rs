use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{SolveReport, TieBreak};
use crate::chain::Action;
use crate::error::{Error, Result};
use crate::mdp::{scalar_reward, MdpModel, Transition};

/// Self-loop weight mixed into every row so average-reward sweeps stay aperiodic.
const APERIODIC_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Criterion {
    Discounted(f64),
    Average,
}

fn backup(list: &[Transition], rho: Option<f64>, values: &[f64], discount: f64) -> f64 {
    list.iter().map(|t| t.prob * (scalar_reward(t, rho) + discount * values[t.next])).sum()
}

/// Greedy action per state; maximizers within `tol` are broken by `tie`.
pub fn greedy_policy<S>(
    mdp: &MdpModel<S>,
    values: &[f64],
    criterion: Criterion,
    rho: Option<f64>,
    tie: TieBreak,
    tol: f64,
) -> Vec<Action> {
    let discount = match criterion {
        Criterion::Discounted(d) => d,
        Criterion::Average => 1.0,
    };
    (0..mdp.num_states())
        .map(|s| {
            let qs: Vec<(Action, f64)> =
                mdp.actions(s).map(|(a, list)| (a, backup(list, rho, values, discount))).collect();
            let best = qs.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
            let near: Vec<Action> = qs.iter().filter(|q| q.1 >= best - tol).map(|q| q.0).collect();
            if tie == TieBreak::WaitAtOrigin && s == mdp.initial && near.contains(&Action::Wait) {
                Action::Wait
            } else {
                near[0]
            }
        })
        .collect()
}

pub fn value_iteration<S>(mdp: &MdpModel<S>, discount: f64, tol: f64) -> Result<SolveReport> {
    mdp.validate()?;
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::Config(format!("discount {discount} outside (0, 1)")));
    }
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let stop = tol * (1.0 - discount) / discount;
    let max_iter = 10_000_000usize;
    for it in 1..=max_iter {
        let mut residual: f64 = 0.0;
        for s in 0..n {
            let best = mdp
                .actions(s)
                .map(|(_, list)| backup(list, mdp.rho, &v, discount))
                .fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if residual < stop {
            let policy = greedy_policy(mdp, &v, Criterion::Discounted(discount), mdp.rho, TieBreak::LowestIndex, 1e-12);
            return Ok(SolveReport {
                values: v,
                policy,
                iterations: it,
                residual,
                gain: None,
                rho_star: None,
                bracket: Vec::new(),
            });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: f64::NAN })
}

#[derive(Debug, Clone)]
pub struct RviOutcome {
    /// Relative values normalized to zero at the initial state.
    pub values: Vec<f64>,
    pub gain_lo: f64,
    pub gain_hi: f64,
    pub iterations: usize,
}

impl RviOutcome {
    pub fn gain(&self) -> f64 {
        0.5 * (self.gain_lo + self.gain_hi)
    }
}

/// Relative value iteration on the aperiodic transform, returning span bounds on the optimal gain.
/// With `sign_only`, stops as soon as the bounds exclude zero.
pub fn relative_value_iteration<S>(
    mdp: &MdpModel<S>,
    rho: Option<f64>,
    tol: f64,
    max_iter: usize,
    warm: Option<&[f64]>,
    sign_only: bool,
) -> Result<RviOutcome> {
    let n = mdp.num_states();
    let mut v = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    if v.len() != n {
        return Err(Error::Contract("warm start length differs from the state count".into()));
    }
    let mut next = vec![0.0; n];
    let r0 = mdp.initial;
    for it in 1..=max_iter {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..n {
            let best = mdp
                .actions(s)
                .map(|(_, list)| backup(list, rho, &v, 1.0))
                .fold(f64::NEG_INFINITY, f64::max);
            let t = APERIODIC_TAU * best + (1.0 - APERIODIC_TAU) * v[s];
            let d = t - v[s];
            lo = lo.min(d);
            hi = hi.max(d);
            next[s] = t;
        }
        let shift = next[r0];
        for (dst, src) in v.iter_mut().zip(&next) {
            *dst = src - shift;
        }
        let (glo, ghi) = (lo / APERIODIC_TAU, hi / APERIODIC_TAU);
        if ghi - glo < tol || (sign_only && (glo > 0.0 || ghi < 0.0)) {
            return Ok(RviOutcome { values: v, gain_lo: glo, gain_hi: ghi, iterations: it });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: f64::NAN })
}

/// Howard policy iteration. Ties keep the incumbent action, then the lowest index.
pub fn policy_iteration<S>(mdp: &MdpModel<S>, criterion: Criterion, max_iter: usize) -> Result<SolveReport> {
    mdp.validate()?;
    let n = mdp.num_states();
    let mut policy: Vec<Action> = (0..n).map(|s| mdp.actions(s).next().expect("validated").0).collect();
    let discount = match criterion {
        Criterion::Discounted(d) => d,
        Criterion::Average => 1.0,
    };
    for it in 1..=max_iter {
        let (values, gain) = evaluate_linear(mdp, &policy, criterion)?;
        let mut changed = false;
        for s in 0..n {
            let current = mdp.transitions[s][policy[s].index()].as_deref().expect("policy is permitted");
            let incumbent = backup(current, mdp.rho, &values, discount);
            let mut best = (policy[s], incumbent);
            for (a, list) in mdp.actions(s) {
                let q = backup(list, mdp.rho, &values, discount);
                if q > best.1 + 1e-10 * (1.0 + q.abs()) {
                    best = (a, q);
                }
            }
            if best.0 != policy[s] {
                policy[s] = best.0;
                changed = true;
            }
        }
        if !changed {
            return Ok(SolveReport {
                values,
                policy,
                iterations: it,
                residual: 0.0,
                gain,
                rho_star: None,
                bracket: Vec::new(),
            });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: f64::NAN })
}

/// Exact values of a fixed policy by dense linear solve. Average mode pins the initial state's bias to 0.
fn evaluate_linear<S>(mdp: &MdpModel<S>, policy: &[Action], criterion: Criterion) -> Result<(Vec<f64>, Option<f64>)> {
    let n = mdp.num_states();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let r0 = mdp.initial;
    for s in 0..n {
        let list = mdp.transitions[s][policy[s].index()]
            .as_deref()
            .ok_or_else(|| Error::Contract(format!("policy picks a masked action in state {s}")))?;
        match criterion {
            Criterion::Discounted(d) => {
                a[(s, s)] += 1.0;
                for t in list {
                    a[(s, t.next)] -= d * t.prob;
                    b[s] += t.prob * mdp.reward(t);
                }
            }
            Criterion::Average => {
                // Unknowns: bias for every state except r0, whose column carries the gain.
                a[(s, r0)] += 1.0;
                if s != r0 {
                    a[(s, s)] += 1.0;
                }
                for t in list {
                    if t.next != r0 {
                        a[(s, t.next)] -= t.prob;
                    }
                    b[s] += t.prob * mdp.reward(t);
                }
            }
        }
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Domain("policy evaluation system is singular (multichain policy)".into()))?;
    let mut values: Vec<f64> = x.iter().copied().collect();
    match criterion {
        Criterion::Discounted(_) => Ok((values, None)),
        Criterion::Average => {
            let g = values[r0];
            values[r0] = 0.0;
            Ok((values, Some(g)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AverageEval {
    /// Expected attacker reward per step.
    pub attacker_rate: f64,
    pub others_rate: f64,
}

impl AverageEval {
    pub fn relative(&self) -> f64 {
        let total = self.attacker_rate + self.others_rate;
        if total > 0.0 {
            self.attacker_rate / total
        } else {
            0.0
        }
    }
}

/// Long-run reward rates of a fixed policy started in the initial state,
/// from the limiting distribution of the lazy chain.
pub fn evaluate_average<S>(mdp: &MdpModel<S>, policy: &[Action]) -> Result<AverageEval> {
    let n = mdp.num_states();
    let rows: Vec<&[Transition]> = (0..n)
        .map(|s| {
            mdp.transitions[s][policy[s].index()]
                .as_deref()
                .ok_or_else(|| Error::Contract(format!("policy picks a masked action in state {s}")))
        })
        .collect::<Result<_>>()?;
    let mut d = vec![0.0; n];
    d[mdp.initial] = 1.0;
    let mut next = vec![0.0; n];
    let max_iter = 2_000_000;
    for _ in 0..max_iter {
        next.iter_mut().zip(&d).for_each(|(x, y)| *x = 0.5 * y);
        for (s, row) in rows.iter().enumerate() {
            let mass = 0.5 * d[s];
            if mass == 0.0 {
                continue;
            }
            for t in *row {
                next[t.next] += mass * t.prob;
            }
        }
        let diff: f64 = next.iter().zip(&d).map(|(x, y)| (x - y).abs()).sum();
        std::mem::swap(&mut d, &mut next);
        if diff < 1e-15 {
            break;
        }
    }
    let (mut att, mut oth) = (0.0, 0.0);
    for (s, row) in rows.iter().enumerate() {
        for t in *row {
            att += d[s] * t.prob * t.attacker;
            oth += d[s] * t.prob * t.others;
        }
    }
    Ok(AverageEval { attacker_rate: att, others_rate: oth })
}

pub fn evaluate_relative<S>(mdp: &MdpModel<S>, policy: &[Action]) -> Result<f64> {
    Ok(evaluate_average(mdp, policy)?.relative())
}
