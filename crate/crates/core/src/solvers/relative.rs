use serde::Serialize;

use super::exact::{greedy_policy, relative_value_iteration, Criterion};
use super::{SolveReport, TieBreak};
use crate::chain::Action;
use crate::error::{Error, Result};
use crate::mdp::MdpModel;

const GAIN_TOL: f64 = 1e-11;
const MAX_SWEEPS: usize = 2_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct RelativeSolve {
    pub rho_star: f64,
    pub policy: Vec<Action>,
    pub report: SolveReport,
}

/// Optimal long-run share of accepted blocks. Bisects `rho` over `[lower, 1]` on the sign of the
/// optimal average of `(1 - rho) * attacker - rho * others`; the policy is extracted at the lower end.
pub fn solve_relative<S>(mdp: &MdpModel<S>, lower: f64, tol: f64, tie: TieBreak) -> Result<RelativeSolve> {
    mdp.validate()?;
    let mut lo = lower;
    let mut hi = 1.0;
    let first = relative_value_iteration(mdp, Some(lo), GAIN_TOL, MAX_SWEEPS, None, true)?;
    if first.gain_hi < -GAIN_TOL {
        return Err(Error::Domain(format!(
            "bracket failure: optimal transformed gain {} < 0 at rho = {lo}",
            first.gain()
        )));
    }
    let mut warm = first.values;
    let mut bracket = vec![(lo, hi)];
    let mut iterations = first.iterations;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let out = relative_value_iteration(mdp, Some(mid), GAIN_TOL, MAX_SWEEPS, Some(&warm), true)?;
        iterations += out.iterations;
        let positive = if out.gain_lo > 0.0 {
            true
        } else if out.gain_hi < 0.0 {
            false
        } else {
            out.gain() >= 0.0
        };
        if positive {
            lo = mid;
        } else {
            hi = mid;
        }
        warm = out.values;
        bracket.push((lo, hi));
    }
    let fin = relative_value_iteration(mdp, Some(lo), GAIN_TOL, MAX_SWEEPS, Some(&warm), false)?;
    iterations += fin.iterations;
    let policy = greedy_policy(mdp, &fin.values, Criterion::Average, Some(lo), tie, 1e-9);
    Ok(RelativeSolve {
        rho_star: lo,
        policy: policy.clone(),
        report: SolveReport {
            values: fin.values.clone(),
            policy,
            iterations,
            residual: fin.gain_hi - fin.gain_lo,
            gain: Some(fin.gain()),
            rho_star: Some(lo),
            bracket,
        },
    })
}
