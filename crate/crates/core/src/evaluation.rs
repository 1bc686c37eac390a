//! Exact robust evaluation of policies, optimal robust values, suboptimality
//! gaps and Monte-Carlo win rates.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kl_dual::robust_backup;
use crate::model::{check_distribution, DiscountedRmdp, FiniteHorizonRmdp, SaTable, StateTable};
use crate::policy::{sample_index, Policy};
use crate::rng::substream;
use crate::solvers::{drvi_finite, SolveDiagnostics, SolveResult};

/// Robust action and state values of a fixed policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyValues {
    pub q: SaTable,
    pub v: StateTable,
    /// Final `||Q_m - Q_{m-1}||_inf` (0 for the exact episodic recursion).
    pub residual: f64,
    pub iterations: usize,
}

fn check_policy(policy: &Policy, shape: (usize, usize, usize)) -> Result<()> {
    if policy.shape() != shape {
        return Err(Error::ShapeMismatch(format!(
            "policy {:?} vs model {:?}",
            policy.shape(),
            shape
        )));
    }
    Ok(())
}

/// Backward recursion of the robust consistency equation
/// `Q_h = r_h + inf_P P.V_{h+1}`, `V_h(s) = E_{a ~ pi_h(s)} Q_h(s, a)`.
pub fn robust_policy_eval_finite(mdp: &FiniteHorizonRmdp, policy: &Policy, dual_tol: f64) -> Result<PolicyValues> {
    let kernel = mdp.kernel();
    let (horizon, states, actions) = kernel.shape();
    check_policy(policy, kernel.shape())?;
    check_tol(dual_tol)?;
    let sigma = mdp.sigma();
    let mut q = SaTable::zeros(horizon, states, actions);
    let mut v = StateTable::zeros(horizon + 1, states);
    for h in (0..horizon).rev() {
        let next_v = v.step(h + 1).to_vec();
        let rows: Vec<Vec<f64>> = (0..states)
            .into_par_iter()
            .map(|s| {
                (0..actions)
                    .map(|a| {
                        mdp.reward().get(h, s, a) + robust_backup(kernel.row(h, s, a), &next_v, sigma, dual_tol).value
                    })
                    .collect()
            })
            .collect();
        for (s, row) in rows.iter().enumerate() {
            for (a, &x) in row.iter().enumerate() {
                q.set(h, s, a, x);
            }
            v.set(h, s, policy.expect(h, s, row));
        }
    }
    Ok(PolicyValues {
        q,
        v,
        residual: 0.0,
        iterations: horizon,
    })
}

/// Optimal robust values and policy on the nominal kernel (DRVI, no penalty).
pub fn robust_value_optimal_finite(mdp: &FiniteHorizonRmdp, dual_tol: f64) -> Result<SolveResult> {
    drvi_finite(mdp.kernel(), mdp.reward(), mdp.sigma(), dual_tol)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Shared fixed-point loop for discounted evaluation and optimal values.
/// `select` turns a Q row of state `s` into `V(s)`.
fn discounted_fixed_point(
    mdp: &DiscountedRmdp,
    tol: f64,
    max_iter: usize,
    dual_tol: f64,
    select: impl Fn(usize, &[f64]) -> f64 + Sync,
) -> Result<(SaTable, Vec<f64>, f64, usize)> {
    check_tol(tol)?;
    check_tol(dual_tol)?;
    let kernel = mdp.kernel();
    let (_, states, actions) = kernel.shape();
    let (gamma, sigma) = (mdp.gamma(), mdp.sigma());
    let threshold = tol * (1.0 - gamma);
    let mut q = SaTable::zeros(1, states, actions);
    let mut v = vec![0.0; states];
    let mut residual = f64::INFINITY;
    for m in 1..=max_iter {
        let rows: Vec<Vec<f64>> = (0..states)
            .into_par_iter()
            .map(|s| {
                (0..actions)
                    .map(|a| {
                        mdp.reward().get(0, s, a) + gamma * robust_backup(kernel.row(0, s, a), &v, sigma, dual_tol).value
                    })
                    .collect()
            })
            .collect();
        let next = SaTable::from_vec(1, states, actions, rows.concat())?;
        residual = next.max_abs_diff(&q).expect("same shape");
        q = next;
        v = (0..states).map(|s| select(s, q.row(0, s))).collect();
        if residual <= threshold {
            return Ok((q, v, residual, m));
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Fixed-point iteration of the policy's robust consistency operator from
/// `Q = 0`, stopping once `||Q_m - Q_{m-1}||_inf <= tol (1 - gamma)`.
pub fn robust_policy_eval_infinite(
    mdp: &DiscountedRmdp,
    policy: &Policy,
    tol: f64,
    max_iter: usize,
    dual_tol: f64,
) -> Result<PolicyValues> {
    check_policy(policy, mdp.kernel().shape())?;
    let (q, v, residual, iterations) =
        discounted_fixed_point(mdp, tol, max_iter, dual_tol, |s, row| policy.expect(0, s, row))?;
    let mut vt = StateTable::zeros(1, mdp.num_states());
    for (s, x) in v.into_iter().enumerate() {
        vt.set(0, s, x);
    }
    Ok(PolicyValues {
        q,
        v: vt,
        residual,
        iterations,
    })
}

/// Optimal robust values by robust value iteration run to the same
/// residual rule as [`robust_policy_eval_infinite`].
pub fn robust_value_optimal_infinite(
    mdp: &DiscountedRmdp,
    tol: f64,
    max_iter: usize,
    dual_tol: f64,
) -> Result<SolveResult> {
    let (q, v, residual, iterations) = discounted_fixed_point(mdp, tol, max_iter, dual_tol, |_, row| {
        row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    })?;
    let (_, states, actions) = q.shape();
    let mut vt = StateTable::zeros(1, states);
    let mut policy = Vec::with_capacity(states);
    for s in 0..states {
        let row = q.row(0, s);
        let mut arg = 0;
        for a in 1..actions {
            if row[a] > row[arg] {
                arg = a;
            }
        }
        vt.set(0, s, v[s]);
        policy.push(arg);
    }
    Ok(SolveResult {
        q,
        v: vt,
        policy: Policy::deterministic(1, states, actions, policy)?,
        iterations,
        diagnostics: SolveDiagnostics {
            lambda_star: SaTable::zeros(1, states, actions),
            at_boundary: vec![false; states * actions],
            max_bracket_width: 0.0,
            deltas: vec![residual],
        },
    })
}

/// `<rho, V*_1 - V^pi_1>`, floored at 0.
pub fn suboptimality_gap_finite(
    mdp: &FiniteHorizonRmdp,
    policy: &Policy,
    rho: &[f64],
    dual_tol: f64,
) -> Result<f64> {
    check_distribution(rho, mdp.num_states(), "rho")?;
    let star = robust_value_optimal_finite(mdp, dual_tol)?;
    gap_against(&star.v, mdp, policy, rho, dual_tol)
}

/// Gap against a precomputed optimal value table, for sweeps that score many
/// policies on one model.
pub fn gap_against(
    v_star: &StateTable,
    mdp: &FiniteHorizonRmdp,
    policy: &Policy,
    rho: &[f64],
    dual_tol: f64,
) -> Result<f64> {
    check_distribution(rho, mdp.num_states(), "rho")?;
    let pi = robust_policy_eval_finite(mdp, policy, dual_tol)?;
    Ok((v_star.dot_step(0, rho) - pi.v.dot_step(0, rho)).max(0.0))
}

/// `<rho, V* - V^pi>` for a discounted model, floored at 0.
pub fn suboptimality_gap_infinite(
    mdp: &DiscountedRmdp,
    policy: &Policy,
    rho: &[f64],
    tol: f64,
    max_iter: usize,
    dual_tol: f64,
) -> Result<f64> {
    check_distribution(rho, mdp.num_states(), "rho")?;
    let star = robust_value_optimal_infinite(mdp, tol, max_iter, dual_tol)?;
    let pi = robust_policy_eval_infinite(mdp, policy, tol, max_iter, dual_tol)?;
    Ok((star.v.dot_step(0, rho) - pi.v.dot_step(0, rho)).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub robust_value_per_state: Vec<f64>,
    pub value_at_rho: f64,
    pub gap_vs_optimal: f64,
    /// Largest dual search bracket of the optimal solve (episodic) or the
    /// final evaluation residual (discounted).
    pub tolerance_achieved: f64,
    pub mc_win_rate: Option<f64>,
}

/// Robust value of `policy` at step 1 and its gap to the robust optimum.
pub fn evaluate_finite(
    mdp: &FiniteHorizonRmdp,
    policy: &Policy,
    rho: &[f64],
    dual_tol: f64,
) -> Result<EvalReport> {
    check_distribution(rho, mdp.num_states(), "rho")?;
    let star = robust_value_optimal_finite(mdp, dual_tol)?;
    let pi = robust_policy_eval_finite(mdp, policy, dual_tol)?;
    let value_at_rho = pi.v.dot_step(0, rho);
    Ok(EvalReport {
        robust_value_per_state: pi.v.step(0).to_vec(),
        value_at_rho,
        gap_vs_optimal: (star.v.dot_step(0, rho) - value_at_rho).max(0.0),
        tolerance_achieved: star.diagnostics.max_bracket_width,
        mc_win_rate: None,
    })
}

/// Fraction of `episodes` rollouts on the nominal kernel of `mdp`, started
/// from `rho`, that visit `target` at any of the `H + 1` visited states.
/// Rollout `k` draws from substream `k` of `seed`.
pub fn monte_carlo_win_rate(
    mdp: &FiniteHorizonRmdp,
    policy: &Policy,
    rho: &[f64],
    target: usize,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    let kernel = mdp.kernel();
    let (horizon, states, _) = kernel.shape();
    check_policy(policy, kernel.shape())?;
    check_distribution(rho, states, "rho")?;
    if episodes == 0 {
        return Err(Error::InvalidParameter("episode count must be positive".into()));
    }
    if target >= states {
        return Err(Error::OutOfRange(format!("target state {target} with {states} states")));
    }
    let wins: usize = (0..episodes)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            let mut s = sample_index(rho, rng.random());
            if s == target {
                return 1;
            }
            for h in 0..horizon {
                let a = policy.sample_with(h, s, rng.random());
                s = sample_index(kernel.row(h, s, a), rng.random());
                if s == target {
                    return 1;
                }
            }
            0
        })
        .sum();
    Ok(wins as f64 / episodes as f64)
}
