//! Penalties and robust value iteration: exact DRVI and the pessimistic
//! DRVI-LCB variant, for episodic and discounted models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::EmpiricalKernel;
use crate::error::{Error, Result};
use crate::kl_dual::robust_backup;
use crate::model::{KernelTable, SaTable, StateTable};
use crate::policy::Policy;

/// Constants of the pessimism penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub c_b: f64,
    pub delta: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { c_b: 1.0, delta: 0.1 }
    }
}

impl PenaltyConfig {
    pub fn new(c_b: f64, delta: f64) -> Result<Self> {
        let cfg = Self { c_b, delta };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if !(self.c_b > 0.0) || !self.c_b.is_finite() {
            return Err(Error::InvalidParameter(format!("c_b must be positive, got {}", self.c_b)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Per-`(h, s, a)` penalties (a single step for discounted models).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTable {
    table: SaTable,
}

impl PenaltyTable {
    pub fn from_table(table: SaTable) -> Result<Self> {
        if table.as_slice().iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::OutOfRange("penalties must be finite and nonnegative".into()));
        }
        Ok(Self { table })
    }

    pub fn zeros(steps: usize, states: usize, actions: usize) -> Self {
        Self {
            table: SaTable::zeros(steps, states, actions),
        }
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.table.get(h, s, a)
    }

    pub fn table(&self) -> &SaTable {
        &self.table
    }
}

fn check_sigma_positive(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "penalties need a positive radius, got sigma = {sigma}"
        )));
    }
    Ok(())
}

/// `b_h(s,a) = min{c_b (H/sigma) sqrt(log(K H S / delta) / (Pmin_h(s,a) N_h(s,a))), H}`,
/// and `H` on unvisited pairs.
pub fn penalty_finite(
    empirical: &EmpiricalKernel,
    config: &PenaltyConfig,
    horizon: usize,
    sigma: f64,
    num_episodes: u64,
    num_states: usize,
) -> Result<PenaltyTable> {
    config.check()?;
    check_sigma_positive(sigma)?;
    let (steps, states, actions) = empirical.shape();
    if steps != horizon {
        return Err(Error::ShapeMismatch(format!("empirical kernel has {steps} steps, horizon is {horizon}")));
    }
    if num_episodes == 0 {
        return Err(Error::InvalidParameter("episode count must be positive".into()));
    }
    let h_f = horizon as f64;
    let log_term = (num_episodes as f64 * h_f * num_states as f64 / config.delta).ln();
    let table = SaTable::from_fn(steps, states, actions, |h, s, a| {
        match (empirical.count(h, s, a), empirical.p_min_hat(h, s, a)) {
            (n, Some(p_min)) if n > 0 => {
                let b = config.c_b * (h_f / sigma) * (log_term / (p_min * n as f64)).sqrt();
                b.min(h_f)
            }
            _ => h_f,
        }
    });
    PenaltyTable::from_table(table)
}

/// `b(s,a) = min{(c_b / (sigma (1-gamma))) sqrt(log(2 (1+sigma) N^3 S / ((1-gamma) delta)) / (Pmin N(s,a)))
/// + 4 / (sigma N (1-gamma)), 1/(1-gamma)} + 2 / (sigma N)`, and
/// `1/(1-gamma) + 2/(sigma N)` on unvisited pairs. `N` is the dataset size.
pub fn penalty_infinite(
    empirical: &EmpiricalKernel,
    config: &PenaltyConfig,
    gamma: f64,
    sigma: f64,
    num_samples: u64,
    num_states: usize,
) -> Result<PenaltyTable> {
    config.check()?;
    check_sigma_positive(sigma)?;
    check_gamma(gamma)?;
    let (steps, states, actions) = empirical.shape();
    if steps != 1 {
        return Err(Error::ShapeMismatch("discounted empirical kernels have a single step".into()));
    }
    if num_samples == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let n = num_samples as f64;
    let horizon = 1.0 / (1.0 - gamma);
    let log_term = (2.0 * (1.0 + sigma) * n.powi(3) * num_states as f64 / ((1.0 - gamma) * config.delta)).ln();
    let tail = 2.0 / (sigma * n);
    let table = SaTable::from_fn(1, states, actions, |_, s, a| {
        match (empirical.count(0, s, a), empirical.p_min_hat(0, s, a)) {
            (count, Some(p_min)) if count > 0 => {
                let main = config.c_b / (sigma * (1.0 - gamma)) * (log_term / (p_min * count as f64)).sqrt()
                    + 4.0 / (sigma * n * (1.0 - gamma));
                main.min(horizon) + tail
            }
            _ => horizon + tail,
        }
    });
    PenaltyTable::from_table(table)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma must lie in [0,1), got {gamma}")));
    }
    Ok(())
}

/// Per-backup dual information and sweep residuals of a solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Maximizing `lambda` of every backup in the last sweep (0 on the
    /// boundary branch, at `sigma == 0` and on unvisited rows).
    pub lambda_star: SaTable,
    /// Flat `(h, s, a)` flags: backup took the `lambda = 0` branch.
    pub at_boundary: Vec<bool>,
    /// Largest final search-bracket width over all backups of the run.
    pub max_bracket_width: f64,
    /// `||Q_m - Q_{m-1}||_inf` per iteration (discounted solvers only).
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub q: SaTable,
    pub v: StateTable,
    /// Greedy deterministic policy, lowest action index on ties.
    pub policy: Policy,
    /// Sweeps performed (the horizon for episodic models).
    pub iterations: usize,
    pub diagnostics: SolveDiagnostics,
}

impl SolveResult {
    /// `||Q_m - Q_{m-1}||_inf` per iteration as `iteration,delta` lines.
    pub fn delta_log(&self) -> String {
        let mut out = String::from("iteration,delta\n");
        for (m, d) in self.diagnostics.deltas.iter().enumerate() {
            out.push_str(&format!("{},{d:e}\n", m + 1));
        }
        out
    }
}

/// One backed-up `(h, s)` row: Q values and dual diagnostics per action.
struct RowOut {
    q: Vec<f64>,
    lambda: Vec<f64>,
    boundary: Vec<bool>,
    width: f64,
}

/// `r + scale * inf_P P.V - b` for every action of state `s` at step `h`,
/// optionally floored at 0. All-zero kernel rows contribute a robust term of 0.
#[allow(clippy::too_many_arguments)]
fn backup_row(
    kernel: &KernelTable,
    reward: &SaTable,
    penalty: Option<&SaTable>,
    h: usize,
    s: usize,
    next_v: &[f64],
    sigma: f64,
    scale: f64,
    clip: bool,
    tol: f64,
) -> RowOut {
    let actions = kernel.num_actions();
    let mut out = RowOut {
        q: Vec::with_capacity(actions),
        lambda: Vec::with_capacity(actions),
        boundary: Vec::with_capacity(actions),
        width: 0.0,
    };
    for a in 0..actions {
        let row = kernel.row(h, s, a);
        let (robust, lambda, boundary) = if row.iter().all(|&p| p == 0.0) {
            (0.0, 0.0, false)
        } else {
            let bk = robust_backup(row, next_v, sigma, tol);
            out.width = out.width.max(bk.bracket_width);
            (bk.value, bk.lambda_star, bk.at_boundary)
        };
        let mut q = reward.get(h, s, a) + scale * robust - penalty.map_or(0.0, |b| b.get(h, s, a));
        if clip {
            q = q.max(0.0);
        }
        out.q.push(q);
        out.lambda.push(lambda);
        out.boundary.push(boundary);
    }
    out
}

/// `(max, lowest argmax)` of a Q row.
fn greedy(row: &[f64]) -> (f64, usize) {
    let mut best = (row[0], 0);
    for (a, &q) in row.iter().enumerate().skip(1) {
        if q > best.0 {
            best = (q, a);
        }
    }
    best
}

fn check_inputs(kernel: &KernelTable, reward: &SaTable, penalty: Option<&PenaltyTable>, sigma: f64, tol: f64) -> Result<()> {
    if reward.shape() != kernel.shape() {
        return Err(Error::ShapeMismatch(format!(
            "reward {:?} vs kernel {:?}",
            reward.shape(),
            kernel.shape()
        )));
    }
    if let Some(b) = penalty {
        if b.table.shape() != kernel.shape() {
            return Err(Error::ShapeMismatch(format!(
                "penalty {:?} vs kernel {:?}",
                b.table.shape(),
                kernel.shape()
            )));
        }
    }
    if kernel.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("kernel".into()));
    }
    if reward.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("reward".into()));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {sigma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("dual_tol must be positive, got {tol}")));
    }
    Ok(())
}

fn finite_recursion(
    kernel: &KernelTable,
    reward: &SaTable,
    sigma: f64,
    penalty: Option<&PenaltyTable>,
    clip: bool,
    tol: f64,
) -> Result<SolveResult> {
    check_inputs(kernel, reward, penalty, sigma, tol)?;
    let (horizon, states, actions) = kernel.shape();
    let mut q = SaTable::zeros(horizon, states, actions);
    let mut v = StateTable::zeros(horizon + 1, states);
    let mut lambda = SaTable::zeros(horizon, states, actions);
    let mut boundary = vec![false; horizon * states * actions];
    let mut policy = vec![0usize; horizon * states];
    let mut max_width: f64 = 0.0;
    let b = penalty.map(|p| &p.table);

    for h in (0..horizon).rev() {
        let next_v = v.step(h + 1).to_vec();
        let rows: Vec<RowOut> = (0..states)
            .into_par_iter()
            .map(|s| backup_row(kernel, reward, b, h, s, &next_v, sigma, 1.0, clip, tol))
            .collect();
        for (s, row) in rows.into_iter().enumerate() {
            let (best, arg) = greedy(&row.q);
            v.set(h, s, best);
            policy[h * states + s] = arg;
            max_width = max_width.max(row.width);
            for a in 0..actions {
                q.set(h, s, a, row.q[a]);
                lambda.set(h, s, a, row.lambda[a]);
                boundary[(h * states + s) * actions + a] = row.boundary[a];
            }
        }
    }

    Ok(SolveResult {
        q,
        v,
        policy: Policy::deterministic(horizon, states, actions, policy)?,
        iterations: horizon,
        diagnostics: SolveDiagnostics {
            lambda_star: lambda,
            at_boundary: boundary,
            max_bracket_width: max_width,
            deltas: Vec::new(),
        },
    })
}

/// Pessimistic robust value iteration over `H` steps:
/// `Q_h = max{r_h + inf_P P.V_{h+1} - b_h, 0}`, `V_{H+1} = 0`.
///
/// `kernel` is either an empirical frequency kernel (unvisited rows all
/// zero, whose robust term is taken as 0) or an exact kernel.
pub fn drvi_lcb_finite(
    kernel: &KernelTable,
    reward: &SaTable,
    sigma: f64,
    penalty: &PenaltyTable,
    dual_tol: f64,
) -> Result<SolveResult> {
    finite_recursion(kernel, reward, sigma, Some(penalty), true, dual_tol)
}

/// Robust value iteration without penalty or clipping.
pub fn drvi_finite(kernel: &KernelTable, reward: &SaTable, sigma: f64, dual_tol: f64) -> Result<SolveResult> {
    finite_recursion(kernel, reward, sigma, None, false, dual_tol)
}

/// Convenience wrapper taking the kernel out of an [`EmpiricalKernel`].
pub fn drvi_lcb_finite_empirical(
    empirical: &EmpiricalKernel,
    reward: &SaTable,
    sigma: f64,
    penalty: &PenaltyTable,
    dual_tol: f64,
) -> Result<SolveResult> {
    drvi_lcb_finite(empirical.p_hat(), reward, sigma, penalty, dual_tol)
}

/// One discounted sweep, returning the new Q and the row diagnostics.
#[allow(clippy::too_many_arguments)]
fn discounted_sweep(
    q: &SaTable,
    kernel: &KernelTable,
    reward: &SaTable,
    sigma: f64,
    penalty: Option<&SaTable>,
    gamma: f64,
    clip: bool,
    tol: f64,
) -> (SaTable, Vec<RowOut>) {
    let (_, states, actions) = kernel.shape();
    let v: Vec<f64> = (0..states).map(|s| greedy(q.row(0, s)).0).collect();
    let rows: Vec<RowOut> = (0..states)
        .into_par_iter()
        .map(|s| backup_row(kernel, reward, penalty, 0, s, &v, sigma, gamma, clip, tol))
        .collect();
    let mut out = SaTable::zeros(1, states, actions);
    for (s, row) in rows.iter().enumerate() {
        for a in 0..actions {
            out.set(0, s, a, row.q[a]);
        }
    }
    (out, rows)
}

fn check_discounted(q: &SaTable, kernel: &KernelTable, gamma: f64) -> Result<()> {
    check_gamma(gamma)?;
    if kernel.steps() != 1 || q.shape() != kernel.shape() {
        return Err(Error::ShapeMismatch(format!(
            "Q {:?} vs single-step kernel {:?}",
            q.shape(),
            kernel.shape()
        )));
    }
    Ok(())
}

/// One application of the pessimistic robust Bellman operator:
/// `max{r + gamma inf_P P.(max_a Q) - b, 0}`.
pub fn pessimistic_bellman_apply(
    q: &SaTable,
    kernel: &KernelTable,
    reward: &SaTable,
    sigma: f64,
    penalty: &PenaltyTable,
    gamma: f64,
    dual_tol: f64,
) -> Result<SaTable> {
    check_discounted(q, kernel, gamma)?;
    check_inputs(kernel, reward, Some(penalty), sigma, dual_tol)?;
    let upper = 1.0 / (1.0 - gamma) + 1e-9;
    if q.as_slice().iter().any(|&x| !(-1e-9..=upper).contains(&x)) {
        return Err(Error::OutOfRange(format!("Q entries must lie in [0, {}]", 1.0 / (1.0 - gamma))));
    }
    Ok(discounted_sweep(q, kernel, reward, sigma, Some(&penalty.table), gamma, true, dual_tol).0)
}

fn discounted_iteration(
    kernel: &KernelTable,
    reward: &SaTable,
    sigma: f64,
    penalty: Option<&PenaltyTable>,
    gamma: f64,
    iterations: usize,
    clip: bool,
    tol: f64,
) -> Result<SolveResult> {
    let (_, states, actions) = kernel.shape();
    let mut q = SaTable::zeros(1, states, actions);
    check_discounted(&q, kernel, gamma)?;
    check_inputs(kernel, reward, penalty, sigma, tol)?;
    if iterations == 0 {
        return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
    }
    let b = penalty.map(|p| &p.table);
    let mut deltas = Vec::with_capacity(iterations);
    let mut max_width: f64 = 0.0;
    let mut last_rows = Vec::new();
    for _ in 0..iterations {
        let (next, rows) = discounted_sweep(&q, kernel, reward, sigma, b, gamma, clip, tol);
        deltas.push(next.max_abs_diff(&q).expect("same shape"));
        max_width = rows.iter().map(|r| r.width).fold(max_width, f64::max);
        q = next;
        last_rows = rows;
    }
    let mut v = StateTable::zeros(1, states);
    let mut policy = Vec::with_capacity(states);
    let mut lambda = SaTable::zeros(1, states, actions);
    let mut boundary = Vec::with_capacity(states * actions);
    for (s, row) in last_rows.iter().enumerate() {
        let (best, arg) = greedy(q.row(0, s));
        v.set(0, s, best);
        policy.push(arg);
        for a in 0..actions {
            lambda.set(0, s, a, row.lambda[a]);
        }
        boundary.extend_from_slice(&row.boundary);
    }
    Ok(SolveResult {
        q,
        v,
        policy: Policy::deterministic(1, states, actions, policy)?,
        iterations,
        diagnostics: SolveDiagnostics {
            lambda_star: lambda,
            at_boundary: boundary,
            max_bracket_width: max_width,
            deltas,
        },
    })
}

/// `M` iterations of [`pessimistic_bellman_apply`] from `Q_0 = 0`.
pub fn drvi_lcb_infinite(
    kernel: &KernelTable,
    reward: &SaTable,
    sigma: f64,
    penalty: &PenaltyTable,
    gamma: f64,
    iterations: usize,
    dual_tol: f64,
) -> Result<SolveResult> {
    discounted_iteration(kernel, reward, sigma, Some(penalty), gamma, iterations, true, dual_tol)
}

/// `M` iterations of the robust Bellman optimality operator from `Q_0 = 0`.
pub fn drvi_infinite(
    kernel: &KernelTable,
    reward: &SaTable,
    sigma: f64,
    gamma: f64,
    iterations: usize,
    dual_tol: f64,
) -> Result<SolveResult> {
    discounted_iteration(kernel, reward, sigma, None, gamma, iterations, false, dual_tol)
}

/// `ceil(log(sigma N / (1-gamma)) / log(1/gamma))`, at least 1.
pub fn default_iteration_count(sigma: f64, num_samples: u64, gamma: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    let ratio = sigma * num_samples as f64 / (1.0 - gamma);
    if !(ratio > 1.0) {
        return 1;
    }
    ((ratio.ln() / (1.0 / gamma).ln()).ceil() as usize).max(1)
}
