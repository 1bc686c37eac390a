//! Benchmark and fixture models: the gambler's problem and the two-action
//! hard instances whose optimal robust values have closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kl_dual::kl_bernoulli;
use crate::model::{DiscountedRmdp, FiniteHorizonRmdp, KernelTable, SaTable};
use crate::policy::Policy;

/// Parameters of the gambler's problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamblersSpec {
    /// Goal balance (50 in the standard setup).
    pub max_balance: usize,
    pub p_head: f64,
    pub horizon: usize,
    pub sigma: f64,
}

impl GamblersSpec {
    pub fn standard(p_head: f64, sigma: f64) -> Self {
        Self {
            max_balance: 50,
            p_head,
            horizon: 100,
            sigma,
        }
    }

    /// State index of the goal balance.
    pub fn goal_state(&self) -> usize {
        self.max_balance
    }

    /// Absorbing state entered right after the goal; holds no reward.
    pub fn post_goal_state(&self) -> usize {
        self.max_balance + 1
    }

    pub fn num_states(&self) -> usize {
        self.max_balance + 2
    }

    pub fn num_actions(&self) -> usize {
        self.max_balance / 2 + 1
    }

    /// Whether stake `a` is allowed at balance `s`.
    pub fn is_legal(&self, s: usize, a: usize) -> bool {
        s <= self.max_balance && a <= s.min(self.max_balance - s)
    }
}

/// The gambler's problem as an episodic model.
///
/// States are balances `0..=max_balance` plus a post-goal state. A stake `a`
/// at balance `s` moves to `s + a` with probability `p_head` and to `s - a`
/// otherwise; stake 0 and illegal stakes keep the balance. Balance 0 and the
/// post-goal state are absorbing. At the goal every action moves to the
/// post-goal state and earns reward 1, so the reward is collected once per
/// episode and the value of a policy is its probability of reaching the goal
/// within the first `H` steps.
pub fn gamblers_problem(spec: &GamblersSpec) -> Result<FiniteHorizonRmdp> {
    if !(spec.p_head > 0.0 && spec.p_head < 1.0) {
        return Err(Error::InvalidParameter(format!("p_head must lie in (0,1), got {}", spec.p_head)));
    }
    if spec.max_balance < 2 || spec.horizon == 0 {
        return Err(Error::InvalidParameter("need max_balance >= 2 and a positive horizon".into()));
    }
    let (goal, post) = (spec.goal_state(), spec.post_goal_state());
    let (states, actions) = (spec.num_states(), spec.num_actions());
    let kernel = KernelTable::from_rows(spec.horizon, states, actions, |_, s, a, row| {
        if s == goal {
            row[post] = 1.0;
        } else if s == post || s == 0 || a == 0 || !spec.is_legal(s, a) {
            row[s] = 1.0;
        } else {
            row[s + a] = spec.p_head;
            row[s - a] = 1.0 - spec.p_head;
        }
    });
    let reward = SaTable::from_fn(spec.horizon, states, actions, |_, s, _| if s == goal { 1.0 } else { 0.0 });
    FiniteHorizonRmdp::new(kernel, reward, spec.sigma)
}

/// The `x in [0, q]` with `KL(Ber(x) || Ber(q)) = sigma`, by bisection; 0 when
/// even `x = 0` lies inside the ball.
pub fn bernoulli_kl_radius_solve(q: f64, sigma: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("q must lie in (0,1), got {q}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(q);
    }
    if kl_bernoulli(0.0, q) <= sigma {
        return Ok(0.0);
    }
    // kl_bernoulli(., q) decreases on [0, q]
    let (mut lo, mut hi) = (0.0, q);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kl_bernoulli(mid, q) > sigma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Which hard construction to build, with its hidden bit(s).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HardFamily {
    /// Episodic, one good action per step given by `bits[h]`.
    FiniteSmallSigma { bits: Vec<u8> },
    /// Episodic, a single decision at step 1; later steps self-loop.
    FiniteLargeSigma { phi: u8 },
    InfiniteSmallSigma { theta: u8 },
    /// Discounted, states 1 and 2 absorbing; needs at least 3 states.
    InfiniteLargeSigma { phi: u8 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    #[serde(flatten)]
    pub family: HardFamily,
    pub num_states: usize,
    /// Used by the episodic families.
    pub horizon: usize,
    /// Used by the discounted families.
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    /// Concentrability scale: the behavior distribution puts `1/(C S)` on state 0.
    pub c: f64,
    pub sigma: f64,
}

impl HardInstanceSpec {
    pub fn is_finite(&self) -> bool {
        matches!(self.family, HardFamily::FiniteSmallSigma { .. } | HardFamily::FiniteLargeSigma { .. })
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.p > self.q && self.q >= 0.5 && self.p < 1.0) {
            return bad(format!("need 1/2 <= q < p < 1, got p={} q={}", self.p, self.q));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        let min_states = if matches!(self.family, HardFamily::InfiniteLargeSigma { .. }) { 3 } else { 2 };
        if self.num_states < min_states {
            return bad(format!("family needs at least {min_states} states"));
        }
        if !(self.c > 0.0) || 1.0 / (self.c * self.num_states as f64) > 0.25 {
            return bad(format!("need 1/(C S) <= 1/4, got C={} S={}", self.c, self.num_states));
        }
        if self.is_finite() {
            if self.horizon == 0 {
                return bad("horizon must be positive".into());
            }
        } else if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0,1), got {}", self.gamma));
        }
        let bit_ok = |b: u8| b <= 1;
        let ok = match &self.family {
            HardFamily::FiniteSmallSigma { bits } => {
                if bits.len() != self.horizon {
                    return bad(format!("{} bits for horizon {}", bits.len(), self.horizon));
                }
                bits.iter().all(|&b| bit_ok(b))
            }
            HardFamily::FiniteLargeSigma { phi } | HardFamily::InfiniteLargeSigma { phi } => bit_ok(*phi),
            HardFamily::InfiniteSmallSigma { theta } => bit_ok(*theta),
        };
        if !ok {
            return bad("bits must be 0 or 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum HardModel {
    Finite(FiniteHorizonRmdp),
    Discounted(DiscountedRmdp),
}

/// Initial and behavior distributions attached to a hard instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSetup {
    /// Evaluation start: point mass at state 0.
    pub rho: Vec<f64>,
    /// State distribution `mu` of the behavior data.
    pub mu: Vec<f64>,
    /// Episodic families: `rho_b = mu` and the uniform behavior policy.
    pub rho_b: Option<Vec<f64>>,
    pub pi_b: Option<Policy>,
    /// Discounted families: `d_b(s, a) = mu(s) / 2`, flattened `[s][a]`.
    pub d_b: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub model: HardModel,
    pub behavior: BehaviorSetup,
    /// Worst-case masses `p_lower`, `q_lower` on the good transition.
    pub p_lower: f64,
    pub q_lower: f64,
}

/// Row for the decision state 0: mass `m` on `good`, the rest on state 1.
fn decision_row(row: &mut [f64], good: usize, m: f64) {
    row[good] = m;
    row[1] += 1.0 - m;
}

pub fn build_hard_instance(spec: &HardInstanceSpec) -> Result<HardInstance> {
    spec.check()?;
    let (s_n, a_n) = (spec.num_states, 2);
    let (p, q) = (spec.p, spec.q);
    let w = 1.0 / (spec.c * s_n as f64);
    let mut rho = vec![0.0; s_n];
    rho[0] = 1.0;

    let (model, mu) = match &spec.family {
        HardFamily::FiniteSmallSigma { bits } => {
            let kernel = KernelTable::from_rows(spec.horizon, s_n, a_n, |h, s, a, row| match s {
                0 => decision_row(row, 0, if a as u8 == bits[h] { p } else { q }),
                1 => row[1] = 1.0,
                _ => decision_row_other(row, s, q),
            });
            (HardModel::Finite(finite_model(kernel, spec)?), two_point_mu(s_n, w))
        }
        HardFamily::FiniteLargeSigma { phi } => {
            let kernel = KernelTable::from_rows(spec.horizon, s_n, a_n, |h, s, a, row| match (h, s) {
                (0, 0) => decision_row(row, 0, if a as u8 == *phi { p } else { q }),
                (0, 1) => row[1] = 1.0,
                (0, _) => decision_row_other(row, s, q),
                _ => row[s] = 1.0,
            });
            (HardModel::Finite(finite_model(kernel, spec)?), two_point_mu(s_n, w))
        }
        HardFamily::InfiniteSmallSigma { theta } => {
            let kernel = KernelTable::from_rows(1, s_n, a_n, |_, s, a, row| match s {
                0 => decision_row(row, 0, if a as u8 == *theta { p } else { q }),
                _ => decision_row_other(row, s, q),
            });
            (HardModel::Discounted(discounted_model(kernel, spec)?), two_point_mu(s_n, w))
        }
        HardFamily::InfiniteLargeSigma { phi } => {
            let kernel = KernelTable::from_rows(1, s_n, a_n, |_, s, a, row| match s {
                0 => decision_row(row, 2, if a as u8 == *phi { p } else { q }),
                1 | 2 => row[s] = 1.0,
                _ => decision_row_other(row, s, q),
            });
            let mut mu = vec![0.0; s_n];
            mu[0] = w;
            mu[2] = w;
            mu[1] = 1.0 - 2.0 * w;
            (HardModel::Discounted(discounted_model(kernel, spec)?), mu)
        }
    };

    let behavior = if spec.is_finite() {
        BehaviorSetup {
            rho,
            mu: mu.clone(),
            rho_b: Some(mu),
            pi_b: Some(Policy::uniform(spec.horizon, s_n, a_n)),
            d_b: None,
        }
    } else {
        let d_b = mu.iter().flat_map(|&m| [m / 2.0, m / 2.0]).collect();
        BehaviorSetup {
            rho,
            mu,
            rho_b: None,
            pi_b: None,
            d_b: Some(d_b),
        }
    };
    Ok(HardInstance {
        model,
        behavior,
        p_lower: bernoulli_kl_radius_solve(p, spec.sigma)?,
        q_lower: bernoulli_kl_radius_solve(q, spec.sigma)?,
    })
}

/// Non-decision states `s >= 2`: stay with probability `q`, else fall to 1.
fn decision_row_other(row: &mut [f64], s: usize, q: f64) {
    row[s] = q;
    row[1] += 1.0 - q;
}

fn two_point_mu(states: usize, w: f64) -> Vec<f64> {
    let mut mu = vec![0.0; states];
    mu[0] = w;
    mu[1] = 1.0 - w;
    mu
}

fn finite_model(kernel: KernelTable, spec: &HardInstanceSpec) -> Result<FiniteHorizonRmdp> {
    let (h, s, a) = kernel.shape();
    let reward = SaTable::from_fn(h, s, a, |_, s, _| if s == 0 { 1.0 } else { 0.0 });
    FiniteHorizonRmdp::new(kernel, reward, spec.sigma)
}

fn discounted_model(kernel: KernelTable, spec: &HardInstanceSpec) -> Result<DiscountedRmdp> {
    let (h, s, a) = kernel.shape();
    let reward = SaTable::from_fn(h, s, a, |_, s, _| if s == 0 || s == 2 { 1.0 } else { 0.0 });
    DiscountedRmdp::new(kernel, reward, spec.gamma, spec.sigma)
}

/// Optimal robust value at state 0 (step 1 for episodic families).
pub fn hard_instance_closed_form_value(spec: &HardInstanceSpec) -> Result<f64> {
    spec.check()?;
    let pl = bernoulli_kl_radius_solve(spec.p, spec.sigma)?;
    let h = spec.horizon as f64;
    let g = spec.gamma;
    Ok(match spec.family {
        HardFamily::FiniteSmallSigma { .. } => {
            // sum_{j=0}^{H-1} pl^j, summed directly to stay exact at pl = 1
            (0..spec.horizon).rev().fold(0.0, |acc, _| 1.0 + pl * acc)
        }
        HardFamily::FiniteLargeSigma { .. } => 1.0 + pl * (h - 1.0),
        HardFamily::InfiniteSmallSigma { .. } => 1.0 / (1.0 - g * pl),
        HardFamily::InfiniteLargeSigma { .. } => 1.0 + g * pl / (1.0 - g),
    })
}

/// `(p, q)` of the small-radius episodic family: `p = 1 - c1/H`,
/// `q = p - c2 eps / H^2`, with `c1 = 1/8`.
pub fn finite_small_sigma_pq(horizon: usize, eps: f64, c2: f64) -> Result<(f64, f64)> {
    let h = horizon as f64;
    let c1 = 0.125;
    let gap = c2 * eps / (h * h);
    if !(gap > 0.0 && gap <= c1 / (2.0 * h)) {
        return Err(Error::InvalidParameter(format!("need 0 < c2 eps / H^2 <= 1/(16 H), got {gap}")));
    }
    let p = 1.0 - c1 / h;
    Ok((p, p - gap))
}

/// `(p, q)` of the small-radius discounted family:
/// `p = 1 - c1 (1-gamma)`, `q = p - c2 (1-gamma)^2 eps`.
pub fn infinite_small_sigma_pq(gamma: f64, eps: f64, c1: f64, c2: f64) -> Result<(f64, f64)> {
    let t = 1.0 - gamma;
    let gap = c2 * t * t * eps;
    if !(2.0 / 3.0..1.0).contains(&gamma) || !(c1 > 0.0 && c1 <= 0.25) || !(gap > 0.0 && gap <= c1 * t / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "need gamma in [2/3,1), c1 in (0,1/4], 0 < gap <= c1 (1-gamma)/2; got gamma={gamma} c1={c1} gap={gap}"
        )));
    }
    let p = 1.0 - c1 * t;
    Ok((p, p - gap))
}

/// Derived parameters of the large-radius families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeSigmaParams {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub delta: f64,
    /// `log(1 / (alpha + delta)) / 2`.
    pub beta: f64,
}

/// `p = 1 - alpha`, `q = 1 - alpha - delta` with `delta` solving
/// `delta = 128 e^6 sigma eps scale (alpha + delta)`; `scale` is `1/H` for
/// the episodic family and `1 - gamma` for the discounted one.
pub fn large_sigma_params(alpha: f64, sigma: f64, eps: f64, scale: f64) -> Result<LargeSigmaParams> {
    let k = 128.0 * 6f64.exp() * sigma * eps * scale;
    if !(alpha > 0.0 && alpha < 0.5) || !(k > 0.0 && k < 1.0) {
        return Err(Error::InvalidParameter(format!("need alpha in (0,1/2) and 0 < k < 1, got alpha={alpha} k={k}")));
    }
    let delta = k * alpha / (1.0 - k);
    if delta > alpha / 2.0 {
        return Err(Error::InvalidParameter(format!("delta = {delta} exceeds alpha / 2")));
    }
    Ok(LargeSigmaParams {
        p: 1.0 - alpha,
        q: 1.0 - alpha - delta,
        alpha,
        delta,
        beta: 0.5 * (1.0 / (alpha + delta)).ln(),
    })
}
