//! Tabular model types shared by every other module.
//!
//! Finite-horizon objects are indexed by a zero-based step `h` in `0..H`;
//! discounted objects use a single step (`steps == 1`). All tables are dense
//! and stored row-major.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums of transition kernels.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Real-valued table indexed `[step][state][action]`.
///
/// Used for rewards, Q-functions, penalties and occupancy measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaTable {
    steps: usize,
    states: usize,
    actions: usize,
    data: Vec<f64>,
}

impl SaTable {
    pub fn zeros(steps: usize, states: usize, actions: usize) -> Self {
        Self::filled(steps, states, actions, 0.0)
    }

    pub fn filled(steps: usize, states: usize, actions: usize, value: f64) -> Self {
        Self {
            steps,
            states,
            actions,
            data: vec![value; steps * states * actions],
        }
    }

    pub fn from_vec(steps: usize, states: usize, actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != steps * states * actions {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{}x{} = {} entries, got {}",
                steps,
                states,
                actions,
                steps * states * actions,
                data.len()
            )));
        }
        Ok(Self {
            steps,
            states,
            actions,
            data,
        })
    }

    /// Builds a table by evaluating `f(h, s, a)` at every index.
    pub fn from_fn(
        steps: usize,
        states: usize,
        actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(steps * states * actions);
        for h in 0..steps {
            for s in 0..states {
                for a in 0..actions {
                    data.push(f(h, s, a));
                }
            }
        }
        Self {
            steps,
            states,
            actions,
            data,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.steps, self.states, self.actions)
    }

    #[inline]
    fn index(&self, h: usize, s: usize, a: usize) -> usize {
        debug_assert!(h < self.steps && s < self.states && a < self.actions);
        (h * self.states + s) * self.actions + a
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.data[self.index(h, s, a)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, s: usize, a: usize, value: f64) {
        let i = self.index(h, s, a);
        self.data[i] = value;
    }

    /// All action entries for `(h, s)`.
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = self.index(h, s, 0);
        &self.data[start..start + self.actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Sup-norm distance; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &SaTable) -> Option<f64> {
        if self.shape() != other.shape() {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// Real-valued table indexed `[step][state]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateTable {
    steps: usize,
    states: usize,
    data: Vec<f64>,
}

impl StateTable {
    pub fn zeros(steps: usize, states: usize) -> Self {
        Self {
            steps,
            states,
            data: vec![0.0; steps * states],
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize) -> f64 {
        self.data[h * self.states + s]
    }

    #[inline]
    pub fn set(&mut self, h: usize, s: usize, value: f64) {
        self.data[h * self.states + s] = value;
    }

    pub fn step(&self, h: usize) -> &[f64] {
        &self.data[h * self.states..(h + 1) * self.states]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `<rho, V_h>`.
    pub fn dot_step(&self, h: usize, rho: &[f64]) -> f64 {
        self.step(h).iter().zip(rho).map(|(v, p)| v * p).sum()
    }
}

/// Transition probabilities indexed `[step][state][action][next_state]`.
///
/// Rows are not required to be stochastic here: empirical kernels carry
/// all-zero rows for unvisited pairs. Model constructors enforce
/// stochasticity separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    steps: usize,
    states: usize,
    actions: usize,
    data: Vec<f64>,
}

impl KernelTable {
    pub fn zeros(steps: usize, states: usize, actions: usize) -> Self {
        Self {
            steps,
            states,
            actions,
            data: vec![0.0; steps * states * actions * states],
        }
    }

    pub fn from_vec(steps: usize, states: usize, actions: usize, data: Vec<f64>) -> Result<Self> {
        let expected = steps * states * actions * states;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "kernel {steps}x{states}x{actions}x{states} needs {expected} entries, got {}",
                data.len()
            )));
        }
        Ok(Self {
            steps,
            states,
            actions,
            data,
        })
    }

    /// Builds a kernel from a row generator `f(h, s, a, row)`; `row` starts zeroed.
    pub fn from_rows(
        steps: usize,
        states: usize,
        actions: usize,
        mut f: impl FnMut(usize, usize, usize, &mut [f64]),
    ) -> Self {
        let mut k = Self::zeros(steps, states, actions);
        for h in 0..steps {
            for s in 0..states {
                for a in 0..actions {
                    f(h, s, a, k.row_mut(h, s, a));
                }
            }
        }
        k
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    /// `(steps, states, actions)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.steps, self.states, self.actions)
    }

    #[inline]
    fn row_start(&self, h: usize, s: usize, a: usize) -> usize {
        debug_assert!(h < self.steps && s < self.states && a < self.actions);
        ((h * self.states + s) * self.actions + a) * self.states
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.row_start(h, s, a);
        &self.data[start..start + self.states]
    }

    #[inline]
    pub fn row_mut(&mut self, h: usize, s: usize, a: usize) -> &mut [f64] {
        let start = self.row_start(h, s, a);
        let n = self.states;
        &mut self.data[start..start + n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rescales every nonzero row to sum to one. Only ever called explicitly.
    pub fn renormalize_rows(&mut self) {
        for row in self.data.chunks_mut(self.states.max(1)) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
    }

    fn stochastic_violations(&self, out: &mut Vec<Violation>) {
        for h in 0..self.steps {
            for s in 0..self.states {
                for a in 0..self.actions {
                    let row = self.row(h, s, a);
                    for (next, &p) in row.iter().enumerate() {
                        if p < 0.0 || !p.is_finite() {
                            out.push(Violation::NegativeEntry {
                                step: h,
                                state: s,
                                action: a,
                                next_state: next,
                                value: p,
                            });
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                        out.push(Violation::RowSum {
                            step: h,
                            state: s,
                            action: a,
                            sum,
                        });
                    }
                }
            }
        }
    }
}

/// One broken invariant found by `validate`.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    RowSum {
        step: usize,
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeEntry {
        step: usize,
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },
    RewardRange {
        step: usize,
        state: usize,
        action: usize,
        value: f64,
    },
    Sigma(f64),
    Gamma(f64),
    Shape(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum {
                step,
                state,
                action,
                sum,
            } => write!(
                f,
                "kernel row (h={step}, s={state}, a={action}) sums to {sum} (off by {:e})",
                sum - 1.0
            ),
            Violation::NegativeEntry {
                step,
                state,
                action,
                next_state,
                value,
            } => write!(
                f,
                "kernel entry (h={step}, s={state}, a={action}, s'={next_state}) = {value}"
            ),
            Violation::RewardRange {
                step,
                state,
                action,
                value,
            } => write!(f, "reward (h={step}, s={state}, a={action}) = {value} outside [0,1]"),
            Violation::Sigma(v) => write!(f, "sigma = {v} is negative or non-finite"),
            Violation::Gamma(v) => write!(f, "gamma = {v} outside [0,1)"),
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
        }
    }
}

fn reward_violations(reward: &SaTable, out: &mut Vec<Violation>) {
    for h in 0..reward.steps() {
        for s in 0..reward.num_states() {
            for a in 0..reward.num_actions() {
                let r = reward.get(h, s, a);
                if !(0.0..=1.0).contains(&r) {
                    out.push(Violation::RewardRange {
                        step: h,
                        state: s,
                        action: a,
                        value: r,
                    });
                }
            }
        }
    }
}

fn sigma_violations(sigma: f64, out: &mut Vec<Violation>) {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        out.push(Violation::Sigma(sigma));
    }
}

/// Episodic robust MDP: nominal kernel `P_h`, rewards `r_h` and KL radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "FiniteModelFile", try_from = "FiniteModelFile")]
pub struct FiniteHorizonRmdp {
    kernel: KernelTable,
    reward: SaTable,
    sigma: f64,
}

impl FiniteHorizonRmdp {
    /// Validated constructor.
    pub fn new(kernel: KernelTable, reward: SaTable, sigma: f64) -> Result<Self> {
        let m = Self::new_unchecked(kernel, reward, sigma);
        let violations = m.validate();
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    /// Skips validation; for inspecting broken inputs with [`Self::validate`].
    pub fn new_unchecked(kernel: KernelTable, reward: SaTable, sigma: f64) -> Self {
        Self {
            kernel,
            reward,
            sigma,
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.kernel.shape() != self.reward.shape() {
            out.push(Violation::Shape(format!(
                "kernel {:?} vs reward {:?}",
                self.kernel.shape(),
                self.reward.shape()
            )));
            return out;
        }
        self.kernel.stochastic_violations(&mut out);
        reward_violations(&self.reward, &mut out);
        sigma_violations(self.sigma, &mut out);
        out
    }

    pub fn num_states(&self) -> usize {
        self.kernel.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.kernel.num_actions()
    }

    pub fn horizon(&self) -> usize {
        self.kernel.steps()
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    pub fn reward(&self) -> &SaTable {
        &self.reward
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Same nominal model with a different radius.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.kernel.clone(), self.reward.clone(), sigma)
    }
}

/// Discounted infinite-horizon robust MDP with a stationary kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "DiscountedModelFile", try_from = "DiscountedModelFile")]
pub struct DiscountedRmdp {
    kernel: KernelTable,
    reward: SaTable,
    gamma: f64,
    sigma: f64,
}

impl DiscountedRmdp {
    pub fn new(kernel: KernelTable, reward: SaTable, gamma: f64, sigma: f64) -> Result<Self> {
        let m = Self::new_unchecked(kernel, reward, gamma, sigma);
        let violations = m.validate();
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    pub fn new_unchecked(kernel: KernelTable, reward: SaTable, gamma: f64, sigma: f64) -> Self {
        Self {
            kernel,
            reward,
            gamma,
            sigma,
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.kernel.steps() != 1 || self.kernel.shape() != self.reward.shape() {
            out.push(Violation::Shape(format!(
                "discounted model needs one step; kernel {:?}, reward {:?}",
                self.kernel.shape(),
                self.reward.shape()
            )));
            return out;
        }
        self.kernel.stochastic_violations(&mut out);
        reward_violations(&self.reward, &mut out);
        sigma_violations(self.sigma, &mut out);
        if !(0.0..1.0).contains(&self.gamma) {
            out.push(Violation::Gamma(self.gamma));
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.kernel.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.kernel.num_actions()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    pub fn reward(&self) -> &SaTable {
        &self.reward
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.kernel.clone(), self.reward.clone(), self.gamma, sigma)
    }
}

/// On-disk form of [`FiniteHorizonRmdp`]: dense row-major arrays under
/// documented field names.
#[derive(Serialize, Deserialize)]
struct FiniteModelFile {
    states: usize,
    actions: usize,
    horizon: usize,
    sigma: f64,
    kernel: Vec<f64>,
    reward: Vec<f64>,
}

impl From<FiniteHorizonRmdp> for FiniteModelFile {
    fn from(m: FiniteHorizonRmdp) -> Self {
        Self {
            states: m.num_states(),
            actions: m.num_actions(),
            horizon: m.horizon(),
            sigma: m.sigma,
            kernel: m.kernel.data,
            reward: m.reward.data,
        }
    }
}

impl TryFrom<FiniteModelFile> for FiniteHorizonRmdp {
    type Error = Error;

    fn try_from(f: FiniteModelFile) -> Result<Self> {
        let kernel = KernelTable::from_vec(f.horizon, f.states, f.actions, f.kernel)?;
        let reward = SaTable::from_vec(f.horizon, f.states, f.actions, f.reward)?;
        Self::new(kernel, reward, f.sigma)
    }
}

#[derive(Serialize, Deserialize)]
struct DiscountedModelFile {
    states: usize,
    actions: usize,
    gamma: f64,
    sigma: f64,
    kernel: Vec<f64>,
    reward: Vec<f64>,
}

impl From<DiscountedRmdp> for DiscountedModelFile {
    fn from(m: DiscountedRmdp) -> Self {
        Self {
            states: m.num_states(),
            actions: m.num_actions(),
            gamma: m.gamma,
            sigma: m.sigma,
            kernel: m.kernel.data,
            reward: m.reward.data,
        }
    }
}

impl TryFrom<DiscountedModelFile> for DiscountedRmdp {
    type Error = Error;

    fn try_from(f: DiscountedModelFile) -> Result<Self> {
        let kernel = KernelTable::from_vec(1, f.states, f.actions, f.kernel)?;
        let reward = SaTable::from_vec(1, f.states, f.actions, f.reward)?;
        Self::new(kernel, reward, f.gamma, f.sigma)
    }
}

/// Checks that `rho` is a distribution over `states` entries.
pub(crate) fn check_distribution(rho: &[f64], states: usize, what: &str) -> Result<()> {
    if rho.len() != states {
        return Err(Error::ShapeMismatch(format!(
            "{what} has {} entries, expected {states}",
            rho.len()
        )));
    }
    if rho.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::OutOfRange(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = rho.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::OutOfRange(format!("{what} sums to {sum}")));
    }
    Ok(())
}
