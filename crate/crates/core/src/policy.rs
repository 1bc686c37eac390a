use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ROW_SUM_TOL;

/// Markov policy indexed by step (a single step for discounted models).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// One action index per `(h, s)`.
    Deterministic {
        steps: usize,
        states: usize,
        actions: usize,
        table: Vec<usize>,
    },
    /// Distribution over actions per `(h, s)`, flattened `[h][s][a]`.
    Stochastic {
        steps: usize,
        states: usize,
        actions: usize,
        probs: Vec<f64>,
    },
}

impl Policy {
    pub fn deterministic(steps: usize, states: usize, actions: usize, table: Vec<usize>) -> Result<Self> {
        let p = Policy::Deterministic {
            steps,
            states,
            actions,
            table,
        };
        p.check()?;
        Ok(p)
    }

    pub fn stochastic(steps: usize, states: usize, actions: usize, probs: Vec<f64>) -> Result<Self> {
        let p = Policy::Stochastic {
            steps,
            states,
            actions,
            probs,
        };
        p.check()?;
        Ok(p)
    }

    /// Uniform over all actions at every `(h, s)`.
    pub fn uniform(steps: usize, states: usize, actions: usize) -> Self {
        Policy::Stochastic {
            steps,
            states,
            actions,
            probs: vec![1.0 / actions as f64; steps * states * actions],
        }
    }

    /// Same action at every `(h, s)`.
    pub fn constant(steps: usize, states: usize, actions: usize, action: usize) -> Result<Self> {
        Self::deterministic(steps, states, actions, vec![action; steps * states])
    }

    fn check(&self) -> Result<()> {
        match self {
            Policy::Deterministic {
                steps,
                states,
                actions,
                table,
            } => {
                if table.len() != steps * states {
                    return Err(Error::ShapeMismatch(format!(
                        "deterministic policy needs {} entries, got {}",
                        steps * states,
                        table.len()
                    )));
                }
                if let Some(i) = table.iter().position(|&a| a >= *actions) {
                    return Err(Error::OutOfRange(format!(
                        "action {} at flat index {i} exceeds {actions} actions",
                        table[i]
                    )));
                }
            }
            Policy::Stochastic {
                steps,
                states,
                actions,
                probs,
            } => {
                if probs.len() != steps * states * actions {
                    return Err(Error::ShapeMismatch(format!(
                        "stochastic policy needs {} entries, got {}",
                        steps * states * actions,
                        probs.len()
                    )));
                }
                for (i, row) in probs.chunks(*actions).enumerate() {
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
                        return Err(Error::OutOfRange(format!(
                            "policy row (h={}, s={}) is not a distribution (sum {sum})",
                            i / states,
                            i % states
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        match self {
            Policy::Deterministic { steps, .. } | Policy::Stochastic { steps, .. } => *steps,
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            Policy::Deterministic { states, .. } | Policy::Stochastic { states, .. } => *states,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Policy::Deterministic { actions, .. } | Policy::Stochastic { actions, .. } => *actions,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.steps(), self.num_states(), self.num_actions())
    }

    /// `pi_h(a | s)`.
    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        match self {
            Policy::Deterministic { states, table, .. } => {
                if table[h * states + s] == a {
                    1.0
                } else {
                    0.0
                }
            }
            Policy::Stochastic {
                states,
                actions,
                probs,
                ..
            } => probs[(h * states + s) * actions + a],
        }
    }

    /// The chosen action for deterministic policies.
    pub fn action(&self, h: usize, s: usize) -> Option<usize> {
        match self {
            Policy::Deterministic { states, table, .. } => Some(table[h * states + s]),
            Policy::Stochastic { .. } => None,
        }
    }

    /// Expectation of `q_row` (one entry per action) under `pi_h(. | s)`.
    pub fn expect(&self, h: usize, s: usize, q_row: &[f64]) -> f64 {
        match self {
            Policy::Deterministic { states, table, .. } => q_row[table[h * states + s]],
            Policy::Stochastic {
                states,
                actions,
                probs,
                ..
            } => {
                let start = (h * states + s) * actions;
                probs[start..start + actions]
                    .iter()
                    .zip(q_row)
                    .map(|(p, q)| p * q)
                    .sum()
            }
        }
    }

    /// Samples an action at `(h, s)` given a uniform draw `u` in `[0, 1)`.
    pub fn sample_with(&self, h: usize, s: usize, u: f64) -> usize {
        match self {
            Policy::Deterministic { states, table, .. } => table[h * states + s],
            Policy::Stochastic {
                states,
                actions,
                probs,
                ..
            } => {
                let start = (h * states + s) * actions;
                sample_index(&probs[start..start + actions], u)
            }
        }
    }

    pub fn to_stochastic(&self) -> Policy {
        match self {
            Policy::Stochastic { .. } => self.clone(),
            Policy::Deterministic {
                steps,
                states,
                actions,
                ..
            } => {
                let mut probs = vec![0.0; steps * states * actions];
                for h in 0..*steps {
                    for s in 0..*states {
                        let a = self.action(h, s).unwrap_or(0);
                        probs[(h * states + s) * actions + a] = 1.0;
                    }
                }
                Policy::Stochastic {
                    steps: *steps,
                    states: *states,
                    actions: *actions,
                    probs,
                }
            }
        }
    }

    /// Applies an action relabeling `perm[old] = new`.
    pub fn permute_actions(&self, perm: &[usize]) -> Policy {
        match self {
            Policy::Deterministic {
                steps,
                states,
                actions,
                table,
            } => Policy::Deterministic {
                steps: *steps,
                states: *states,
                actions: *actions,
                table: table.iter().map(|&a| perm[a]).collect(),
            },
            Policy::Stochastic {
                steps,
                states,
                actions,
                probs,
            } => {
                let mut out = vec![0.0; probs.len()];
                for (i, row) in probs.chunks(*actions).enumerate() {
                    for (a, &p) in row.iter().enumerate() {
                        out[i * actions + perm[a]] = p;
                    }
                }
                Policy::Stochastic {
                    steps: *steps,
                    states: *states,
                    actions: *actions,
                    probs: out,
                }
            }
        }
    }
}

/// Inverse-CDF draw from a (possibly slightly unnormalized) distribution.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}
