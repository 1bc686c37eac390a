//! State-action occupancy measures and the clipped concentrability diagnostic.

use crate::error::{Error, Result};
use crate::model::{check_distribution, DiscountedRmdp, FiniteHorizonRmdp, KernelTable, SaTable};
use crate::policy::Policy;

/// Occupancy distribution `d_h(s, a)` (finite horizon, one slice per step)
/// or the normalized discounted occupancy `d(s, a)` (single slice).
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyTable {
    table: SaTable,
}

impl OccupancyTable {
    pub fn from_table(table: SaTable) -> Result<Self> {
        if table.as_slice().iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(Error::OutOfRange("occupancy entries must be nonnegative".into()));
        }
        Ok(Self { table })
    }

    /// Uniform `1 / (S A)` at every step.
    pub fn uniform(steps: usize, states: usize, actions: usize) -> Self {
        Self {
            table: SaTable::filled(steps, states, actions, 1.0 / (states * actions) as f64),
        }
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.table.get(h, s, a)
    }

    pub fn table(&self) -> &SaTable {
        &self.table
    }

    pub fn steps(&self) -> usize {
        self.table.steps()
    }

    /// `d_h(s) = sum_a d_h(s, a)`.
    pub fn state_marginal(&self, h: usize) -> Vec<f64> {
        (0..self.table.num_states())
            .map(|s| self.table.row(h, s).iter().sum())
            .collect()
    }

    pub fn step_mass(&self, h: usize) -> f64 {
        (0..self.table.num_states())
            .map(|s| self.table.row(h, s).iter().sum::<f64>())
            .sum()
    }
}

fn check_policy_shape(policy: &Policy, steps: usize, states: usize, actions: usize) -> Result<()> {
    if policy.shape() != (steps, states, actions) {
        return Err(Error::ShapeMismatch(format!(
            "policy shape {:?} vs model ({steps}, {states}, {actions})",
            policy.shape()
        )));
    }
    Ok(())
}

/// Exact forward propagation of `rho` through `kernel` under `policy`:
/// `d_1(s, a) = rho(s) pi_1(a|s)`, `d_{h+1}(s') = sum_{s,a} d_h(s,a) P_h(s'|s,a)`.
///
/// `kernel` may be any member of the uncertainty set; `mdp` only fixes the shape.
pub fn occupancy_finite(
    mdp: &FiniteHorizonRmdp,
    kernel: &KernelTable,
    policy: &Policy,
    rho: &[f64],
) -> Result<OccupancyTable> {
    let (steps, states, actions) = mdp.kernel().shape();
    if kernel.shape() != (steps, states, actions) {
        return Err(Error::ShapeMismatch(format!(
            "kernel {:?} vs model {:?}",
            kernel.shape(),
            mdp.kernel().shape()
        )));
    }
    check_policy_shape(policy, steps, states, actions)?;
    check_distribution(rho, states, "initial distribution")?;

    let mut d = SaTable::zeros(steps, states, actions);
    let mut state_dist = rho.to_vec();
    for h in 0..steps {
        let mut next = vec![0.0; states];
        for (s, &mass) in state_dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for a in 0..actions {
                let sa = mass * policy.prob(h, s, a);
                if sa == 0.0 {
                    continue;
                }
                d.set(h, s, a, sa);
                for (sn, &p) in kernel.row(h, s, a).iter().enumerate() {
                    next[sn] += sa * p;
                }
            }
        }
        state_dist = next;
    }
    Ok(OccupancyTable { table: d })
}

/// Normalized discounted occupancy `(1 - gamma) sum_t gamma^t Pr(s_t = s, a_t = a)`,
/// truncated once the remaining tail mass `gamma^t` drops below `tol`.
pub fn occupancy_discounted(
    mdp: &DiscountedRmdp,
    kernel: &KernelTable,
    policy: &Policy,
    rho: &[f64],
    tol: f64,
) -> Result<OccupancyTable> {
    let (steps, states, actions) = mdp.kernel().shape();
    if kernel.shape() != (steps, states, actions) {
        return Err(Error::ShapeMismatch(format!(
            "kernel {:?} vs model {:?}",
            kernel.shape(),
            mdp.kernel().shape()
        )));
    }
    check_policy_shape(policy, 1, states, actions)?;
    check_distribution(rho, states, "initial distribution")?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }

    let gamma = mdp.gamma();
    let mut d = SaTable::zeros(1, states, actions);
    let mut state_dist = rho.to_vec();
    let mut weight = 1.0 - gamma;
    let mut tail = 1.0;
    while tail >= tol {
        let mut next = vec![0.0; states];
        for (s, &mass) in state_dist.iter().enumerate() {
            for a in 0..actions {
                let sa = mass * policy.prob(0, s, a);
                if sa == 0.0 {
                    continue;
                }
                d.set(0, s, a, d.get(0, s, a) + weight * sa);
                for (sn, &p) in kernel.row(0, s, a).iter().enumerate() {
                    next[sn] += sa * p;
                }
            }
        }
        state_dist = next;
        weight *= gamma;
        tail *= gamma;
        if gamma == 0.0 {
            break;
        }
    }
    // Put the truncated tail on the last propagated state distribution.
    if tail > 0.0 && gamma > 0.0 {
        for (s, &mass) in state_dist.iter().enumerate() {
            for a in 0..actions {
                let sa = mass * policy.prob(0, s, a);
                d.set(0, s, a, d.get(0, s, a) + tail * sa);
            }
        }
    }
    Ok(OccupancyTable { table: d })
}

/// `max over tables and (h, s, a) of min{d*(s,a), 1/S} / d_b(s,a)`, with `0/0 = 0`
/// and `+inf` wherever a positive numerator meets a zero denominator.
///
/// Only the supplied optimal-policy occupancies are searched; the caller picks
/// which kernels of the uncertainty set to enumerate.
pub fn clipped_concentrability(
    d_star_list: &[OccupancyTable],
    d_b: &OccupancyTable,
    num_states: usize,
) -> Result<f64> {
    if num_states == 0 {
        return Err(Error::InvalidParameter("num_states must be positive".into()));
    }
    let clip = 1.0 / num_states as f64;
    let mut worst: f64 = 0.0;
    for d_star in d_star_list {
        if d_star.table.shape() != d_b.table.shape() {
            return Err(Error::ShapeMismatch(format!(
                "occupancy {:?} vs behavior {:?}",
                d_star.table.shape(),
                d_b.table.shape()
            )));
        }
        for (&num, &den) in d_star.table.as_slice().iter().zip(d_b.table.as_slice()) {
            let num = num.min(clip);
            let ratio = if num == 0.0 {
                0.0
            } else if den == 0.0 {
                f64::INFINITY
            } else {
                num / den
            };
            worst = worst.max(ratio);
        }
    }
    Ok(worst)
}
