#![allow(dead_code)]

use drorl::{DiscountedRmdp, FiniteHorizonRmdp, KernelTable, SaTable};
pub mod primal;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random distribution over `n` entries; each entry is zeroed with
/// probability `sparsity`, keeping at least one positive entry.
pub fn random_dist(rng: &mut impl Rng, n: usize, sparsity: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random::<f64>() + 1e-3 })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.random_range(0..n)] = 1.0;
    }
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    v
}

pub fn random_kernel(rng: &mut impl Rng, steps: usize, states: usize, actions: usize, sparsity: f64) -> KernelTable {
    KernelTable::from_rows(steps, states, actions, |_, _, _, row| {
        row.copy_from_slice(&random_dist(rng, states, sparsity));
    })
}

pub fn random_reward(rng: &mut impl Rng, steps: usize, states: usize, actions: usize) -> SaTable {
    SaTable::from_fn(steps, states, actions, |_, _, _| rng.random::<f64>())
}

pub fn random_finite(rng: &mut impl Rng, h: usize, s: usize, a: usize, sigma: f64) -> FiniteHorizonRmdp {
    let k = random_kernel(rng, h, s, a, 0.3);
    let r = random_reward(rng, h, s, a);
    FiniteHorizonRmdp::new(k, r, sigma).unwrap()
}

pub fn random_discounted(rng: &mut impl Rng, s: usize, a: usize, gamma: f64, sigma: f64) -> DiscountedRmdp {
    let k = random_kernel(rng, 1, s, a, 0.3);
    let r = random_reward(rng, 1, s, a);
    DiscountedRmdp::new(k, r, gamma, sigma).unwrap()
}

/// Classical (non-robust) optimal values `V_h(s)`, `h = 0..=H`.
pub fn classical_vi(kernel: &KernelTable, reward: &SaTable) -> Vec<Vec<f64>> {
    let (h_n, s_n, a_n) = kernel.shape();
    let mut v = vec![vec![0.0; s_n]; h_n + 1];
    for h in (0..h_n).rev() {
        for s in 0..s_n {
            v[h][s] = (0..a_n)
                .map(|a| reward.get(h, s, a) + kernel.row(h, s, a).iter().zip(&v[h + 1]).map(|(p, x)| p * x).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    v
}

/// Every deterministic Markov policy table for the given shape.
pub fn all_deterministic(steps: usize, states: usize, actions: usize) -> Vec<Vec<usize>> {
    let n = steps * states;
    let total = actions.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let a = code % actions;
                    code /= actions;
                    a
                })
                .collect()
        })
        .collect()
}
