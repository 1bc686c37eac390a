//! Offline data: behavior-policy episodes, i.i.d. transitions, per-pair
//! generative samples, the two-fold subsampling step, and the empirical
//! nominal kernel built from transition counts.

use std::fmt::Write as _;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_distribution, DiscountedRmdp, FiniteHorizonRmdp, KernelTable};
use crate::policy::{sample_index, Policy};
use crate::rng::substream;

/// One trajectory `(s_1, a_1, ..., s_H, a_H, s_{H+1})`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    /// `H + 1` visited states.
    pub states: Vec<usize>,
    /// `H` actions.
    pub actions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeDataset {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub seed: u64,
    pub episodes: Vec<Episode>,
}

impl EpisodeDataset {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    fn check(&self) -> Result<()> {
        for (k, ep) in self.episodes.iter().enumerate() {
            if ep.states.len() != self.horizon + 1 || ep.actions.len() != self.horizon {
                return Err(Error::ShapeMismatch(format!(
                    "episode {k} has {} states and {} actions for horizon {}",
                    ep.states.len(),
                    ep.actions.len(),
                    self.horizon
                )));
            }
            if ep.states.iter().any(|&s| s >= self.num_states)
                || ep.actions.iter().any(|&a| a >= self.num_actions)
            {
                return Err(Error::OutOfRange(format!("episode {k} has an index out of range")));
            }
        }
        Ok(())
    }

    /// Every `(h, s_h, a_h, s_{h+1})` of every episode, in episode order.
    pub fn transitions(&self) -> TransitionDataset {
        let samples = self
            .episodes
            .iter()
            .flat_map(|ep| {
                (0..self.horizon).map(move |h| Transition {
                    step: h,
                    state: ep.states[h],
                    action: ep.actions[h],
                    next_state: ep.states[h + 1],
                })
            })
            .collect();
        TransitionDataset {
            horizon: Some(self.horizon),
            num_states: self.num_states,
            num_actions: self.num_actions,
            seed: self.seed,
            samples,
        }
    }
}

/// A single `(h, s, a, s')` sample; `step` is zero-based and is 0 for
/// discounted data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
}

/// Independent transitions; `horizon` is `None` for discounted data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub horizon: Option<usize>,
    pub num_states: usize,
    pub num_actions: usize,
    pub seed: u64,
    pub samples: Vec<Transition>,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn steps(&self) -> usize {
        self.horizon.unwrap_or(1)
    }

    /// Delimited text: a `#` header with shape, sample count and seed, then one
    /// `h,s,a,s_next` (finite, `h` one-based) or `s,a,s_next` line per sample.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 * self.samples.len() + 64);
        match self.horizon {
            Some(h) => writeln!(
                out,
                "#finite horizon={h} states={} actions={} samples={} seed={}",
                self.num_states,
                self.num_actions,
                self.samples.len(),
                self.seed
            ),
            None => writeln!(
                out,
                "#infinite states={} actions={} samples={} seed={}",
                self.num_states,
                self.num_actions,
                self.samples.len(),
                self.seed
            ),
        }
        .expect("writing to a String");
        for t in &self.samples {
            match self.horizon {
                Some(_) => writeln!(out, "{},{},{},{}", t.step + 1, t.state, t.action, t.next_state),
                None => writeln!(out, "{},{},{}", t.state, t.action, t.next_state),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let header = header.strip_prefix('#').ok_or(Error::Parse {
            line: 1,
            message: "missing '#' header".into(),
        })?;
        let mut words = header.split_whitespace();
        let finite = match words.next() {
            Some("finite") => true,
            Some("infinite") => false,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unknown dataset kind {other:?}"),
                })
            }
        };
        let mut field = |name: &str| -> Result<u64> {
            let pair = words.next().ok_or(Error::Parse {
                line: 1,
                message: format!("missing {name}"),
            })?;
            let value = pair
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix('='))
                .ok_or(Error::Parse {
                    line: 1,
                    message: format!("expected {name}=..., got {pair}"),
                })?;
            value.parse().map_err(|_| Error::Parse {
                line: 1,
                message: format!("bad integer in {pair}"),
            })
        };
        let horizon = if finite { Some(field("horizon")? as usize) } else { None };
        let num_states = field("states")? as usize;
        let num_actions = field("actions")? as usize;
        let count = field("samples")? as usize;
        let seed = field("seed")?;

        let mut samples = Vec::with_capacity(count);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let nums: std::result::Result<Vec<usize>, _> =
                line.split(',').map(|x| x.trim().parse::<usize>()).collect();
            let nums = nums.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let t = match (finite, nums.as_slice()) {
                (true, &[h, s, a, sn]) if h >= 1 => Transition {
                    step: h - 1,
                    state: s,
                    action: a,
                    next_state: sn,
                },
                (false, &[s, a, sn]) => Transition {
                    step: 0,
                    state: s,
                    action: a,
                    next_state: sn,
                },
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("malformed sample '{line}'"),
                    })
                }
            };
            samples.push(t);
        }
        if samples.len() != count {
            return Err(Error::Parse {
                line: 1,
                message: format!("header announces {count} samples, found {}", samples.len()),
            });
        }
        let data = Self {
            horizon,
            num_states,
            num_actions,
            seed,
            samples,
        };
        data.check()?;
        Ok(data)
    }

    fn check(&self) -> Result<()> {
        let steps = self.steps();
        for (i, t) in self.samples.iter().enumerate() {
            if t.step >= steps
                || t.state >= self.num_states
                || t.next_state >= self.num_states
                || t.action >= self.num_actions
            {
                return Err(Error::OutOfRange(format!("sample {i} {t:?} outside shape")));
            }
        }
        Ok(())
    }
}

/// `K` independent episodes of `behavior` started from `rho_b` on the
/// nominal kernel. Episode `k` draws from substream `k` of `seed`.
pub fn generate_episodes(
    mdp: &FiniteHorizonRmdp,
    behavior: &Policy,
    rho_b: &[f64],
    num_episodes: usize,
    seed: u64,
) -> Result<EpisodeDataset> {
    if num_episodes == 0 {
        return Err(Error::InvalidParameter("episode count must be positive".into()));
    }
    let (horizon, states, actions) = mdp.kernel().shape();
    if behavior.shape() != (horizon, states, actions) {
        return Err(Error::ShapeMismatch(format!(
            "behavior policy {:?} vs model {:?}",
            behavior.shape(),
            mdp.kernel().shape()
        )));
    }
    check_distribution(rho_b, states, "rho_b")?;
    let kernel = mdp.kernel();
    let episodes = (0..num_episodes)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            let mut ep = Episode {
                states: Vec::with_capacity(horizon + 1),
                actions: Vec::with_capacity(horizon),
            };
            let mut s = sample_index(rho_b, rng.random());
            ep.states.push(s);
            for h in 0..horizon {
                let a = behavior.sample_with(h, s, rng.random());
                s = sample_index(kernel.row(h, s, a), rng.random());
                ep.actions.push(a);
                ep.states.push(s);
            }
            ep
        })
        .collect();
    Ok(EpisodeDataset {
        horizon,
        num_states: states,
        num_actions: actions,
        seed,
        episodes,
    })
}

/// `N` i.i.d. pairs `(s, a) ~ d_b` (flattened `[s][a]`), each followed by
/// `s' ~ P0(. | s, a)`. Sample `i` draws from substream `i` of `seed`.
pub fn generate_transitions(
    mdp: &DiscountedRmdp,
    d_b: &[f64],
    num_samples: usize,
    seed: u64,
) -> Result<TransitionDataset> {
    if num_samples == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let (states, actions) = (mdp.num_states(), mdp.num_actions());
    check_distribution(d_b, states * actions, "d_b")?;
    let kernel = mdp.kernel();
    let samples = (0..num_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let pair = sample_index(d_b, rng.random());
            let (s, a) = (pair / actions, pair % actions);
            let next_state = sample_index(kernel.row(0, s, a), rng.random());
            Transition {
                step: 0,
                state: s,
                action: a,
                next_state,
            }
        })
        .collect();
    Ok(TransitionDataset {
        horizon: None,
        num_states: states,
        num_actions: actions,
        seed,
        samples,
    })
}

/// Multinomial next-state counts for `n` draws from `row`, via sequential
/// conditional binomials.
fn multinomial_counts(row: &[f64], n: u64, rng: &mut crate::rng::Rng) -> Vec<u64> {
    let mut counts = vec![0; row.len()];
    let mut remaining_n = n;
    let mut remaining_mass: f64 = row.iter().sum();
    let last = row.iter().rposition(|&p| p > 0.0);
    for (i, &p) in row.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if p <= 0.0 {
            continue;
        }
        if Some(i) == last {
            counts[i] = remaining_n;
            break;
        }
        let prob = (p / remaining_mass).clamp(0.0, 1.0);
        let k = Binomial::new(remaining_n, prob)
            .expect("binomial probability in [0, 1]")
            .sample(rng);
        counts[i] = k;
        remaining_n -= k;
        remaining_mass -= p;
    }
    counts
}

/// Next-state counts for `n` draws at every row of `kernel`; row `r` (flat
/// `(h, s, a)` index) uses substream `r` of `seed`.
fn per_pair_counts(kernel: &KernelTable, n: u64, seed: u64) -> Vec<u64> {
    let states = kernel.num_states();
    kernel
        .as_slice()
        .par_chunks(states)
        .enumerate()
        .flat_map_iter(|(r, row)| {
            let mut rng = substream(seed, r as u64);
            multinomial_counts(row, n, &mut rng)
        })
        .collect()
}

/// `n` independent next-state samples for every `(h, s, a)` of the nominal
/// kernel (the generative-model data regime).
///
/// Samples within a row are listed grouped by next state; the draw itself is
/// a multinomial over the row.
pub fn generate_per_pair(kernel: &KernelTable, finite: bool, n: u64, seed: u64) -> Result<TransitionDataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("per-pair sample count must be positive".into()));
    }
    if !finite && kernel.steps() != 1 {
        return Err(Error::ShapeMismatch("discounted kernels have a single step".into()));
    }
    let (steps, states, actions) = kernel.shape();
    let counts = per_pair_counts(kernel, n, seed);
    let mut samples = Vec::with_capacity(counts.iter().sum::<u64>() as usize);
    for h in 0..steps {
        for s in 0..states {
            for a in 0..actions {
                let base = ((h * states + s) * actions + a) * states;
                for next_state in 0..states {
                    for _ in 0..counts[base + next_state] {
                        samples.push(Transition {
                            step: h,
                            state: s,
                            action: a,
                            next_state,
                        });
                    }
                }
            }
        }
    }
    Ok(TransitionDataset {
        horizon: if finite { Some(steps) } else { None },
        num_states: states,
        num_actions: actions,
        seed,
        samples,
    })
}

/// Same draw as [`generate_per_pair`] followed by [`build_empirical_kernel`],
/// without materializing the sample list.
pub fn per_pair_empirical_kernel(kernel: &KernelTable, n: u64, seed: u64) -> Result<EmpiricalKernel> {
    if n == 0 {
        return Err(Error::InvalidParameter("per-pair sample count must be positive".into()));
    }
    let (steps, states, actions) = kernel.shape();
    let next_counts = per_pair_counts(kernel, n, seed);
    Ok(EmpiricalKernel::from_next_counts(steps, states, actions, next_counts))
}

/// `N_trim = max{N_aux - 10 sqrt(N_aux * log_term), 0}`, rounded down to a
/// whole number of transitions.
pub fn trim_count(n_aux: u64, log_term: f64) -> u64 {
    let n = n_aux as f64;
    let x = n - 10.0 * (n * log_term).sqrt();
    if x <= 0.0 {
        0
    } else {
        // Absorb rounding in the square root so that exact integers stay exact.
        (x + 1e-9).floor() as u64
    }
}

/// Natural-log term `log(H S / delta)` of the trim count.
pub fn trim_log_term(horizon: usize, num_states: usize, delta: f64) -> f64 {
    ((horizon * num_states) as f64 / delta).ln()
}

/// Output of [`two_fold_subsample`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwoFoldSplit {
    pub dataset: TransitionDataset,
    /// Number of episodes in the main half.
    pub main_episodes: usize,
    /// Per `(h, s)` (flat `h * S + s`) transition counts.
    pub main_counts: Vec<u64>,
    pub aux_counts: Vec<u64>,
    pub trim_counts: Vec<u64>,
}

/// Two-fold subsampling: the first `ceil(K/2)` episodes form the main half,
/// the rest the auxiliary half. For every `(h, s)`,
/// `min{N_trim_h(s), N_main_h(s)}` main-half transitions out of `(s, h)` are
/// kept, chosen uniformly without replacement (bucket `h * S + s` draws from
/// substream `h * S + s` of `seed`).
pub fn two_fold_subsample(data: &EpisodeDataset, delta: f64, seed: u64) -> Result<TwoFoldSplit> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
    }
    if data.len() < 2 {
        return Err(Error::InvalidParameter("two-fold subsampling needs at least 2 episodes".into()));
    }
    data.check()?;
    let (horizon, states) = (data.horizon, data.num_states);
    let main_episodes = data.len().div_ceil(2);
    let (main, aux) = data.episodes.split_at(main_episodes);

    let mut aux_counts = vec![0u64; horizon * states];
    for ep in aux {
        for h in 0..horizon {
            aux_counts[h * states + ep.states[h]] += 1;
        }
    }
    // main-half transitions bucketed by (h, s), in episode order
    let mut buckets: Vec<Vec<Transition>> = vec![Vec::new(); horizon * states];
    for ep in main {
        for h in 0..horizon {
            buckets[h * states + ep.states[h]].push(Transition {
                step: h,
                state: ep.states[h],
                action: ep.actions[h],
                next_state: ep.states[h + 1],
            });
        }
    }
    let main_counts: Vec<u64> = buckets.iter().map(|b| b.len() as u64).collect();
    let log_term = trim_log_term(horizon, states, delta);
    let trim_counts: Vec<u64> = aux_counts.iter().map(|&n| trim_count(n, log_term)).collect();

    let mut samples = Vec::new();
    for (bucket_id, bucket) in buckets.iter().enumerate() {
        let keep = trim_counts[bucket_id].min(bucket.len() as u64) as usize;
        if keep == 0 {
            continue;
        }
        let mut rng = substream(seed, bucket_id as u64);
        let mut chosen = sample_indices(&mut rng, bucket.len(), keep).into_vec();
        chosen.sort_unstable();
        samples.extend(chosen.into_iter().map(|i| bucket[i]));
    }

    Ok(TwoFoldSplit {
        dataset: TransitionDataset {
            horizon: Some(horizon),
            num_states: states,
            num_actions: data.num_actions,
            seed,
            samples,
        },
        main_episodes,
        main_counts,
        aux_counts,
        trim_counts,
    })
}

/// Visit counts and the frequency estimate of the nominal kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalKernel {
    counts: Vec<u64>,
    next_counts: Vec<u64>,
    p_hat: KernelTable,
    p_min_hat: Vec<Option<f64>>,
    total: u64,
}

impl EmpiricalKernel {
    fn from_next_counts(steps: usize, states: usize, actions: usize, next_counts: Vec<u64>) -> Self {
        debug_assert_eq!(next_counts.len(), steps * states * actions * states);
        let mut counts = Vec::with_capacity(steps * states * actions);
        let mut p_min_hat = Vec::with_capacity(steps * states * actions);
        let mut data = vec![0.0; next_counts.len()];
        for (r, row) in next_counts.chunks(states).enumerate() {
            let n: u64 = row.iter().sum();
            counts.push(n);
            if n == 0 {
                p_min_hat.push(None);
                continue;
            }
            let out = &mut data[r * states..(r + 1) * states];
            let mut min_pos = u64::MAX;
            for (o, &c) in out.iter_mut().zip(row) {
                if c > 0 {
                    *o = c as f64 / n as f64;
                    min_pos = min_pos.min(c);
                }
            }
            p_min_hat.push(Some(min_pos as f64 / n as f64));
        }
        let total = counts.iter().sum();
        Self {
            counts,
            next_counts,
            p_hat: KernelTable::from_vec(steps, states, actions, data).expect("shape computed above"),
            p_min_hat,
            total,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.p_hat.shape()
    }

    fn flat(&self, h: usize, s: usize, a: usize) -> usize {
        let (_, states, actions) = self.shape();
        (h * states + s) * actions + a
    }

    /// `N_h(s, a)`.
    pub fn count(&self, h: usize, s: usize, a: usize) -> u64 {
        self.counts[self.flat(h, s, a)]
    }

    /// `N_h(s, a, s')`.
    pub fn next_count(&self, h: usize, s: usize, a: usize, next: usize) -> u64 {
        self.next_counts[self.flat(h, s, a) * self.p_hat.num_states() + next]
    }

    /// Smallest positive entry of the empirical row; `None` marks an unvisited pair.
    pub fn p_min_hat(&self, h: usize, s: usize, a: usize) -> Option<f64> {
        self.p_min_hat[self.flat(h, s, a)]
    }

    /// The frequency kernel; rows of unvisited pairs are all zero.
    pub fn p_hat(&self) -> &KernelTable {
        &self.p_hat
    }

    /// Total number of transitions behind the estimate.
    pub fn total_samples(&self) -> u64 {
        self.total
    }
}

/// Counts and frequencies from independent transitions. The shape comes from
/// the dataset: `(H, S, A)` for finite data, `(1, S, A)` for discounted data.
pub fn build_empirical_kernel(data: &TransitionDataset) -> Result<EmpiricalKernel> {
    data.check()?;
    let (steps, states, actions) = (data.steps(), data.num_states, data.num_actions);
    let mut next_counts = vec![0u64; steps * states * actions * states];
    for t in &data.samples {
        next_counts[((t.step * states + t.state) * actions + t.action) * states + t.next_state] += 1;
    }
    Ok(EmpiricalKernel::from_next_counts(steps, states, actions, next_counts))
}
