use std::time::Instant;

use anyhow::{bail, Context, Result};
use drorl::dataset::{
    build_empirical_kernel, generate_episodes, generate_transitions, per_pair_empirical_kernel, two_fold_subsample,
    EmpiricalKernel,
};
use drorl::evaluation::{
    gap_against, monte_carlo_win_rate, robust_policy_eval_infinite, robust_value_optimal_finite,
    robust_value_optimal_infinite,
};
use drorl::instances::{build_hard_instance, gamblers_problem, GamblersSpec, HardModel};
use drorl::rng::{derive_seed, substream};
use drorl::solvers::{
    default_iteration_count, drvi_finite, drvi_infinite, drvi_lcb_finite, drvi_lcb_infinite, penalty_finite,
    penalty_infinite, PenaltyTable, SolveResult,
};
use drorl::{DiscountedRmdp, FiniteHorizonRmdp, KernelTable, Policy, SaTable, StateTable};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, DataMode, ExperimentConfig, InstanceConfig};

const SPLIT_SALT: u64 = 0x5EED_0001;
const ROLLOUT_SALT: u64 = 0x5EED_0002;

/// One output line. Field names double as the CSV header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance: String,
    pub algorithm: String,
    pub sigma: f64,
    pub sample_size: u64,
    pub seed: u64,
    pub gap: f64,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub win_rate: Option<f64>,
    pub eval_param: Option<f64>,
}

/// A model built for one radius, with its start and behavior distributions.
pub enum BuiltInstance {
    Finite {
        model: FiniteHorizonRmdp,
        rho: Vec<f64>,
        rho_b: Vec<f64>,
        pi_b: Policy,
        /// Gambler goal state, for win rates.
        goal: Option<usize>,
    },
    Discounted {
        model: DiscountedRmdp,
        rho: Vec<f64>,
        d_b: Vec<f64>,
    },
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Uniform over the interior balances `1..max_balance`.
pub fn gambler_start(spec: &GamblersSpec) -> Vec<f64> {
    let interior = spec.max_balance - 1;
    (0..spec.num_states())
        .map(|s| if (1..spec.max_balance).contains(&s) { 1.0 / interior as f64 } else { 0.0 })
        .collect()
}

fn random_tables(states: usize, actions: usize, steps: usize, seed: u64) -> (KernelTable, SaTable) {
    let mut rng = substream(seed, 0);
    let kernel = KernelTable::from_rows(steps, states, actions, |_, _, _, row| {
        for x in row.iter_mut() {
            *x = rng.random::<f64>() + 1e-3;
        }
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= z);
    });
    let reward = SaTable::from_fn(steps, states, actions, |_, _, _| rng.random::<f64>());
    (kernel, reward)
}

pub fn build_instance(instance: &InstanceConfig, sigma: f64) -> Result<BuiltInstance> {
    Ok(match instance {
        InstanceConfig::Gambler {
            p_head,
            max_balance,
            horizon,
        } => {
            let spec = GamblersSpec {
                max_balance: *max_balance,
                p_head: *p_head,
                horizon: *horizon,
                sigma,
            };
            let model = gamblers_problem(&spec)?;
            let rho = gambler_start(&spec);
            BuiltInstance::Finite {
                pi_b: Policy::uniform(spec.horizon, spec.num_states(), spec.num_actions()),
                rho_b: rho.clone(),
                rho,
                model,
                goal: Some(spec.goal_state()),
            }
        }
        InstanceConfig::Hard { spec } => {
            let mut spec = spec.clone();
            spec.sigma = sigma;
            let inst = build_hard_instance(&spec)?;
            let b = inst.behavior;
            match inst.model {
                HardModel::Finite(model) => BuiltInstance::Finite {
                    rho_b: b.rho_b.context("episodic hard instance without rho_b")?,
                    pi_b: b.pi_b.context("episodic hard instance without a behavior policy")?,
                    rho: b.rho,
                    model,
                    goal: None,
                },
                HardModel::Discounted(model) => BuiltInstance::Discounted {
                    d_b: b.d_b.context("discounted hard instance without d_b")?,
                    rho: b.rho,
                    model,
                },
            }
        }
        InstanceConfig::Random {
            states,
            actions,
            horizon,
            gamma,
            seed,
        } => match (horizon, gamma) {
            (Some(h), _) => {
                let (k, r) = random_tables(*states, *actions, *h, *seed);
                BuiltInstance::Finite {
                    model: FiniteHorizonRmdp::new(k, r, sigma)?,
                    rho: uniform(*states),
                    rho_b: uniform(*states),
                    pi_b: Policy::uniform(*h, *states, *actions),
                    goal: None,
                }
            }
            (None, Some(g)) => {
                let (k, r) = random_tables(*states, *actions, 1, *seed);
                BuiltInstance::Discounted {
                    model: DiscountedRmdp::new(k, r, *g, sigma)?,
                    rho: uniform(*states),
                    d_b: uniform(states * actions),
                }
            }
            (None, None) => bail!("random instance needs a horizon or a discount factor"),
        },
        InstanceConfig::ModelFile { path, finite } => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            if *finite {
                let m: FiniteHorizonRmdp = serde_json::from_str(&text)?;
                let m = m.with_sigma(sigma)?;
                let (h, s, a) = m.kernel().shape();
                BuiltInstance::Finite {
                    model: m,
                    rho: uniform(s),
                    rho_b: uniform(s),
                    pi_b: Policy::uniform(h, s, a),
                    goal: None,
                }
            } else {
                let m: DiscountedRmdp = serde_json::from_str(&text)?;
                let m = m.with_sigma(sigma)?;
                let (s, a) = (m.num_states(), m.num_actions());
                BuiltInstance::Discounted {
                    model: m,
                    rho: uniform(s),
                    d_b: uniform(s * a),
                }
            }
        }
    })
}

/// Exact robust optimum for one radius, shared by all cells at that radius.
pub enum Optimum {
    Finite(StateTable),
    Discounted(StateTable),
}

pub fn exact_optimum(built: &BuiltInstance, cfg: &ExperimentConfig) -> Result<Optimum> {
    Ok(match built {
        BuiltInstance::Finite { model, .. } => Optimum::Finite(robust_value_optimal_finite(model, cfg.dual_tol)?.v),
        BuiltInstance::Discounted { model, .. } => Optimum::Discounted(
            robust_value_optimal_infinite(model, cfg.eval_tol, cfg.max_eval_iter, cfg.dual_tol)?.v,
        ),
    })
}

/// Empirical kernel plus the dataset size that enters the penalty.
struct Data {
    empirical: Option<EmpiricalKernel>,
    size: u64,
}

fn finite_data(built: &BuiltInstance, cfg: &ExperimentConfig, n: u64, seed: u64) -> Result<Data> {
    let BuiltInstance::Finite { model, rho_b, pi_b, .. } = built else {
        bail!("episodic data requested for a discounted model");
    };
    if n == 0 {
        return Ok(Data { empirical: None, size: 0 });
    }
    let empirical = match cfg.data {
        DataMode::PerPair => per_pair_empirical_kernel(model.kernel(), n, seed)?,
        DataMode::Episodes => {
            let episodes = generate_episodes(model, pi_b, rho_b, n as usize, seed)?;
            let split = two_fold_subsample(&episodes, cfg.penalty.delta, derive_seed(seed, SPLIT_SALT))?;
            build_empirical_kernel(&split.dataset)?
        }
        DataMode::Transitions => bail!("transitions data needs a discounted model"),
    };
    Ok(Data {
        empirical: Some(empirical),
        size: n,
    })
}

fn discounted_data(built: &BuiltInstance, cfg: &ExperimentConfig, n: u64, seed: u64) -> Result<Data> {
    let BuiltInstance::Discounted { model, d_b, .. } = built else {
        bail!("discounted data requested for an episodic model");
    };
    if n == 0 {
        return Ok(Data { empirical: None, size: 0 });
    }
    Ok(match cfg.data {
        DataMode::PerPair => Data {
            empirical: Some(per_pair_empirical_kernel(model.kernel(), n, seed)?),
            size: n * (model.num_states() * model.num_actions()) as u64,
        },
        DataMode::Transitions => Data {
            empirical: Some(build_empirical_kernel(&generate_transitions(model, d_b, n as usize, seed)?)?),
            size: n,
        },
        DataMode::Episodes => bail!("episodes data needs an episodic model"),
    })
}

/// Trains `algorithm` at radius `sigma` on a cell's data.
fn train(
    built: &BuiltInstance,
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    sigma: f64,
    n: u64,
    seed: u64,
) -> Result<SolveResult> {
    let tol = cfg.dual_tol;
    match built {
        BuiltInstance::Finite { model, .. } => {
            let data = finite_data(built, cfg, n, seed)?;
            let kernel = data.empirical.as_ref().map_or(model.kernel(), |e| e.p_hat());
            let reward = model.reward();
            Ok(match algorithm {
                Algorithm::Drvi => drvi_finite(kernel, reward, sigma, tol)?,
                Algorithm::NonRobustVi => drvi_finite(kernel, reward, 0.0, tol)?,
                Algorithm::DrviLcb => {
                    let (h, s, a) = kernel.shape();
                    let b = match &data.empirical {
                        Some(e) => penalty_finite(e, &cfg.penalty, h, sigma, data.size, s)?,
                        None => PenaltyTable::zeros(h, s, a),
                    };
                    drvi_lcb_finite(kernel, reward, sigma, &b, tol)?
                }
            })
        }
        BuiltInstance::Discounted { model, .. } => {
            let data = discounted_data(built, cfg, n, seed)?;
            let kernel = data.empirical.as_ref().map_or(model.kernel(), |e| e.p_hat());
            let (reward, gamma) = (model.reward(), model.gamma());
            let radius = if algorithm == Algorithm::NonRobustVi { 0.0 } else { sigma };
            let iterations = cfg.iterations.unwrap_or_else(|| {
                if radius > 0.0 && data.size > 0 {
                    default_iteration_count(radius, data.size, gamma)
                } else {
                    residual_iteration_count(cfg.eval_tol, gamma)
                }
            });
            Ok(match algorithm {
                Algorithm::Drvi | Algorithm::NonRobustVi => {
                    drvi_infinite(kernel, reward, radius, gamma, iterations, tol)?
                }
                Algorithm::DrviLcb => {
                    let s = model.num_states();
                    let b = match &data.empirical {
                        Some(e) => penalty_infinite(e, &cfg.penalty, gamma, sigma, data.size, s)?,
                        None => PenaltyTable::zeros(1, s, model.num_actions()),
                    };
                    drvi_lcb_infinite(kernel, reward, sigma, &b, gamma, iterations, tol)?
                }
            })
        }
    }
}

/// Smallest `m` with `gamma^m / (1 - gamma) <= tol`.
fn residual_iteration_count(tol: f64, gamma: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    ((tol * (1.0 - gamma)).ln() / gamma.ln()).ceil().max(1.0) as usize
}

fn policy_gap(built: &BuiltInstance, opt: &Optimum, cfg: &ExperimentConfig, policy: &Policy) -> Result<f64> {
    match (built, opt) {
        (BuiltInstance::Finite { model, rho, .. }, Optimum::Finite(v)) => {
            Ok(gap_against(v, model, policy, rho, cfg.dual_tol)?)
        }
        (BuiltInstance::Discounted { model, rho, .. }, Optimum::Discounted(v)) => {
            let pi = robust_policy_eval_infinite(model, policy, cfg.eval_tol, cfg.max_eval_iter, cfg.dual_tol)?;
            Ok((v.dot_step(0, rho) - pi.v.dot_step(0, rho)).max(0.0))
        }
        _ => bail!("optimum does not match the model"),
    }
}

fn rollout_seed(seed: u64) -> u64 {
    derive_seed(seed, ROLLOUT_SALT)
}

/// The `(sigma, sample_size, seed)` grid in config order.
pub fn cells(cfg: &ExperimentConfig) -> Vec<(f64, u64, u64)> {
    let mut out = Vec::new();
    for &sigma in &cfg.sigma_list {
        for &n in &cfg.sample_size_list {
            for &seed in &cfg.seed_list {
                out.push((sigma, n, seed));
            }
        }
    }
    out
}

fn run_cell(
    cfg: &ExperimentConfig,
    built: &BuiltInstance,
    opt: &Optimum,
    sigma: f64,
    n: u64,
    seed: u64,
) -> Result<ResultRow> {
    let start = Instant::now();
    let res = train(built, cfg, cfg.algorithm, sigma, n, seed)?;
    let gap = policy_gap(built, opt, cfg, &res.policy)?;
    let win_rate = match (built, cfg.win_rate_episodes) {
        (BuiltInstance::Finite { model, rho, goal: Some(g), .. }, Some(episodes)) => {
            Some(monte_carlo_win_rate(model, &res.policy, rho, *g, episodes, rollout_seed(seed))?)
        }
        _ => None,
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok(ResultRow {
        instance: cfg.instance.id(),
        algorithm: cfg.algorithm.as_str().into(),
        sigma,
        sample_size: n,
        seed,
        gap,
        wall_time_s: if cfg.record_wall_time { elapsed } else { 0.0 },
        iterations: res.iterations,
        win_rate,
        eval_param: None,
    })
}

/// Builds the instance and its exact optimum at every listed radius.
fn prepare(cfg: &ExperimentConfig) -> Result<Vec<(BuiltInstance, Optimum)>> {
    cfg.sigma_list
        .par_iter()
        .map(|&sigma| {
            let built = build_instance(&cfg.instance, sigma).with_context(|| format!("building instance at sigma={sigma}"))?;
            let opt = exact_optimum(&built, cfg).with_context(|| format!("exact optimum at sigma={sigma}"))?;
            Ok((built, opt))
        })
        .collect()
}

/// Runs every `(sigma, sample_size, seed)` cell. Cells run in parallel and
/// rows come back in config order; the first failing cell in that order is
/// reported with its coordinates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let grid = cells(cfg);
    let rows: Vec<Result<ResultRow>> = grid
        .par_iter()
        .map(|&(sigma, n, seed)| {
            let idx = cfg.sigma_list.iter().position(|&s| s == sigma).expect("sigma from the list");
            let (built, opt) = &prepared[idx];
            run_cell(cfg, built, opt, sigma, n, seed)
                .with_context(|| format!("cell sigma={sigma} sample_size={n} seed={seed}"))
        })
        .collect();
    rows.into_iter().collect()
}

/// Trains the configured robust algorithm at every listed radius plus the
/// non-robust baseline, then scores each policy by Monte Carlo win rate on
/// gambler models with perturbed `p_head`. The gap column holds each
/// policy's non-robust suboptimality on the perturbed model.
///
/// Rows are ordered by (sample_size, seed), then `p_head`, with the
/// non-robust row first.
pub fn run_robustness_eval(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let rob = cfg.robustness.as_ref().context("config has no [robustness] section")?;
    let InstanceConfig::Gambler {
        max_balance, horizon, ..
    } = cfg.instance
    else {
        bail!("robustness evaluation needs the gambler instance");
    };
    if cfg.algorithm == Algorithm::NonRobustVi {
        bail!("robustness evaluation compares a robust algorithm against non_robust_vi");
    }
    let nominal = build_instance(&cfg.instance, 0.0)?;

    let envs: Vec<(FiniteHorizonRmdp, StateTable, Vec<f64>, usize)> = rob
        .p_head_grid
        .par_iter()
        .map(|&p_head| {
            let spec = GamblersSpec {
                max_balance,
                p_head,
                horizon,
                sigma: 0.0,
            };
            let m = gamblers_problem(&spec).with_context(|| format!("evaluation model p_head={p_head}"))?;
            let v = drvi_finite(m.kernel(), m.reward(), 0.0, cfg.dual_tol)?.v;
            Ok((m, v, gambler_start(&spec), spec.goal_state()))
        })
        .collect::<Result<_>>()?;

    let mut units = Vec::new();
    for &n in &cfg.sample_size_list {
        for &seed in &cfg.seed_list {
            units.push((n, seed));
        }
    }
    let per_unit: Vec<Result<Vec<ResultRow>>> = units
        .par_iter()
        .map(|&(n, seed)| {
            let coords = || format!("cell sample_size={n} seed={seed}");
            let mut policies = vec![(Algorithm::NonRobustVi, 0.0, train(&nominal, cfg, Algorithm::NonRobustVi, 0.0, n, seed).with_context(coords)?)];
            for &sigma in &cfg.sigma_list {
                let res = train(&nominal, cfg, cfg.algorithm, sigma, n, seed)
                    .with_context(|| format!("cell sigma={sigma} sample_size={n} seed={seed}"))?;
                policies.push((cfg.algorithm, sigma, res));
            }
            let mut rows = Vec::new();
            for ((env, v_star, rho, goal), &p_head) in envs.iter().zip(&rob.p_head_grid) {
                for (alg, sigma, res) in &policies {
                    let start = Instant::now();
                    let win = monte_carlo_win_rate(env, &res.policy, rho, *goal, rob.episodes, rollout_seed(seed))
                        .with_context(coords)?;
                    let gap = gap_against(v_star, env, &res.policy, rho, cfg.dual_tol).with_context(coords)?;
                    let elapsed = start.elapsed().as_secs_f64();
                    rows.push(ResultRow {
                        instance: cfg.instance.id(),
                        algorithm: alg.as_str().into(),
                        sigma: *sigma,
                        sample_size: n,
                        seed,
                        gap,
                        wall_time_s: if cfg.record_wall_time { elapsed } else { 0.0 },
                        iterations: res.iterations,
                        win_rate: Some(win),
                        eval_param: Some(p_head),
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_unit {
        out.extend(rows?);
    }
    Ok(out)
}

/// Mean and spread of one `(instance, algorithm, sigma, sample_size,
/// eval_param)` group over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub instance: String,
    pub algorithm: String,
    pub sigma: f64,
    pub sample_size: u64,
    pub eval_param: Option<f64>,
    pub count: usize,
    pub mean_gap: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for one seed.
    pub std_gap: f64,
    pub stderr_gap: f64,
    pub mean_win_rate: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups rows by everything except the seed, in first-appearance order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    type Key = (String, String, u64, u64, Option<u64>);
    let key = |r: &ResultRow| -> Key {
        (
            r.instance.clone(),
            r.algorithm.clone(),
            r.sigma.to_bits(),
            r.sample_size,
            r.eval_param.map(f64::to_bits),
        )
    };
    let mut order: Vec<Key> = Vec::new();
    let mut groups: std::collections::HashMap<Key, Vec<&ResultRow>> = std::collections::HashMap::new();
    for r in rows {
        let k = key(r);
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let g = &groups[&k];
            let gaps: Vec<f64> = g.iter().map(|r| r.gap).collect();
            let (mean_gap, std_gap) = mean_std(&gaps);
            let wins: Vec<f64> = g.iter().filter_map(|r| r.win_rate).collect();
            AggregateRow {
                instance: g[0].instance.clone(),
                algorithm: g[0].algorithm.clone(),
                sigma: g[0].sigma,
                sample_size: g[0].sample_size,
                eval_param: g[0].eval_param,
                count: g.len(),
                mean_gap,
                std_gap,
                stderr_gap: std_gap / (g.len() as f64).sqrt(),
                mean_win_rate: (wins.len() == g.len()).then(|| mean_std(&wins).0),
            }
        })
        .collect()
}
