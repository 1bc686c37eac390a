//! Experiment harness around the `drorl` solvers: sweeps over radius,
//! sample size and seed, perturbed-environment win rates, and CSV output.

pub mod config;
pub mod experiment;
pub mod output;

use anyhow::{bail, Result};
use drorl::dataset::{generate_episodes, generate_per_pair, generate_transitions, TransitionDataset};
use drorl::instances::hard_instance_closed_form_value;
use serde::Serialize;

pub use config::{Algorithm, DataMode, ExperimentConfig, HorizonMode, InstanceConfig};
pub use experiment::{aggregate, run_experiment, run_robustness_eval, AggregateRow, ResultRow};

use experiment::{build_instance, exact_optimum, BuiltInstance, Optimum};

/// Applies `--seed-offset` to every listed seed.
pub fn apply_seed_offset(cfg: &mut ExperimentConfig, offset: u64) {
    for s in &mut cfg.seed_list {
        *s = s.wrapping_add(offset);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub instance: String,
    pub sigma: f64,
    /// Robust optimal value averaged over the start distribution.
    pub value_at_rho: f64,
    pub value_state0: f64,
}

/// Exact robust optimum of the configured instance at every listed radius.
pub fn solve_exact(cfg: &ExperimentConfig) -> Result<Vec<SolveReport>> {
    cfg.sigma_list
        .iter()
        .map(|&sigma| {
            let built = build_instance(&cfg.instance, sigma)?;
            let rho = match &built {
                BuiltInstance::Finite { rho, .. } | BuiltInstance::Discounted { rho, .. } => rho.clone(),
            };
            let v = match exact_optimum(&built, cfg)? {
                Optimum::Finite(v) | Optimum::Discounted(v) => v,
            };
            Ok(SolveReport {
                instance: cfg.instance.id(),
                sigma,
                value_at_rho: v.dot_step(0, &rho),
                value_state0: v.get(0, 0),
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct HardCheck {
    pub sigma: f64,
    pub closed_form: f64,
    pub solver: f64,
    pub abs_diff: f64,
}

/// Solver value at state 0 against the closed form, at every listed radius.
pub fn hard_instance_check(cfg: &ExperimentConfig) -> Result<Vec<HardCheck>> {
    let InstanceConfig::Hard { spec } = &cfg.instance else {
        bail!("hard-instance-check needs a hard instance");
    };
    cfg.sigma_list
        .iter()
        .map(|&sigma| {
            let mut spec = spec.clone();
            spec.sigma = sigma;
            let closed_form = hard_instance_closed_form_value(&spec)?;
            let built = build_instance(&cfg.instance, sigma)?;
            let solver = match exact_optimum(&built, cfg)? {
                Optimum::Finite(v) | Optimum::Discounted(v) => v.get(0, 0),
            };
            Ok(HardCheck {
                sigma,
                closed_form,
                solver,
                abs_diff: (solver - closed_form).abs(),
            })
        })
        .collect()
}

/// Raw offline data for the first listed sample size and seed.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<TransitionDataset> {
    let (n, seed) = (cfg.sample_size_list[0], cfg.seed_list[0]);
    if n == 0 {
        bail!("sample size 0 means exact-model training; there is no dataset to generate");
    }
    let built = build_instance(&cfg.instance, cfg.sigma_list[0])?;
    Ok(match (&built, cfg.data) {
        (BuiltInstance::Finite { model, .. }, DataMode::PerPair) => generate_per_pair(model.kernel(), true, n, seed)?,
        (BuiltInstance::Discounted { model, .. }, DataMode::PerPair) => {
            generate_per_pair(model.kernel(), false, n, seed)?
        }
        (BuiltInstance::Finite { model, rho_b, pi_b, .. }, DataMode::Episodes) => {
            generate_episodes(model, pi_b, rho_b, n as usize, seed)?.transitions()
        }
        (BuiltInstance::Discounted { model, d_b, .. }, DataMode::Transitions) => {
            generate_transitions(model, d_b, n as usize, seed)?
        }
        _ => bail!("data mode does not match the model"),
    })
}
