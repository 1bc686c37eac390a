use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use drorl::instances::HardInstanceSpec;
use drorl::solvers::PenaltyConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Drvi,
    DrviLcb,
    NonRobustVi,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Drvi => "drvi",
            Algorithm::DrviLcb => "drvi_lcb",
            Algorithm::NonRobustVi => "non_robust_vi",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonMode {
    Finite,
    Infinite,
}

/// How a cell's offline data is produced.
///
/// * `per_pair`: `sample_size` independent next-state draws for every
///   `(h, s, a)` (or `(s, a)`).
/// * `episodes`: `sample_size` behavior episodes, two-fold subsampled
///   (episodic mode only).
/// * `transitions`: `sample_size` i.i.d. `(s, a, s')` draws from `d_b`
///   (discounted mode only).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    #[default]
    PerPair,
    Episodes,
    Transitions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum InstanceConfig {
    Gambler {
        p_head: f64,
        #[serde(default = "default_max_balance")]
        max_balance: usize,
        #[serde(default = "default_gambler_horizon")]
        horizon: usize,
    },
    /// A hard construction; its `sigma` is replaced by each swept radius.
    Hard { spec: HardInstanceSpec },
    /// Random dense model. Episodic when `horizon` is set, discounted when
    /// `gamma` is set.
    Random {
        states: usize,
        actions: usize,
        horizon: Option<usize>,
        gamma: Option<f64>,
        seed: u64,
    },
    /// A model file in the core JSON format.
    ModelFile { path: PathBuf, finite: bool },
}

fn default_max_balance() -> usize {
    50
}

fn default_gambler_horizon() -> usize {
    100
}

impl InstanceConfig {
    pub fn id(&self) -> String {
        match self {
            InstanceConfig::Gambler { p_head, .. } => format!("gambler_p{p_head}"),
            InstanceConfig::Hard { spec } => {
                let family = serde_json::to_value(&spec.family)
                    .ok()
                    .and_then(|v| v.get("family").and_then(|f| f.as_str()).map(str::to_owned))
                    .unwrap_or_else(|| "hard".into());
                format!("hard_{family}")
            }
            InstanceConfig::Random { states, actions, seed, .. } => format!("random_s{states}_a{actions}_{seed}"),
            InstanceConfig::ModelFile { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into()),
        }
    }
}

/// Extra settings for the perturbed-environment evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    pub p_head_grid: Vec<f64>,
    #[serde(default = "default_rollouts")]
    pub episodes: usize,
}

fn default_rollouts() -> usize {
    3000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub algorithm: Algorithm,
    pub horizon_mode: HorizonMode,
    pub sigma_list: Vec<f64>,
    /// `0` trains on the exact nominal kernel instead of sampled data.
    pub sample_size_list: Vec<u64>,
    pub seed_list: Vec<u64>,
    #[serde(default)]
    pub data: DataMode,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default = "default_dual_tol")]
    pub dual_tol: f64,
    /// Residual target for discounted evaluation.
    #[serde(default = "default_eval_tol")]
    pub eval_tol: f64,
    #[serde(default = "default_max_eval_iter")]
    pub max_eval_iter: usize,
    /// Fixed discounted iteration count; by default it is derived from
    /// `(sigma, N, gamma)`.
    #[serde(default)]
    pub iterations: Option<usize>,
    /// Rollouts for the gambler win-rate column; omitted when absent.
    #[serde(default)]
    pub win_rate_episodes: Option<usize>,
    /// Record measured wall time. Off by default so repeated runs write
    /// identical bytes.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub robustness: Option<RobustnessConfig>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn default_dual_tol() -> f64 {
    drorl::kl_dual::DEFAULT_DUAL_TOL
}

fn default_eval_tol() -> f64 {
    1e-8
}

fn default_max_eval_iter() -> usize {
    1_000_000
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.sigma_list.is_empty(), "sigma_list is empty");
        ensure!(!self.sample_size_list.is_empty(), "sample_size_list is empty");
        ensure!(!self.seed_list.is_empty(), "seed_list is empty");
        for &s in &self.sigma_list {
            ensure!(s.is_finite() && s >= 0.0, "sigma {s} must be finite and nonnegative");
        }
        ensure!(self.dual_tol > 0.0 && self.eval_tol > 0.0, "tolerances must be positive");
        PenaltyConfig::new(self.penalty.c_b, self.penalty.delta)?;
        match (self.horizon_mode, self.data) {
            (HorizonMode::Finite, DataMode::Transitions) => bail!("transitions data needs horizon_mode = infinite"),
            (HorizonMode::Infinite, DataMode::Episodes) => bail!("episodes data needs horizon_mode = finite"),
            _ => {}
        }
        let finite = matches!(self.horizon_mode, HorizonMode::Finite);
        match &self.instance {
            InstanceConfig::Gambler { p_head, .. } => {
                ensure!(finite, "the gambler instance is episodic");
                ensure!(*p_head > 0.0 && *p_head < 1.0, "p_head must lie in (0, 1)");
            }
            InstanceConfig::Hard { spec } => {
                ensure!(spec.is_finite() == finite, "hard family does not match horizon_mode");
            }
            InstanceConfig::Random { horizon, gamma, .. } => {
                ensure!(
                    if finite { horizon.is_some() } else { gamma.is_some() },
                    "random instance needs `horizon` (finite) or `gamma` (infinite)"
                );
            }
            InstanceConfig::ModelFile { finite: f, .. } => ensure!(*f == finite, "model file does not match horizon_mode"),
        }
        if let Some(r) = &self.robustness {
            ensure!(!r.p_head_grid.is_empty(), "robustness.p_head_grid is empty");
            ensure!(r.episodes > 0, "robustness.episodes must be positive");
        }
        Ok(())
    }

    /// Fails when `output_path` is set but its directory is missing or read-only.
    pub fn check_output(&self) -> Result<()> {
        match &self.output_path {
            Some(p) => check_writable(p),
            None => Ok(()),
        }
    }
}

/// Fails early when `path` cannot be created or appended to.
pub fn check_writable(path: &Path) -> Result<()> {
    if path.exists() {
        ensure!(!path.is_dir(), "{} is a directory", path.display());
        let meta = std::fs::metadata(path)?;
        ensure!(!meta.permissions().readonly(), "{} is read-only", path.display());
    } else {
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        ensure!(dir.is_dir(), "output directory {} does not exist", dir.display());
    }
    Ok(())
}
