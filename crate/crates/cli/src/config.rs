//! Declarative experiment configuration. Precedence: command-line flags,
//! then the config file, then built-in defaults.

use std::path::{Path, PathBuf};

use klmc_core::Algorithm;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Sample,
    Converge,
    Order,
    Contraction,
    Tune,
    Regions,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::Converge => "converge",
            ExperimentKind::Order => "order",
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::Tune => "tune",
            ExperimentKind::Regions => "regions",
        })
    }
}

/// Target zoo entry or dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSpec {
    /// `f(x) = ½ Σ λᵢ xᵢ²`.
    Quadratic { lambdas: Vec<f64> },
    /// `f(x) = (λ/2)‖x‖²` in `dim` dimensions.
    Isotropic { dim: usize, lambda: f64 },
    /// Bayesian logistic regression on a CSV dataset (last column labels).
    Logistic {
        dataset: PathBuf,
        #[serde(default = "one")]
        prior_precision: f64,
    },
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::Isotropic { dim: 2, lambda: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub algorithm: Algorithm,
    /// Defaults to `√(m+M)`.
    pub gamma: Option<f64>,
    pub u: f64,
    pub h: f64,
    pub steps: usize,
    pub thin: usize,
    /// Defaults to the minimizer.
    pub theta0: Option<Vec<f64>>,
    pub zero_velocity: bool,
    pub substep: Option<f64>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Klmc,
            gamma: None,
            u: 1.0,
            h: 0.01,
            steps: 5000,
            thin: 250,
            theta0: None,
            zero_velocity: false,
            substep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub n_chains: usize,
    /// Use the sharper exponential tail in the second-order bound.
    pub sharp_tail: bool,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            n_chains: 64,
            sharp_tail: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderSection {
    pub hs: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
}

impl Default for OrderSection {
    fn default() -> Self {
        Self {
            hs: vec![0.2, 0.1, 0.05, 0.025],
            algorithms: vec![Algorithm::Klmc, Algorithm::Klmc2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionSection {
    /// Defaults to `√(m+M)`, `√(3m+M)` and `2√M`.
    pub gammas: Option<Vec<f64>>,
    pub t_max: f64,
    /// Euler–Maruyama substep for coupled pairs on non-quadratic targets.
    pub h_fine: f64,
    pub n_pairs: usize,
    pub record_every: usize,
    pub residual_threshold: f64,
}

impl Default for ContractionSection {
    fn default() -> Self {
        Self {
            gammas: None,
            t_max: 30.0,
            h_fine: 1e-3,
            n_pairs: 32,
            record_every: 50,
            residual_threshold: 1e-3,
        }
    }
}

/// Constants default to those of the target; `w2_init` defaults to
/// `√(‖θ₀ − x*‖² + p/m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub m: Option<f64>,
    #[serde(rename = "M")]
    pub big_m: Option<f64>,
    pub m2: Option<f64>,
    pub p: Option<usize>,
    pub epsilon: f64,
    pub w2_init: Option<f64>,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            m: None,
            big_m: None,
            m2: None,
            p: None,
            epsilon: 0.1,
            w2_init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionsSection {
    pub log10_scale: (f64, f64),
    pub log10_kappa: (f64, f64),
    pub n_scale: usize,
    pub n_kappa: usize,
    pub w2_over_eps: f64,
}

impl Default for RegionsSection {
    fn default() -> Self {
        Self {
            log10_scale: (-2.0, 8.0),
            log10_kappa: (0.0, 6.0),
            n_scale: 101,
            n_kappa: 61,
            w2_over_eps: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    pub experiment: Option<ExperimentKind>,
    /// Drawn from OS entropy and recorded when absent.
    pub seed: Option<u64>,
    /// Output directory; defaults to `runs/<experiment>-<run id>`.
    pub out: Option<PathBuf>,
    pub target: TargetSpec,
    pub sampler: SamplerSection,
    pub metrics: MetricsSection,
    pub order: OrderSection,
    pub contraction: ContractionSection,
    pub tune: TuneSection,
    pub regions: RegionsSection,
}

impl ExperimentConfig {
    /// Parses TOML; errors carry the line, column and offending field.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a TOML config, or the config echo of a `report.json`.
    /// Relative dataset paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<crate::ExperimentReport>(&text)
                .map(|r| r.config)
                .map_err(|e| e.to_string())
        } else {
            toml::from_str::<Self>(&text).map_err(|e| e.to_string())
        };
        let mut cfg = parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let TargetSpec::Logistic { dataset, .. } = &mut cfg.target {
            if dataset.is_relative() {
                if let Some(dir) = path.parent() {
                    *dataset = dir.join(&*dataset);
                }
            }
        }
        Ok(cfg)
    }

    /// TOML integers are signed, so seeds must be below 2^63.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
    }
}
