//! Study configuration files (JSON).
//!
//! ```json
//! {
//!   "problem": { "name": "cross_regime", "params": {} },
//!   "algorithm": "pa-mfbo",
//!   "bias": { "name": "mach", "index": 1 },
//!   "init_counts": [20, 10, 2],
//!   "b_max": 30,
//!   "seed": 0,
//!   "replications": 10,
//!   "checkpoints": [6.5, 10, 20, 30],
//!   "output_dir": "out/cross_regime/pa-mfbo"
//! }
//! ```
//!
//! Optional: `cost_ratios` (overrides the problem's), `reach_tol`
//! (reports the budget at which each run first comes within that distance
//! of the known optimum).

use std::path::{Path, PathBuf};

use pamfbo::acquisition::BiasSpec;
use pamfbo::optimizer::{Algorithm, InitPlan};
use pamfbo::problems::{by_name, MultifidelityProblem};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "PAMFBO_OUTPUT_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field(name: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: name.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: ProblemConfig,
    pub algorithm: Algorithm,
    /// Kept as raw JSON so that a bad bias is reported against this field.
    #[serde(default)]
    pub bias: Option<Value>,
    pub init_counts: Vec<usize>,
    pub b_max: f64,
    #[serde(default)]
    pub seed: u64,
    pub replications: usize,
    pub checkpoints: Vec<f64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cost_ratios: Option<Vec<f64>>,
    #[serde(default)]
    pub reach_tol: Option<f64>,
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn bias_spec(&self) -> Result<BiasSpec, ConfigError> {
        match &self.bias {
            None => Ok(BiasSpec::Identity),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| {
                field(
                    "bias",
                    format!("{e} (known biases: {})", BiasSpec::NAMES.join(", ")),
                )
            }),
        }
    }

    /// Problem instance for one replication, with any cost override applied.
    pub fn problem(&self, replication: usize) -> Result<MultifidelityProblem, ConfigError> {
        let mut p = by_name(&self.problem.name, &self.problem.params, replication)
            .map_err(|e| field("problem", e.to_string()))?;
        if let Some(ratios) = &self.cost_ratios {
            if ratios.len() != p.levels() {
                return Err(field(
                    "cost_ratios",
                    format!("{} entries for a {}-level problem", ratios.len(), p.levels()),
                ));
            }
            if ratios.last() != Some(&1.0) {
                return Err(field(
                    "cost_ratios",
                    format!("the top-level cost lambda^(L) must be 1, got {:?}", ratios.last()),
                ));
            }
            p.set_cost_ratios(ratios.clone())
                .map_err(|e| field("cost_ratios", e.to_string()))?;
        }
        Ok(p)
    }

    pub fn plan(&self, replication: usize) -> InitPlan {
        InitPlan {
            counts: self.init_counts.clone(),
            seed: self.seed_for(replication),
        }
    }

    pub fn seed_for(&self, replication: usize) -> u64 {
        self.seed.wrapping_add(replication as u64)
    }

    /// `output_dir`, placed under `$PAMFBO_OUTPUT_ROOT` when that is set and
    /// the directory is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => Path::new(&root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Schema and bounds checks that need no optimization run.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replications == 0 {
            return Err(field("replications", "must be at least 1"));
        }
        if !(self.b_max.is_finite() && self.b_max > 0.0) {
            return Err(field("b_max", format!("must be finite and positive, got {}", self.b_max)));
        }
        if self.checkpoints.is_empty() {
            return Err(field("checkpoints", "needs at least one budget"));
        }
        if self.checkpoints.iter().any(|c| !c.is_finite()) {
            return Err(field("checkpoints", "budgets must be finite"));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field("checkpoints", "must be sorted ascending without repeats"));
        }
        if let Some(tol) = self.reach_tol {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(field("reach_tol", "must be finite and non-negative"));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(field("output_dir", "must not be empty"));
        }
        let bias = self.bias_spec()?;

        for r in 0..self.replications {
            let p = self.problem(r)?;
            if r == 0 {
                self.check_counts(&p)?;
                if self.algorithm == pamfbo::optimizer::Algorithm::PaMfbo {
                    bias.compile(p.coordinates())
                        .map_err(|e| field("bias", e.to_string()))?;
                }
                if self.reach_tol.is_some() && p.ground_truth().is_none() {
                    return Err(field("reach_tol", "the problem has no known optimum"));
                }
            }
        }
        Ok(())
    }

    fn check_counts(&self, p: &MultifidelityProblem) -> Result<(), ConfigError> {
        let levels = p.levels();
        let counts = &self.init_counts;
        if counts.len() != levels {
            return Err(field(
                "init_counts",
                format!("{} entries for a {levels}-level problem", counts.len()),
            ));
        }
        let (used, lowest) = match self.algorithm {
            Algorithm::Ego => {
                if counts[..levels - 1].iter().any(|&c| c > 0) {
                    return Err(field(
                        "init_counts",
                        "EGO evaluates only the top level; lower-level counts must be 0",
                    ));
                }
                (&counts[levels - 1..], counts[levels - 1])
            }
            _ => (&counts[..], counts[0]),
        };
        if let Some(c) = used.iter().find(|&&c| c < 2) {
            return Err(field("init_counts", format!("every modelled level needs at least 2 points, got {c}")));
        }
        if lowest < p.dim() + 1 {
            return Err(field(
                "init_counts",
                format!("the lowest modelled level needs at least d + 1 = {} points", p.dim() + 1),
            ));
        }
        let lambdas = p.cost_ratios();
        let initial: f64 = used
            .iter()
            .zip(&lambdas[levels - used.len()..])
            .map(|(&n, l)| n as f64 * l)
            .sum();
        if self.b_max + pamfbo::optimizer::BUDGET_SLACK * self.b_max < initial {
            return Err(field(
                "b_max",
                format!("{} is below the initial design cost {initial}", self.b_max),
            ));
        }
        Ok(())
    }
}
