//! Recursive autoregressive multifidelity Gaussian process.
//!
//! Level 1 is a zero-mean GP with a Gaussian (squared-exponential, ARD)
//! kernel. Every higher level is modelled as
//! `f_l(x) = rho_l * f_{l-1}(x) + delta_l(x)` where `delta_l` is an
//! independent GP with constant mean `beta_l` and its own Gaussian kernel.
//!
//! Fidelity levels are 1-based throughout the public API (`1` is the
//! cheapest, `L` the most accurate). Inputs are stored in problem units and
//! mapped to the unit cube with the dataset bounds before any kernel is
//! evaluated, so roughness parameters are expressed in unit-cube coordinates.

mod covariance;
mod fit;
mod model;

pub use covariance::{assemble_kernel_matrix, kernel, CovarianceStructure};
pub use fit::{fit, FitConfig, FitReport, LevelFitReport};
pub use model::{log_marginal_likelihood, JointPosterior, MfGpModel, WORST_LOG_LIKELIHOOD};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MfgpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("fidelity level {level} outside 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },
    #[error("observation at level {level} lies outside the bounds: {x:?}")]
    OutOfBounds { x: Vec<f64>, level: usize },
    #[error("duplicate observation at level {level}: {x:?}")]
    Duplicate { x: Vec<f64>, level: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid bounds for coordinate {index}: [{lower}, {upper}]")]
    InvalidBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("invalid hyperparameters at level {level}: {reason}")]
    InvalidHyperparameters { level: usize, reason: String },
    #[error("level {level} has {found} observations, at least {required} required")]
    InsufficientData {
        level: usize,
        found: usize,
        required: usize,
    },
    #[error("kernel matrix is singular at level {level} even with maximum jitter")]
    Singular { level: usize },
    #[error("empty observation set")]
    Empty,
    #[error("invalid model document: {0}")]
    Document(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MfgpError>;

/// One evaluated point: location, fidelity level, observed objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub level: usize,
    pub y: f64,
}

/// The multifidelity dataset. Rejects duplicate `(x, level)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    bounds: Vec<(f64, f64)>,
    levels: usize,
    observations: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(bounds: Vec<(f64, f64)>, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(MfgpError::LevelOutOfRange { level: 0, levels });
        }
        for (index, &(lower, upper)) in bounds.iter().enumerate() {
            if !(lower.is_finite() && upper.is_finite() && upper > lower) {
                return Err(MfgpError::InvalidBounds {
                    index,
                    lower,
                    upper,
                });
            }
        }
        Ok(Self {
            bounds,
            levels,
            observations: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter()
    }

    pub fn at_level(&self, level: usize) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(move |o| o.level == level)
    }

    pub fn count_at(&self, level: usize) -> usize {
        self.at_level(level).count()
    }

    /// Maps a point from problem units to the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    /// Maps a point from the unit cube back to problem units, clamped to
    /// the bounds against rounding.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| (lo + v * (hi - lo)).clamp(*lo, *hi))
            .collect()
    }

    /// True if an observation at `level` lies within `tol` of `x` in
    /// unit-cube max-norm.
    pub fn contains_near(&self, x: &[f64], level: usize, tol: f64) -> bool {
        let u = self.to_unit(x);
        self.at_level(level).any(|o| {
            self.to_unit(&o.x)
                .iter()
                .zip(&u)
                .all(|(a, b)| (a - b).abs() <= tol)
        })
    }

    fn check_point(&self, x: &[f64], level: usize) -> Result<()> {
        if x.len() != self.dim() {
            return Err(MfgpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if level == 0 || level > self.levels {
            return Err(MfgpError::LevelOutOfRange {
                level,
                levels: self.levels,
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MfgpError::NonFinite("coordinate"));
        }
        let inside = x
            .iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
        if !inside {
            return Err(MfgpError::OutOfBounds {
                x: x.to_vec(),
                level,
            });
        }
        Ok(())
    }

    /// Appends an observation. Exact `(x, level)` duplicates are rejected.
    pub fn push(&mut self, obs: Observation) -> Result<()> {
        self.check_point(&obs.x, obs.level)?;
        if !obs.y.is_finite() {
            return Err(MfgpError::NonFinite("observed value"));
        }
        if self
            .observations
            .iter()
            .any(|o| o.level == obs.level && o.x == obs.x)
        {
            return Err(MfgpError::Duplicate {
                x: obs.x,
                level: obs.level,
            });
        }
        self.observations.push(obs);
        Ok(())
    }

    /// Keeps only observations at levels `1..=top`, relabelled as a
    /// `top`-level dataset.
    pub(crate) fn truncated(&self, top: usize) -> Self {
        Self {
            bounds: self.bounds.clone(),
            levels: top,
            observations: self
                .observations
                .iter()
                .filter(|o| o.level <= top)
                .cloned()
                .collect(),
        }
    }

    /// Stable reorder so that observations are grouped by ascending level.
    pub(crate) fn sorted_by_level(&self) -> Self {
        let mut out = self.clone();
        out.observations.sort_by_key(|o| o.level);
        out
    }
}

/// Kernel and autoregressive parameters of one fidelity level.
///
/// `scaling` (rho) and `trend` (beta) are absent for level 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelHyperparameters {
    pub roughness: Vec<f64>,
    pub process_variance: f64,
    #[serde(default)]
    pub scaling: Option<f64>,
    #[serde(default)]
    pub trend: Option<f64>,
}

impl LevelHyperparameters {
    pub fn base(roughness: Vec<f64>, process_variance: f64) -> Self {
        Self {
            roughness,
            process_variance,
            scaling: None,
            trend: None,
        }
    }

    pub fn discrepancy(roughness: Vec<f64>, process_variance: f64, scaling: f64, trend: f64) -> Self {
        Self {
            roughness,
            process_variance,
            scaling: Some(scaling),
            trend: Some(trend),
        }
    }

    /// Checks the invariants for a level (1-based) in a `dim`-dimensional
    /// model. Discrepancy levels may carry zero process variance.
    pub fn validate(&self, level: usize, dim: usize) -> Result<()> {
        let bad = |reason: String| MfgpError::InvalidHyperparameters { level, reason };
        if self.roughness.len() != dim {
            return Err(bad(format!(
                "{} roughness values for dimension {dim}",
                self.roughness.len()
            )));
        }
        if self.roughness.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(bad("roughness must be finite and positive".into()));
        }
        let var_ok = if level == 1 {
            self.process_variance > 0.0
        } else {
            self.process_variance >= 0.0
        };
        if !(self.process_variance.is_finite() && var_ok) {
            return Err(bad(format!("process variance {}", self.process_variance)));
        }
        match (level, self.scaling, self.trend) {
            (1, None, None) => Ok(()),
            (1, _, _) => Err(bad("level 1 has no scaling or trend".into())),
            (_, Some(rho), Some(beta)) if rho.is_finite() && beta.is_finite() => Ok(()),
            _ => Err(bad("scaling and trend must be present and finite".into())),
        }
    }
}

/// Posterior mean and variance of one level at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorStats {
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorStats {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}
