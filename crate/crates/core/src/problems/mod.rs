//! Synthetic multifidelity benchmarks.
//!
//! * [`forrester_pair`]: the classic 1-D two-fidelity pair.
//! * [`cross_regime_problem`]: 2-D, three fidelities whose error grows with
//!   a Mach-like physics variable.
//! * [`plate_identification_problem`]: 4-D damage identification on
//!   synthetic strain fields, two fidelities.

mod cross_regime;
mod forrester;
mod plate;

pub use cross_regime::{cross_regime_problem, shock_term, CROSS_REGIME_OPTIMUM};
pub use forrester::{forrester_hf, forrester_lf, forrester_pair, FORRESTER_OPTIMUM};
pub use plate::{
    discrepancy_rmse, plate_identification_problem, sample_plate_truths, Normalization, PlateModel,
    StrainField, PLATE_BOUNDS, RMSE_FLOOR,
};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("level {level} outside 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },
    #[error("point {x:?} outside the problem bounds")]
    OutOfBounds { x: Vec<f64> },
    #[error("level-{level} evaluator returned a non-finite value at {x:?}")]
    NonFinite { level: usize, x: Vec<f64> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown problem '{name}' (known: {known})")]
    Unknown { name: String, known: String },
    #[error("fields differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference entries below the floor at indices {0:?}")]
    BelowFloor(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Known answer for a problem: an optimum for design problems, the hidden
/// parameters for identification problems (where the optimum value is 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub x: Vec<f64>,
    pub value: f64,
}

/// `L` deterministic evaluators of one objective with per-level costs.
#[derive(Clone)]
pub struct MultifidelityProblem {
    name: String,
    coordinates: Vec<String>,
    bounds: Vec<(f64, f64)>,
    cost_ratios: Vec<f64>,
    evaluators: Vec<Evaluator>,
    psi_indices: Vec<usize>,
    psi_description: String,
    ground_truth: Option<GroundTruth>,
}

impl fmt::Debug for MultifidelityProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultifidelityProblem")
            .field("name", &self.name)
            .field("bounds", &self.bounds)
            .field("cost_ratios", &self.cost_ratios)
            .finish_non_exhaustive()
    }
}

/// JSON description of a problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemManifest {
    pub name: String,
    pub d: usize,
    #[serde(rename = "L")]
    pub levels: usize,
    pub coordinates: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
    pub cost_ratios: Vec<f64>,
    pub psi: String,
    pub psi_indices: Vec<usize>,
    pub ground_truth: Option<GroundTruth>,
}

impl MultifidelityProblem {
    /// Evaluators are ordered from lowest to highest fidelity.
    pub fn new(
        name: impl Into<String>,
        coordinates: Vec<String>,
        bounds: Vec<(f64, f64)>,
        cost_ratios: Vec<f64>,
        evaluators: Vec<Evaluator>,
    ) -> Result<Self> {
        if coordinates.len() != bounds.len() {
            return Err(ProblemError::DimensionMismatch {
                expected: bounds.len(),
                got: coordinates.len(),
            });
        }
        if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(ProblemError::InvalidParameter("bounds must be finite with lo < hi".into()));
        }
        if evaluators.is_empty() || evaluators.len() != cost_ratios.len() {
            return Err(ProblemError::InvalidParameter(format!(
                "{} evaluators for {} cost ratios",
                evaluators.len(),
                cost_ratios.len()
            )));
        }
        let mut p = Self {
            name: name.into(),
            coordinates,
            bounds,
            cost_ratios: Vec::new(),
            evaluators,
            psi_indices: Vec::new(),
            psi_description: "none".into(),
            ground_truth: None,
        };
        p.set_cost_ratios(cost_ratios)?;
        Ok(p)
    }

    pub fn with_psi(mut self, indices: Vec<usize>, description: impl Into<String>) -> Self {
        self.psi_indices = indices;
        self.psi_description = description.into();
        self
    }

    pub fn with_ground_truth(mut self, truth: GroundTruth) -> Self {
        self.ground_truth = Some(truth);
        self
    }

    /// Replaces the per-level costs; they must be strictly increasing and
    /// end at 1.
    pub fn set_cost_ratios(&mut self, cost_ratios: Vec<f64>) -> Result<()> {
        if cost_ratios.len() != self.evaluators.len() {
            return Err(ProblemError::InvalidParameter(format!(
                "cost_ratios: {} values for {} levels",
                cost_ratios.len(),
                self.evaluators.len()
            )));
        }
        if cost_ratios.last() != Some(&1.0) {
            return Err(ProblemError::InvalidParameter(format!(
                "cost_ratios: top level must cost exactly 1, got {:?}",
                cost_ratios.last()
            )));
        }
        if cost_ratios.iter().any(|l| !(*l > 0.0)) || cost_ratios.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProblemError::InvalidParameter(format!(
                "cost_ratios: must be positive and strictly increasing, got {cost_ratios:?}"
            )));
        }
        self.cost_ratios = cost_ratios;
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn levels(&self) -> usize {
        self.evaluators.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn cost_ratios(&self) -> &[f64] {
        &self.cost_ratios
    }

    pub fn coordinates(&self) -> &[String] {
        &self.coordinates
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    /// Physics variables extracted from `x`.
    pub fn psi(&self, x: &[f64]) -> Vec<f64> {
        self.psi_indices.iter().map(|&i| x[i]).collect()
    }

    pub fn psi_indices(&self) -> &[usize] {
        &self.psi_indices
    }

    /// Objective at fidelity `level` (1-based).
    pub fn evaluate(&self, x: &[f64], level: usize) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if level == 0 || level > self.levels() {
            return Err(ProblemError::LevelOutOfRange {
                level,
                levels: self.levels(),
            });
        }
        if x
            .iter()
            .zip(&self.bounds)
            .any(|(v, (lo, hi))| !(v >= lo && v <= hi))
        {
            return Err(ProblemError::OutOfBounds { x: x.to_vec() });
        }
        let y = (self.evaluators[level - 1])(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(ProblemError::NonFinite {
                level,
                x: x.to_vec(),
            })
        }
    }

    /// Single-fidelity view of the top level, at cost 1.
    pub fn top_level_only(&self) -> Self {
        Self {
            name: format!("{}[top]", self.name),
            coordinates: self.coordinates.clone(),
            bounds: self.bounds.clone(),
            cost_ratios: vec![1.0],
            evaluators: vec![self.evaluators[self.levels() - 1].clone()],
            psi_indices: self.psi_indices.clone(),
            psi_description: self.psi_description.clone(),
            ground_truth: self.ground_truth.clone(),
        }
    }

    pub fn manifest(&self) -> ProblemManifest {
        ProblemManifest {
            name: self.name.clone(),
            d: self.dim(),
            levels: self.levels(),
            coordinates: self.coordinates.clone(),
            bounds: self.bounds.clone(),
            cost_ratios: self.cost_ratios.clone(),
            psi: self.psi_description.clone(),
            psi_indices: self.psi_indices.clone(),
            ground_truth: self.ground_truth.clone(),
        }
    }
}

pub const PROBLEM_NAMES: [&str; 3] = ["forrester", "cross_regime", "plate"];

fn reject_unknown_keys(params: &Value, allowed: &[&str]) -> Result<()> {
    match params {
        Value::Null => Ok(()),
        Value::Object(map) => {
            for k in map.keys() {
                if !allowed.contains(&k.as_str()) {
                    return Err(ProblemError::InvalidParameter(format!(
                        "unknown parameter '{k}' (allowed: {})",
                        if allowed.is_empty() { "none".to_string() } else { allowed.join(", ") }
                    )));
                }
            }
            Ok(())
        }
        _ => Err(ProblemError::InvalidParameter("params must be an object".into())),
    }
}

/// Builds a registered problem.
///
/// `plate` takes either `{"q_true": [q1, q2, q3, q4]}` or
/// `{"truths": {"count": n, "seed": s}}`; in the latter case replication
/// `r` uses the `r mod n`-th sampled truth.
pub fn by_name(name: &str, params: &Value, replication: usize) -> Result<MultifidelityProblem> {
    match name {
        "forrester" => {
            reject_unknown_keys(params, &[])?;
            Ok(forrester_pair())
        }
        "cross_regime" => {
            reject_unknown_keys(params, &[])?;
            Ok(cross_regime_problem())
        }
        "plate" => {
            reject_unknown_keys(params, &["q_true", "truths", "normalization"])?;
            let normalization = match params.get("normalization") {
                None => Normalization::Reference,
                Some(v) => serde_json::from_value(v.clone()).map_err(|e| {
                    ProblemError::InvalidParameter(format!("normalization: {e}"))
                })?,
            };
            let q_true = match (params.get("q_true"), params.get("truths")) {
                (Some(q), None) => serde_json::from_value::<[f64; 4]>(q.clone())
                    .map_err(|e| ProblemError::InvalidParameter(format!("q_true: {e}")))?,
                (None, Some(t)) => {
                    let spec: TruthSampling = serde_json::from_value(t.clone())
                        .map_err(|e| ProblemError::InvalidParameter(format!("truths: {e}")))?;
                    if spec.count == 0 {
                        return Err(ProblemError::InvalidParameter("truths.count must be >= 1".into()));
                    }
                    sample_plate_truths(spec.count, spec.seed)[replication % spec.count]
                }
                _ => {
                    return Err(ProblemError::InvalidParameter(
                        "plate needs exactly one of 'q_true' or 'truths'".into(),
                    ))
                }
            };
            plate_identification_problem(q_true, normalization)
        }
        other => Err(ProblemError::Unknown {
            name: other.to_string(),
            known: PROBLEM_NAMES.join(", "),
        }),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthSampling {
    count: usize,
    seed: u64,
}
